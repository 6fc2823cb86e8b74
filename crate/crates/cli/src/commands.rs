//! Implementations of the subcommands. Each one resolves a [`RunConfig`],
//! echoes it next to its artifacts, prints machine-readable results to
//! standard output, and keeps human-oriented logs on standard error.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use adtext_core::checkpoint::Checkpoint;
use adtext_core::corpus::{
    dedup, load_corpus, normalize, normalize_records, to_examples, LabelMap, RawRecord,
};
use adtext_core::encoder::{argmax_rows, classify, softmax_rows, ModelParams};
use adtext_core::metrics::{evaluate, render_report, ConfusionMatrix, ReportFormat};
use adtext_core::tokenizer::Vocabulary;
use adtext_core::train::{
    encode_all, evaluate_classifier, finetune, pretrain_mlm, EvalOutcome,
};
use adtext_core::{Error, Result};

use crate::config::RunConfig;

/// Directory used when a command that writes artifacts gets no `out` setting.
const DEFAULT_OUT: &str = "adtext-out";

fn require_data(config: &RunConfig) -> Result<&Path> {
    config
        .data
        .as_deref()
        .ok_or_else(|| Error::Config("this command needs --data".to_string()))
}

fn require_checkpoint(config: &RunConfig) -> Result<&Path> {
    config
        .checkpoint
        .as_deref()
        .ok_or_else(|| Error::Config("this command needs --checkpoint".to_string()))
}

/// Creates the output directory and drops the resolved configuration into it.
fn prepare_out(config: &RunConfig, out: &Path) -> Result<()> {
    std::fs::create_dir_all(out)
        .map_err(|e| Error::Config(format!("cannot create {}: {e}", out.display())))?;
    write_artifact(out, "config.txt", config.echo().as_bytes())?;
    Ok(())
}

fn write_artifact(out: &Path, name: &str, bytes: &[u8]) -> Result<PathBuf> {
    let path = out.join(name);
    std::fs::write(&path, bytes)
        .map_err(|e| Error::Config(format!("cannot write {}: {e}", path.display())))?;
    Ok(path)
}

/// Loads, normalizes, and optionally deduplicates the corpus behind `--data`.
fn load_prepared(config: &RunConfig, turkish: bool, dedup_records: bool) -> Result<Vec<RawRecord>> {
    let path = require_data(config)?;
    let mut records = load_corpus(path, config.format_for(path))?;
    normalize_records(&mut records, turkish);
    let before = records.len();
    if dedup_records {
        records = dedup(records);
        if records.len() < before {
            eprintln!("dropped {} duplicate record(s)", before - records.len());
        }
    }
    Ok(records)
}

/// Loads the vocabulary from `vocab` if set, otherwise builds one from the
/// prepared records.
fn obtain_vocab(config: &RunConfig, records: &[RawRecord]) -> Result<Vocabulary> {
    match &config.vocab {
        Some(path) => Vocabulary::load(path),
        None => {
            let vocab = Vocabulary::build(
                records.iter().map(|r| r.text.as_str()),
                config.vocab_size,
                config.min_freq,
            )?;
            eprintln!(
                "built vocabulary of {} tokens from {} records",
                vocab.len(),
                records.len()
            );
            Ok(vocab)
        }
    }
}

fn report_file_name(format: ReportFormat) -> &'static str {
    match format {
        ReportFormat::Text => "report.txt",
        ReportFormat::Markdown => "report.md",
        ReportFormat::Csv => "report.csv",
    }
}

fn write_evaluation(config: &RunConfig, out: &Path, eval: &EvalOutcome) -> Result<()> {
    let rendered = render_report(&eval.report, config.report_format);
    write_artifact(out, report_file_name(config.report_format), rendered.as_bytes())?;
    write_artifact(out, "confusion.csv", eval.confusion.to_csv().as_bytes())?;
    Ok(())
}

pub fn build_vocab(config: &RunConfig) -> Result<()> {
    let out = config.out.clone().unwrap_or_else(|| DEFAULT_OUT.into());
    let records = load_prepared(config, config.turkish_lowercase, true)?;
    let vocab = Vocabulary::build(
        records.iter().map(|r| r.text.as_str()),
        config.vocab_size,
        config.min_freq,
    )?;
    prepare_out(config, &out)?;
    let path = write_artifact(&out, "vocab.txt", vocab.to_file_string().as_bytes())?;
    println!("tokens={}", vocab.len());
    println!("vocab={}", path.display());
    Ok(())
}

pub fn pretrain(config: &RunConfig) -> Result<()> {
    let out = config.out.clone().unwrap_or_else(|| DEFAULT_OUT.into());
    let records = load_prepared(config, config.turkish_lowercase, true)?;
    let labels = LabelMap::from_categories(records.iter().map(|r| r.category.as_str()));
    let vocab = obtain_vocab(config, &records)?;
    let model = ModelParams::init(config.model_config(vocab.len(), labels.len()), config.seed)?;
    let texts: Vec<String> = records.into_iter().map(|r| r.text).collect();

    eprintln!(
        "pretraining on {} texts for {} iteration(s)",
        texts.len(),
        config.epochs
    );
    let outcome = pretrain_mlm(
        model,
        &vocab,
        labels.names(),
        &texts,
        config.turkish_lowercase,
        &config.train_config(),
    )?;

    prepare_out(config, &out)?;
    let cp_path = write_artifact(&out, "checkpoint.bin", &outcome.checkpoint.to_bytes())?;
    let mut losses_csv = String::from("iteration,loss\n");
    for (i, loss) in outcome.losses.iter().enumerate() {
        losses_csv.push_str(&format!("{i},{loss:.6}\n"));
    }
    write_artifact(&out, "mlm_losses.csv", losses_csv.as_bytes())?;

    println!("initial_loss={:.6}", outcome.losses.first().expect("measured"));
    println!("final_loss={:.6}", outcome.losses.last().expect("measured"));
    println!("checkpoint={}", cp_path.display());
    Ok(())
}

pub fn finetune_cmd(config: &RunConfig) -> Result<()> {
    let out = config.out.clone().unwrap_or_else(|| DEFAULT_OUT.into());

    // A starting checkpoint fixes the preprocessing, vocabulary, and label
    // set; otherwise all three come from the config and the data.
    let start = config
        .checkpoint
        .as_deref()
        .map(Checkpoint::load)
        .transpose()?;
    let turkish = start
        .as_ref()
        .map_or(config.turkish_lowercase, |cp| cp.turkish_lowercase);
    let records = load_prepared(config, turkish, true)?;

    let (model, vocab, labels) = match start {
        Some(cp) => {
            let labels = LabelMap::from_names(cp.label_names)?;
            (cp.params, cp.vocab, labels)
        }
        None => {
            let labels = LabelMap::from_categories(records.iter().map(|r| r.category.as_str()));
            let vocab = obtain_vocab(config, &records)?;
            let model =
                ModelParams::init(config.model_config(vocab.len(), labels.len()), config.seed)?;
            (model, vocab, labels)
        }
    };

    let examples = to_examples(&records, &labels)?;
    let split = adtext_core::corpus::stratified_split(
        &examples,
        &labels,
        config.train_fraction,
        config.seed,
    )?;
    eprintln!(
        "fine-tuning on {} train / {} test examples for {} iteration(s)",
        split.train.len(),
        split.test.len(),
        config.epochs
    );

    let outcome = finetune(
        model,
        &vocab,
        labels.names(),
        &split.train,
        &split.test,
        turkish,
        &config.train_config(),
    )?;

    // Report the selected iteration's weights on the test split.
    let test_enc = encode_all(
        split.test.iter().map(|e| e.text.as_str()),
        &vocab,
        outcome.checkpoint.params.config.max_seq,
    )?;
    let test_labels: Vec<usize> = split.test.iter().map(|e| e.label).collect();
    let eval = evaluate_classifier(
        &outcome.checkpoint.params,
        &test_enc,
        &test_labels,
        labels.names(),
        config.batch_size,
    )?;

    prepare_out(config, &out)?;
    let cp_path = write_artifact(&out, "checkpoint.bin", &outcome.checkpoint.to_bytes())?;
    write_artifact(&out, "trace.csv", outcome.trace.to_csv().as_bytes())?;
    write_evaluation(config, &out, &eval)?;

    println!("selected_iteration={}", outcome.trace.selected_iteration);
    println!("test_accuracy={:.6}", eval.accuracy);
    println!("test_weighted_f1={:.6}", eval.weighted_f1);
    println!("train_size={}", split.train.len());
    println!("test_size={}", split.test.len());
    println!("checkpoint={}", cp_path.display());
    Ok(())
}

pub fn evaluate_cmd(config: &RunConfig) -> Result<()> {
    let out = config.out.clone().unwrap_or_else(|| DEFAULT_OUT.into());
    let cp = Checkpoint::load(require_checkpoint(config)?)?;
    let records = load_prepared(config, cp.turkish_lowercase, true)?;
    let labels = LabelMap::from_names(cp.label_names.clone())?;
    let examples = to_examples(&records, &labels)?;

    let encodings = encode_all(
        examples.iter().map(|e| e.text.as_str()),
        &cp.vocab,
        cp.params.config.max_seq,
    )?;
    let truth: Vec<usize> = examples.iter().map(|e| e.label).collect();
    let eval = evaluate_classifier(
        &cp.params,
        &encodings,
        &truth,
        labels.names(),
        config.batch_size,
    )?;

    prepare_out(config, &out)?;
    write_evaluation(config, &out, &eval)?;
    print!("{}", render_report(&eval.report, config.report_format));
    Ok(())
}

pub fn predict(config: &RunConfig, texts: &[String]) -> Result<()> {
    if texts.is_empty() {
        return Err(Error::Config("predict needs at least one text".to_string()));
    }
    let cp = Checkpoint::load(require_checkpoint(config)?)?;
    let normalized: Vec<String> = texts
        .iter()
        .map(|t| normalize(t, cp.turkish_lowercase))
        .collect();
    let encodings = encode_all(
        normalized.iter().map(String::as_str),
        &cp.vocab,
        cp.params.config.max_seq,
    )?;
    let logits = classify(&cp.params, &encodings)?;
    let predictions = argmax_rows(&logits);
    let distributions = softmax_rows(&logits);

    let mut lines = String::new();
    for (pred, probs) in predictions.iter().zip(&distributions) {
        // Nine decimals keep the printed distribution summing to 1 within
        // 1e-6 even across twelve classes.
        let rendered: Vec<String> = probs.iter().map(|p| format!("{p:.9}")).collect();
        lines.push_str(&format!("{}\t{}\n", cp.label_names[*pred], rendered.join(" ")));
    }
    print!("{lines}");

    if let Some(out) = &config.out {
        prepare_out(config, out)?;
        write_artifact(out, "predictions.tsv", lines.as_bytes())?;
    }
    Ok(())
}

pub fn stats(config: &RunConfig) -> Result<()> {
    let out = config.out.clone().unwrap_or_else(|| DEFAULT_OUT.into());
    // Statistics describe the corpus as loaded, so duplicates stay in.
    let records = load_prepared(config, config.turkish_lowercase, false)?;

    let mut category_counts: BTreeMap<&str, usize> = BTreeMap::new();
    let mut word_histogram: BTreeMap<usize, usize> = BTreeMap::new();
    for r in &records {
        *category_counts.entry(r.category.as_str()).or_insert(0) += 1;
        let words = r.text.split_whitespace().count();
        *word_histogram.entry(words).or_insert(0) += 1;
    }

    let mut counts_csv = String::from("category,count\n");
    for (category, count) in &category_counts {
        counts_csv.push_str(&format!("{},{count}\n", csv_field(category)));
    }
    let mut histogram_csv = String::from("word_count,frequency\n");
    for (words, frequency) in &word_histogram {
        histogram_csv.push_str(&format!("{words},{frequency}\n"));
    }

    prepare_out(config, &out)?;
    let counts_path = write_artifact(&out, "category_counts.csv", counts_csv.as_bytes())?;
    let histogram_path = write_artifact(&out, "word_histogram.csv", histogram_csv.as_bytes())?;

    println!("records={}", records.len());
    println!("categories={}", category_counts.len());
    println!("category_counts={}", counts_path.display());
    println!("word_histogram={}", histogram_path.display());
    Ok(())
}

/// Quotes a CSV field only when RFC 4180 requires it.
fn csv_field(value: &str) -> String {
    if value.contains(',') || value.contains('"') || value.contains('\n') {
        format!("\"{}\"", value.replace('"', "\"\""))
    } else {
        value.to_string()
    }
}

pub fn report(config: &RunConfig) -> Result<()> {
    let path = require_data(config)?;
    let raw = std::fs::read_to_string(path)
        .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
    let confusion = ConfusionMatrix::from_csv(&raw)?;
    let rendered = render_report(&evaluate(&confusion)?, config.report_format);
    print!("{rendered}");

    if let Some(out) = &config.out {
        prepare_out(config, out)?;
        write_artifact(out, report_file_name(config.report_format), rendered.as_bytes())?;
    }
    Ok(())
}
