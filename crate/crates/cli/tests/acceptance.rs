//! Release acceptance suite: one test per numbered criterion, each enforcing
//! its stated tolerance and runtime budget.
//!
//! 1. Reference-table arithmetic: the weighted average and the harmonic-mean
//!    identity reproduce a fixed reference report within ±0.005.
//! 2. Confusion-matrix metrics equal an independent per-pair counting oracle
//!    exactly, over 500 random label sequences.
//! 3. Reverse-mode gradients of the classification loss match central finite
//!    differences in double precision.
//! 4. Fine-tuning the desk-scale model on a separable synthetic 12-sector
//!    corpus reaches test accuracy 0.95 within 10 iterations.
//! 5. Masked-token pretraining on a repetitive corpus starts at chance loss,
//!    strictly improves, and fills masks with top-5 accuracy 0.60 or better.
//! 6. Two fine-tune runs of the binary with one seed emit byte-identical
//!    trace and checkpoint files.
//! 7. Pipeline invariants (normalization, dedup, tokenizer round-trip,
//!    attention row structure, split stratification, confusion-matrix
//!    identities) hold on at least 100 random instances each.

use std::collections::HashSet;
use std::fmt::Write as _;
use std::fs;
use std::path::Path;
use std::process::Command;
use std::time::{Duration, Instant};

use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use adtext_core::corpus::{self, LabelMap, LabeledExample, RawRecord};
use adtext_core::encoder::{
    accumulate_grads, classification_logits, forward_encode, Mode, ModelConfig, ModelParams,
};
use adtext_core::metrics::{
    evaluate, render_report, weighted_averages, ClassMetrics, ConfusionMatrix, ReportFormat,
};
use adtext_core::synth;
use adtext_core::tensor::{grad_check, Graph};
use adtext_core::tokenizer::{self, Encoding, Vocabulary, CLS_ID, PAD_ID, SEP_ID, SPECIAL_TOKENS};
use adtext_core::train::{
    encode_all, evaluate_classifier, finetune, mask_tokens, mlm_top_k_accuracy, pretrain_mlm,
    TrainConfig,
};

/// Reference per-class results for the 12-sector ad-text task as
/// `(precision, recall, f1, support)`. The weighted F1 of these rows is the
/// headline 0.91. Rows 6 and 8 are internally inconsistent: their printed F1
/// is not the harmonic mean of their printed precision and recall, and the
/// test below pins down exactly which rows obey the identity.
const REFERENCE_ROWS: [(f64, f64, f64, u64); 12] = [
    (0.90, 0.95, 0.92, 353),
    (0.99, 0.77, 0.87, 97),
    (0.92, 0.92, 0.92, 414),
    (0.93, 0.87, 0.90, 378),
    (0.88, 0.87, 0.87, 187),
    (0.78, 0.84, 0.81, 25),
    (0.95, 0.94, 0.90, 474),
    (0.87, 0.93, 0.91, 560),
    (0.92, 0.90, 0.94, 444),
    (0.91, 0.98, 0.94, 168),
    (0.94, 0.93, 0.94, 363),
    (0.87, 0.82, 0.84, 125),
];

/// Rows whose printed F1 contradicts the harmonic mean of their own
/// precision and recall.
const INCONSISTENT_ROWS: [usize; 2] = [6, 8];

const ROW_TOLERANCE: f64 = 0.005;

#[test]
fn criterion_1_reference_table_arithmetic() {
    let start = Instant::now();

    let per_class: Vec<ClassMetrics> = REFERENCE_ROWS
        .iter()
        .enumerate()
        .map(|(i, &(precision, recall, f1, support))| ClassMetrics {
            name: i.to_string(),
            precision,
            recall,
            f1,
            support,
            no_predictions: false,
            no_examples: false,
        })
        .collect();
    let weighted = weighted_averages(&per_class).unwrap();
    assert_eq!(weighted.total_support, 3588);
    assert!(
        (weighted.f1 - 0.91).abs() <= ROW_TOLERANCE,
        "weighted F1 {:.6} strays from 0.91 by more than {ROW_TOLERANCE}",
        weighted.f1
    );

    let mut table = String::new();
    let mut violations = Vec::new();
    for (i, &(p, r, f1, _)) in REFERENCE_ROWS.iter().enumerate() {
        let hm = 2.0 * p * r / (p + r);
        let diff = (hm - f1).abs();
        let expect_mismatch = INCONSISTENT_ROWS.contains(&i);
        let _ = writeln!(
            table,
            "row {i:2}: harmonic mean {hm:.6}, printed F1 {f1:.2}, diff {diff:.6}, expected {}",
            if expect_mismatch { "mismatch" } else { "match" }
        );
        if expect_mismatch {
            if diff <= ROW_TOLERANCE {
                violations.push(format!(
                    "row {i} was expected to contradict the harmonic mean but matches (diff {diff:.6})"
                ));
            }
        } else if diff > ROW_TOLERANCE {
            violations.push(format!(
                "row {i}: harmonic mean {hm:.6} strays from printed F1 {f1:.2} by {diff:.6} (> {ROW_TOLERANCE})"
            ));
        }
    }
    assert!(
        violations.is_empty(),
        "harmonic-mean identity violations:\n{}\n\nfull table:\n{table}",
        violations.join("\n")
    );

    let elapsed = start.elapsed();
    assert!(elapsed < Duration::from_secs(1), "took {elapsed:?}, budget 1 s");
    println!(
        "criterion 1 PASS: weighted F1 {:.6}, harmonic-mean identity as expected ({elapsed:?})",
        weighted.f1
    );
}

#[test]
fn criterion_2_metrics_match_counting_oracle() {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(0x5EED_CAFE);

    for case in 0..500 {
        let classes = rng.gen_range(2..=6usize);
        let n = rng.gen_range(1..=200usize);
        let truth: Vec<usize> = (0..n).map(|_| rng.gen_range(0..classes)).collect();
        let pred: Vec<usize> = (0..n).map(|_| rng.gen_range(0..classes)).collect();
        let names: Vec<String> = (0..classes).map(|c| format!("class-{c}")).collect();
        let matrix = ConfusionMatrix::from_pairs(names, &truth, &pred).unwrap();
        let report = evaluate(&matrix).unwrap();

        // The oracle never touches the matrix: every count comes from a
        // fresh pass over the raw pairs, and the metric arithmetic repeats
        // the same integer divisions, so equality must be exact.
        let mut weighted_p = 0.0;
        let mut weighted_r = 0.0;
        let mut weighted_f = 0.0;
        for c in 0..classes {
            let tp = truth
                .iter()
                .zip(&pred)
                .filter(|&(&t, &p)| t == c && p == c)
                .count() as u64;
            let predicted = pred.iter().filter(|&&p| p == c).count() as u64;
            let support = truth.iter().filter(|&&t| t == c).count() as u64;
            let precision = if predicted == 0 {
                0.0
            } else {
                tp as f64 / predicted as f64
            };
            let recall = if support == 0 {
                0.0
            } else {
                tp as f64 / support as f64
            };
            let f1 = if precision + recall == 0.0 {
                0.0
            } else {
                2.0 * precision * recall / (precision + recall)
            };
            let m = &report.per_class[c];
            assert_eq!(m.precision, precision, "case {case} class {c} precision");
            assert_eq!(m.recall, recall, "case {case} class {c} recall");
            assert_eq!(m.f1, f1, "case {case} class {c} f1");
            assert_eq!(m.support, support, "case {case} class {c} support");
            let w = support as f64 / n as f64;
            weighted_p += w * precision;
            weighted_r += w * recall;
            weighted_f += w * f1;
        }
        assert_eq!(report.weighted.precision, weighted_p, "case {case} weighted precision");
        assert_eq!(report.weighted.recall, weighted_r, "case {case} weighted recall");
        assert_eq!(report.weighted.f1, weighted_f, "case {case} weighted f1");
        assert_eq!(report.weighted.total_support, n as u64, "case {case} total support");
        let correct = truth.iter().zip(&pred).filter(|&(t, p)| t == p).count();
        assert_eq!(report.accuracy, correct as f64 / n as f64, "case {case} accuracy");
    }

    let elapsed = start.elapsed();
    assert!(elapsed < Duration::from_secs(10), "took {elapsed:?}, budget 10 s");
    println!("criterion 2 PASS: 500 random matrices match the counting oracle exactly ({elapsed:?})");
}

/// An encoding padded to `max_seq` from explicit ids (CLS ... SEP).
fn padded_encoding(real_ids: &[u32], max_seq: usize) -> Encoding {
    let mut ids = real_ids.to_vec();
    ids.resize(max_seq, PAD_ID);
    let mut attention_mask = vec![0u8; max_seq];
    for m in attention_mask.iter_mut().take(real_ids.len()) {
        *m = 1;
    }
    Encoding {
        ids,
        attention_mask,
        true_length: real_ids.len(),
    }
}

/// Fresh init keeps every matrix at magnitude 0.02, which leaves attention
/// scores near 1e-9 and query/key gradients below what central differences
/// can resolve. Scaling embeddings and projection matrices to trained-like
/// magnitude makes every signal path numerically visible; biases and
/// layer-norm parameters stay untouched.
fn amplify_weights(model: &mut ModelParams<f64>, factor: f64) {
    for p in model.fields_mut() {
        if p.name.contains("norm.") || p.name.ends_with("bias") {
            continue;
        }
        for v in p.value.data_mut() {
            *v *= factor;
        }
    }
}

#[test]
fn criterion_3_gradients_match_finite_differences() {
    let start = Instant::now();
    let config = ModelConfig {
        hidden_size: 16,
        num_layers: 2,
        num_heads: 2,
        max_seq: 8,
        vocab_size: 50,
        intermediate_size: 64,
        num_classes: 12,
        dropout_rate: 0.1,
    };
    let batch = [
        padded_encoding(&[CLS_ID, 7, 23, 41, SEP_ID], 8),
        padded_encoding(&[CLS_ID, 11, 13, 15, 31, 44, SEP_ID], 8),
    ];
    let labels = [3usize, 11];

    let mut model = ModelParams::<f64>::init(config, 42).unwrap();
    amplify_weights(&mut model, 10.0);
    let loss_of = |m: &mut ModelParams<f64>| -> adtext_core::Result<f64> {
        let graph = Graph::new();
        let (logits, _) = classification_logits(&graph, m, &batch, Mode::Eval)?;
        let loss = graph.cross_entropy(logits, &labels)?;
        Ok(graph.value(loss).item())
    };

    // Analytic gradients first, then the finite-difference sweep.
    {
        let graph = Graph::new();
        let (logits, pass) = classification_logits(&graph, &model, &batch, Mode::Eval).unwrap();
        let loss = graph.cross_entropy(logits, &labels).unwrap();
        let mut grads = graph.backward(loss).unwrap();
        accumulate_grads(&mut model, &pass.param_vars, &mut grads).unwrap();
    }
    let report = grad_check(&mut model, loss_of, 1e-5, 6, 424_242).unwrap();
    assert!(
        report.entries_checked >= 100,
        "only {} entries checked",
        report.entries_checked
    );
    assert!(
        report.max_rel_err < 1e-4,
        "max relative error {} at {}",
        report.max_rel_err,
        report.worst_entry
    );

    let elapsed = start.elapsed();
    assert!(elapsed < Duration::from_secs(60), "took {elapsed:?}, budget 60 s");
    println!(
        "criterion 3 PASS: {} entries, max relative error {:.3e} at {} ({elapsed:?})",
        report.entries_checked, report.max_rel_err, report.worst_entry
    );
}

#[test]
fn criterion_4_synthetic_benchmark_reaches_accuracy() {
    let start = Instant::now();
    let mut records = synth::labeled_corpus(200, 1234);
    corpus::normalize_records(&mut records, true);
    let labels = LabelMap::from_categories(records.iter().map(|r| r.category.as_str()));
    assert_eq!(labels.len(), 12);
    let examples = corpus::to_examples(&records, &labels).unwrap();
    let split = corpus::stratified_split(&examples, &labels, 0.7, 1234).unwrap();
    assert_eq!(split.train.len(), 1680);
    assert_eq!(split.test.len(), 720);

    let vocab = Vocabulary::build(records.iter().map(|r| r.text.as_str()), 4000, 1).unwrap();
    let config = ModelConfig {
        vocab_size: vocab.len(),
        ..ModelConfig::toy()
    };
    let model = ModelParams::<f32>::init(config.clone(), 1234).unwrap();
    let train_config = TrainConfig {
        epochs: 10,
        seed: 1234,
        ..TrainConfig::default()
    };
    let outcome = finetune(
        model,
        &vocab,
        labels.names(),
        &split.train,
        &split.test,
        true,
        &train_config,
    )
    .unwrap();

    assert_eq!(outcome.trace.records.len(), 10);
    let best = outcome
        .trace
        .records
        .iter()
        .map(|r| r.test_acc)
        .fold(0.0f64, f64::max);
    assert!(
        outcome.trace.records.iter().any(|r| r.test_acc >= 0.95),
        "no iteration reached test accuracy 0.95, best {best:.4}"
    );

    // The emitted report must carry 12 class rows plus the accuracy and
    // weighted-average rows.
    let test_enc = encode_all(
        split.test.iter().map(|e| e.text.as_str()),
        &vocab,
        config.max_seq,
    )
    .unwrap();
    let test_labels: Vec<usize> = split.test.iter().map(|e| e.label).collect();
    let eval = evaluate_classifier(
        &outcome.checkpoint.params,
        &test_enc,
        &test_labels,
        labels.names(),
        train_config.batch_size,
    )
    .unwrap();
    assert!(eval.accuracy >= 0.95, "selected checkpoint scores {:.4}", eval.accuracy);
    assert_eq!(eval.report.per_class.len(), 12);
    let text = render_report(&eval.report, ReportFormat::Text);
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines.len(), 16, "unexpected report layout:\n{text}");
    assert!(lines[0].starts_with("class"));
    for (i, name) in labels.names().iter().enumerate() {
        assert!(
            lines[1 + i].starts_with(name.as_str()),
            "row {i} should belong to {name}: {:?}",
            lines[1 + i]
        );
    }
    assert_eq!(lines[13], "");
    assert!(lines[14].starts_with("accuracy"));
    assert!(lines[15].starts_with("weighted avg"));

    let elapsed = start.elapsed();
    assert!(elapsed < Duration::from_secs(300), "took {elapsed:?}, budget 5 min");
    println!(
        "criterion 4 PASS: best test accuracy {best:.4}, selected iteration {} ({elapsed:?})",
        outcome.trace.selected_iteration
    );
}

#[test]
fn criterion_5_masked_pretraining_learns_patterns() {
    let start = Instant::now();
    let texts = synth::repetitive_texts(240, 77);
    let vocab = Vocabulary::build(texts.iter().map(String::as_str), 200, 1).unwrap();
    let config = ModelConfig {
        hidden_size: 32,
        num_layers: 2,
        num_heads: 2,
        max_seq: 16,
        vocab_size: vocab.len(),
        intermediate_size: 128,
        num_classes: 2,
        dropout_rate: 0.1,
    };
    let model = ModelParams::<f32>::init(config.clone(), 77).unwrap();
    let label_names = vec!["negatif".to_string(), "pozitif".to_string()];
    let train_config = TrainConfig {
        epochs: 30,
        batch_size: 16,
        learning_rate: 3e-3,
        mask_rate: 0.15,
        seed: 77,
        ..TrainConfig::default()
    };
    let outcome = pretrain_mlm(model, &vocab, &label_names, &texts, true, &train_config).unwrap();

    // Random-init logits are near uniform, so the first measured loss sits
    // at the chance level ln(vocab size).
    let ln_v = (vocab.len() as f64).ln();
    assert!(
        (outcome.losses[0] - ln_v).abs() <= 0.05 * ln_v,
        "initial loss {:.4} strays more than 5% from ln({}) = {ln_v:.4}",
        outcome.losses[0],
        vocab.len()
    );
    assert_eq!(outcome.losses.len(), train_config.epochs + 1);
    for k in 0..3 {
        assert!(
            outcome.losses[k + 1] < outcome.losses[k],
            "loss must strictly decrease over the first 3 iterations: {:?}",
            &outcome.losses[..=k + 1]
        );
    }

    // Fresh masks the training loop never saw measure fill-in quality.
    let encodings = encode_all(texts.iter().map(String::as_str), &vocab, config.max_seq).unwrap();
    let masks: Vec<_> = encodings
        .iter()
        .enumerate()
        .map(|(i, e)| mask_tokens(e, &vocab, train_config.mask_rate, 0xF5E5_0000 + i as u64))
        .collect::<adtext_core::Result<_>>()
        .unwrap();
    let top5 = mlm_top_k_accuracy(
        &outcome.checkpoint.params,
        &masks,
        5,
        train_config.batch_size,
    )
    .unwrap();
    assert!(top5 >= 0.60, "top-5 accuracy {top5:.4} below 0.60");

    let elapsed = start.elapsed();
    assert!(elapsed < Duration::from_secs(180), "took {elapsed:?}, budget 3 min");
    println!(
        "criterion 5 PASS: losses {:.4} -> {:.4} -> {:.4} -> {:.4}, top-5 {top5:.4} ({elapsed:?})",
        outcome.losses[0], outcome.losses[1], outcome.losses[2], outcome.losses[3]
    );
}

#[test]
fn criterion_6_finetune_runs_are_byte_identical() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("corpus.jsonl");
    let mut body = String::new();
    // Synthetic texts carry only letters, spaces, and terminal punctuation,
    // so plain formatting yields valid JSON.
    for r in synth::labeled_corpus(20, 5) {
        let _ = writeln!(
            body,
            "{{\"id\": \"{}\", \"category\": \"{}\", \"text\": \"{}\"}}",
            r.id, r.category, r.text
        );
    }
    fs::write(&data, body).unwrap();
    let cfg = dir.path().join("run.conf");
    fs::write(
        &cfg,
        "hidden_size = 32\n\
         num_layers = 1\n\
         num_heads = 2\n\
         max_seq = 16\n\
         intermediate_size = 64\n\
         dropout_rate = 0.1\n\
         vocab_size = 600\n\
         epochs = 2\n\
         batch_size = 32\n\
         learning_rate = 1e-3\n",
    )
    .unwrap();

    let run = |out: &Path| {
        let output = Command::new(env!("CARGO_BIN_EXE_adtext"))
            .arg("finetune")
            .arg("--data")
            .arg(&data)
            .arg("--config")
            .arg(&cfg)
            .args(["--seed", "7"])
            .arg("--out")
            .arg(out)
            .output()
            .unwrap();
        assert!(
            output.status.success(),
            "finetune failed: {}",
            String::from_utf8_lossy(&output.stderr)
        );
    };
    let out1 = dir.path().join("run1");
    let out2 = dir.path().join("run2");
    run(&out1);
    run(&out2);

    let trace1 = fs::read(out1.join("trace.csv")).unwrap();
    let trace2 = fs::read(out2.join("trace.csv")).unwrap();
    assert!(!trace1.is_empty());
    assert_eq!(trace1, trace2, "trace CSVs differ between identical runs");
    let ckpt1 = fs::read(out1.join("checkpoint.bin")).unwrap();
    let ckpt2 = fs::read(out2.join("checkpoint.bin")).unwrap();
    assert!(!ckpt1.is_empty());
    assert_eq!(ckpt1, ckpt2, "checkpoints differ between identical runs");

    println!(
        "criterion 6 PASS: trace ({} bytes) and checkpoint ({} bytes) byte-identical",
        trace1.len(),
        ckpt1.len()
    );
}

proptest! {
    // Integration tests have no source root for proptest's regression files;
    // failing inputs are reported inline instead.
    #![proptest_config(ProptestConfig {
        cases: 128,
        failure_persistence: None,
        ..ProptestConfig::default()
    })]

    #[test]
    fn criterion_7a_normalize_is_idempotent(text in ".{0,200}", turkish in proptest::bool::ANY) {
        let once = corpus::normalize(&text, turkish);
        prop_assert_eq!(corpus::normalize(&once, turkish), once);
    }

    #[test]
    fn criterion_7b_dedup_is_idempotent(
        rows in proptest::collection::vec(("[a-c]{1,2}", "[kv]", "[ab ]{0,5}"), 0..40)
    ) {
        // Narrow alphabets force plenty of duplicate (text, category) pairs.
        let records: Vec<RawRecord> = rows
            .into_iter()
            .enumerate()
            .map(|(i, (id, category, text))| RawRecord {
                id: format!("{id}{i}"),
                category,
                text,
            })
            .collect();
        let once = corpus::dedup(records);
        let twice = corpus::dedup(once.clone());
        prop_assert_eq!(twice, once);
    }

    #[test]
    fn criterion_7c_tokenizer_round_trip(
        words in proptest::collection::vec("[a-zçğıöşü]{1,8}", 1..20)
    ) {
        let mut tokens: Vec<String> = SPECIAL_TOKENS.iter().map(|s| s.to_string()).collect();
        let mut seen = HashSet::new();
        for w in &words {
            if seen.insert(w.clone()) {
                tokens.push(w.clone());
            }
        }
        let vocab = Vocabulary::from_tokens(tokens).unwrap();
        let text = words.join(" ");
        let encoding = tokenizer::encode(&text, &vocab, words.len() + 2).unwrap();
        prop_assert_eq!(tokenizer::decode(&encoding.ids, &vocab).unwrap(), text);
    }

    #[test]
    fn criterion_7d_attention_rows_are_stochastic_off_padding(
        seed in proptest::num::u64::ANY,
        lengths in proptest::collection::vec(2usize..=8, 1..4),
    ) {
        let config = ModelConfig {
            hidden_size: 16,
            num_layers: 2,
            num_heads: 2,
            max_seq: 8,
            vocab_size: 30,
            intermediate_size: 32,
            num_classes: 3,
            dropout_rate: 0.0,
        };
        let params = ModelParams::<f64>::init(config.clone(), seed).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0xD15C0);
        let batch: Vec<Encoding> = lengths
            .iter()
            .map(|&len| {
                let mut ids = vec![CLS_ID];
                for _ in 0..len - 2 {
                    ids.push(rng.gen_range(5u32..30));
                }
                ids.push(SEP_ID);
                padded_encoding(&ids, config.max_seq)
            })
            .collect();
        let graph = Graph::new();
        let pass = forward_encode(&graph, &params, &batch, Mode::Eval).unwrap();
        prop_assert_eq!(pass.attention.len(), config.num_layers);
        let s = config.max_seq;
        let heads = config.num_heads;
        let expected_shape = [batch.len() * heads, s, s];
        for weights in &pass.attention {
            let w = graph.value(*weights);
            prop_assert_eq!(w.shape(), expected_shape.as_slice());
            for g in 0..batch.len() * heads {
                let mask = &batch[g / heads].attention_mask;
                for r in 0..s {
                    let row = &w.data()[(g * s + r) * s..(g * s + r + 1) * s];
                    let sum: f64 = row.iter().sum();
                    prop_assert!((sum - 1.0).abs() < 1e-9, "row sum {} at group {} row {}", sum, g, r);
                    let pad_mass: f64 = row
                        .iter()
                        .zip(mask)
                        .filter(|(_, &m)| m == 0)
                        .map(|(v, _)| *v)
                        .sum();
                    prop_assert!(pad_mass < 1e-6, "PAD mass {} at group {} row {}", pad_mass, g, r);
                }
            }
        }
    }

    #[test]
    fn criterion_7e_split_is_disjoint_and_stratified(
        counts in proptest::collection::vec(2usize..40, 1..8),
        fraction in 0.1f64..0.9,
        seed in proptest::num::u64::ANY,
    ) {
        let names: Vec<String> = (0..counts.len()).map(|c| format!("sektör-{c}")).collect();
        let mut examples = Vec::new();
        for (c, &n) in counts.iter().enumerate() {
            for i in 0..n {
                examples.push(LabeledExample {
                    text: format!("metin {c} {i}"),
                    label: c,
                });
            }
        }
        let labels = LabelMap::from_names(names).unwrap();
        let split = corpus::stratified_split(&examples, &labels, fraction, seed).unwrap();

        prop_assert_eq!(split.train.len() + split.test.len(), examples.len());
        let train_texts: HashSet<&str> = split.train.iter().map(|e| e.text.as_str()).collect();
        prop_assert_eq!(train_texts.len(), split.train.len());
        for e in &split.test {
            prop_assert!(!train_texts.contains(e.text.as_str()), "{} is in both splits", e.text);
        }
        let mut all = train_texts;
        all.extend(split.test.iter().map(|e| e.text.as_str()));
        prop_assert_eq!(all.len(), examples.len());

        // Per-class train counts follow the round-half-up rule.
        for (c, &n) in counts.iter().enumerate() {
            let train_c = split.train.iter().filter(|e| e.label == c).count();
            let expected = (fraction * n as f64 + 0.5).floor() as usize;
            prop_assert_eq!(train_c, expected, "class {} with {} examples at fraction {}", c, n, fraction);
        }
    }

    #[test]
    fn criterion_7f_confusion_rows_sum_to_supports(
        (classes, pairs) in (2usize..=6).prop_flat_map(|c| {
            (Just(c), proptest::collection::vec((0..c, 0..c), 1..300))
        })
    ) {
        let names: Vec<String> = (0..classes).map(|c| format!("c{c}")).collect();
        let truth: Vec<usize> = pairs.iter().map(|&(t, _)| t).collect();
        let pred: Vec<usize> = pairs.iter().map(|&(_, p)| p).collect();
        let matrix = ConfusionMatrix::from_pairs(names, &truth, &pred).unwrap();
        for c in 0..classes {
            let row_sum: u64 = matrix.counts()[c].iter().sum();
            let truth_tally = truth.iter().filter(|&&t| t == c).count() as u64;
            prop_assert_eq!(matrix.support(c), truth_tally);
            prop_assert_eq!(row_sum, truth_tally);
            let pred_tally = pred.iter().filter(|&&p| p == c).count() as u64;
            prop_assert_eq!(matrix.predicted_total(c), pred_tally);
        }
        prop_assert_eq!(matrix.total(), pairs.len() as u64);
    }

    #[test]
    fn criterion_7g_micro_averages_equal_accuracy(
        (classes, pairs) in (2usize..=6).prop_flat_map(|c| {
            (Just(c), proptest::collection::vec((0..c, 0..c), 1..300))
        })
    ) {
        let names: Vec<String> = (0..classes).map(|c| format!("c{c}")).collect();
        let truth: Vec<usize> = pairs.iter().map(|&(t, _)| t).collect();
        let pred: Vec<usize> = pairs.iter().map(|&(_, p)| p).collect();
        let matrix = ConfusionMatrix::from_pairs(names, &truth, &pred).unwrap();

        let mut tp_total = 0u64;
        let mut predicted_total = 0u64;
        let mut support_total = 0u64;
        for c in 0..classes {
            tp_total += matrix.count(c, c);
            predicted_total += matrix.predicted_total(c);
            support_total += matrix.support(c);
        }
        // Every prediction lands in exactly one column and every example in
        // exactly one row, so both denominators are the total count and the
        // three ratios collapse to trace / total.
        let micro_precision = tp_total as f64 / predicted_total as f64;
        let micro_recall = tp_total as f64 / support_total as f64;
        prop_assert_eq!(micro_precision, micro_recall);
        prop_assert_eq!(micro_precision, matrix.accuracy().unwrap());
    }
}
