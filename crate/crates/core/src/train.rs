//! Training loops: masked-language-model pretraining and classifier
//! fine-tuning, both driven by Adam with linear warmup.

use std::collections::HashMap;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::checkpoint::Checkpoint;
use crate::corpus::LabeledExample;
use crate::encoder::{
    accumulate_grads, argmax_rows, classification_logits, classify, mlm_logits, Mode, ModelParams,
};
use crate::error::{Error, Result};
use crate::metrics::{evaluate, ConfusionMatrix, EvaluationReport};
use crate::tensor::{Graph, ParamWalk, Real};
use crate::tokenizer::{encode, Encoding, Vocabulary, MASK_ID, SPECIAL_TOKENS};

/// Metrics recorded after one training iteration (one pass over the training
/// set).
#[derive(Clone, Debug, PartialEq)]
pub struct IterationRecord {
    /// 1-based iteration number.
    pub iteration: usize,
    pub train_loss: f64,
    pub train_acc: f64,
    pub test_acc: f64,
    pub test_weighted_f1: f64,
}

/// Per-iteration history of a fine-tuning run plus which iteration was
/// selected as best.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct TrainTrace {
    pub records: Vec<IterationRecord>,
    /// 1-based iteration whose checkpoint was kept. The earliest iteration
    /// wins ties on the selection metric. Zero when no iteration ran.
    pub selected_iteration: usize,
}

impl TrainTrace {
    /// Renders the trace as CSV with a fixed header, six decimals per value.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("iteration,train_loss,train_acc,test_acc,test_weighted_f1\n");
        for r in &self.records {
            out.push_str(&format!(
                "{},{:.6},{:.6},{:.6},{:.6}\n",
                r.iteration, r.train_loss, r.train_acc, r.test_acc, r.test_weighted_f1
            ));
        }
        out
    }
}

/// Which test-set metric decides the iteration whose weights are kept.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SelectMetric {
    Accuracy,
    WeightedF1,
}

impl std::str::FromStr for SelectMetric {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "accuracy" => Ok(SelectMetric::Accuracy),
            "weighted_f1" => Ok(SelectMetric::WeightedF1),
            other => Err(Error::Config(format!(
                "unknown selection metric {other:?}; expected accuracy or weighted_f1"
            ))),
        }
    }
}

impl std::fmt::Display for SelectMetric {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            SelectMetric::Accuracy => "accuracy",
            SelectMetric::WeightedF1 => "weighted_f1",
        })
    }
}

/// Optimization hyperparameters shared by pretraining and fine-tuning.
#[derive(Clone, Debug, PartialEq)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub adam_beta1: f64,
    pub adam_beta2: f64,
    pub adam_eps: f64,
    pub mask_rate: f64,
    pub seed: u64,
    pub select_metric: SelectMetric,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            epochs: 10,
            batch_size: 32,
            learning_rate: 5e-4,
            adam_beta1: 0.9,
            adam_beta2: 0.999,
            adam_eps: 1e-8,
            mask_rate: 0.15,
            seed: 42,
            select_metric: SelectMetric::Accuracy,
        }
    }
}

impl TrainConfig {
    /// Checks every numeric bound. Fine-tuning additionally requires at
    /// least one epoch; pretraining accepts zero epochs and returns the
    /// initialization unchanged.
    pub fn validate(&self) -> Result<()> {
        if self.batch_size == 0 {
            return Err(Error::Config("batch_size must be at least 1".to_string()));
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::Config(format!(
                "learning_rate must be positive and finite, got {}",
                self.learning_rate
            )));
        }
        for (name, beta) in [("adam_beta1", self.adam_beta1), ("adam_beta2", self.adam_beta2)] {
            if !(0.0..1.0).contains(&beta) {
                return Err(Error::Config(format!(
                    "{name} must lie in [0, 1), got {beta}"
                )));
            }
        }
        if !(self.adam_eps > 0.0 && self.adam_eps.is_finite()) {
            return Err(Error::Config(format!(
                "adam_eps must be positive, got {}",
                self.adam_eps
            )));
        }
        if !(0.0 < self.mask_rate && self.mask_rate < 1.0) {
            return Err(Error::Config(format!(
                "mask_rate must lie in (0, 1), got {}",
                self.mask_rate
            )));
        }
        Ok(())
    }
}

/// Learning rate at a 1-based step: linear ramp over the first tenth of all
/// steps, then the base rate.
pub fn effective_lr(base: f64, step: u64, total_steps: u64) -> f64 {
    let warmup = (total_steps / 10).max(1);
    if step <= warmup {
        base * step as f64 / warmup as f64
    } else {
        base
    }
}

struct Moments {
    m: Vec<f64>,
    v: Vec<f64>,
}

/// Adam with bias correction. First and second moments live in double
/// precision keyed by parameter name, so the update arithmetic is identical
/// whichever float width the model trains in.
pub struct Adam {
    beta1: f64,
    beta2: f64,
    eps: f64,
    t: u64,
    moments: HashMap<String, Moments>,
}

impl Adam {
    pub fn new(config: &TrainConfig) -> Self {
        Adam {
            beta1: config.adam_beta1,
            beta2: config.adam_beta2,
            eps: config.adam_eps,
            t: 0,
            moments: HashMap::new(),
        }
    }

    /// Applies one update from the accumulated gradients, then zeroes them.
    pub fn step<T: Real>(&mut self, params: &mut impl ParamWalk<T>, lr: f64) -> Result<()> {
        self.t += 1;
        let bc1 = 1.0 - self.beta1.powi(self.t as i32);
        let bc2 = 1.0 - self.beta2.powi(self.t as i32);
        let (beta1, beta2, eps) = (self.beta1, self.beta2, self.eps);
        let moments = &mut self.moments;
        params.walk_mut(&mut |p| {
            if !p.grad.all_finite() {
                return Err(Error::NonFinite {
                    path: format!("gradient of {}", p.name),
                });
            }
            let n = p.value.len();
            let entry = moments.entry(p.name.clone()).or_insert_with(|| Moments {
                m: vec![0.0; n],
                v: vec![0.0; n],
            });
            if entry.m.len() != n {
                return Err(Error::Shape {
                    op: "adam_step",
                    lhs: vec![entry.m.len()],
                    rhs: vec![n],
                });
            }
            let values = p.value.data_mut();
            let grads = p.grad.data();
            for i in 0..n {
                let g = grads[i].as_f64();
                entry.m[i] = beta1 * entry.m[i] + (1.0 - beta1) * g;
                entry.v[i] = beta2 * entry.v[i] + (1.0 - beta2) * g * g;
                let m_hat = entry.m[i] / bc1;
                let v_hat = entry.v[i] / bc2;
                let next = values[i].as_f64() - lr * m_hat / (v_hat.sqrt() + eps);
                values[i] = T::from_f64(next);
            }
            p.zero_grad();
            Ok(())
        })
    }
}

/// One text with its tokens hidden for the masking objective.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct MaskOutcome {
    pub masked: Encoding,
    /// Masked positions in ascending order.
    pub positions: Vec<usize>,
    /// The ids that stood at those positions, aligned with `positions`.
    pub original_ids: Vec<u32>,
}

/// Hides interior tokens for masked-token pretraining.
///
/// Every real, non-special position is selected independently with
/// probability `mask_rate`. A selected position becomes `[MASK]` with
/// probability 0.8, a random regular vocabulary id with probability 0.1,
/// and keeps its id with probability 0.1. Deterministic under the seed.
pub fn mask_tokens(
    encoding: &Encoding,
    vocab: &Vocabulary,
    mask_rate: f64,
    seed: u64,
) -> Result<MaskOutcome> {
    if !(0.0 < mask_rate && mask_rate < 1.0) {
        return Err(Error::Config(format!(
            "mask_rate must lie in (0, 1), got {mask_rate}"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut masked = encoding.clone();
    let mut positions = Vec::new();
    let mut original_ids = Vec::new();
    let first_regular = SPECIAL_TOKENS.len() as u32;
    for p in 1..encoding.true_length.saturating_sub(1) {
        let id = encoding.ids[p];
        if vocab.is_special(id) {
            continue;
        }
        if rng.gen::<f64>() >= mask_rate {
            continue;
        }
        positions.push(p);
        original_ids.push(id);
        let r = rng.gen::<f64>();
        masked.ids[p] = if r < 0.8 {
            MASK_ID
        } else if r < 0.9 {
            rng.gen_range(first_regular..vocab.len() as u32)
        } else {
            id
        };
    }
    Ok(MaskOutcome {
        masked,
        positions,
        original_ids,
    })
}

/// Tokenizes a list of already-normalized texts against one vocabulary.
pub fn encode_all<'a>(
    texts: impl IntoIterator<Item = &'a str>,
    vocab: &Vocabulary,
    max_seq: usize,
) -> Result<Vec<Encoding>> {
    texts
        .into_iter()
        .map(|t| encode(t, vocab, max_seq))
        .collect()
}

/// Test-set evaluation of a classifier.
#[derive(Clone, Debug)]
pub struct EvalOutcome {
    pub accuracy: f64,
    pub weighted_f1: f64,
    pub report: EvaluationReport,
    pub confusion: ConfusionMatrix,
}

/// Classifies `encodings` in batches and scores the predictions.
pub fn evaluate_classifier(
    params: &ModelParams<f32>,
    encodings: &[Encoding],
    labels: &[usize],
    class_names: &[String],
    batch_size: usize,
) -> Result<EvalOutcome> {
    if encodings.len() != labels.len() {
        return Err(Error::Config(format!(
            "{} encodings but {} labels",
            encodings.len(),
            labels.len()
        )));
    }
    if batch_size == 0 {
        return Err(Error::Config("batch_size must be at least 1".to_string()));
    }
    let mut confusion = ConfusionMatrix::new(class_names.to_vec());
    for (chunk, chunk_labels) in encodings.chunks(batch_size).zip(labels.chunks(batch_size)) {
        let logits = classify(params, chunk)?;
        for (pred, &truth) in argmax_rows(&logits).into_iter().zip(chunk_labels) {
            confusion.record(truth, pred)?;
        }
    }
    let report = evaluate(&confusion)?;
    Ok(EvalOutcome {
        accuracy: report.accuracy,
        weighted_f1: report.weighted.f1,
        report,
        confusion,
    })
}

/// 1-based iteration holding the best selection metric; earliest wins ties.
/// Zero when no records exist.
pub fn select_best(records: &[IterationRecord], metric: SelectMetric) -> usize {
    let mut best: Option<(f64, usize)> = None;
    for r in records {
        let value = match metric {
            SelectMetric::Accuracy => r.test_acc,
            SelectMetric::WeightedF1 => r.test_weighted_f1,
        };
        if best.map_or(true, |(b, _)| value > b) {
            best = Some((value, r.iteration));
        }
    }
    best.map_or(0, |(_, it)| it)
}

#[derive(Clone, Debug)]
pub struct FinetuneOutcome {
    pub checkpoint: Checkpoint,
    pub trace: TrainTrace,
}

fn check_model_inputs(
    model: &ModelParams<f32>,
    vocab: &Vocabulary,
    label_names: &[String],
) -> Result<()> {
    if model.config.vocab_size != vocab.len() {
        return Err(Error::Config(format!(
            "model vocab_size {} does not match vocabulary of {} tokens",
            model.config.vocab_size,
            vocab.len()
        )));
    }
    if model.config.num_classes != label_names.len() {
        return Err(Error::Config(format!(
            "model num_classes {} does not match {} label names",
            model.config.num_classes,
            label_names.len()
        )));
    }
    Ok(())
}

fn label_ids(examples: &[LabeledExample], num_classes: usize) -> Result<Vec<usize>> {
    examples
        .iter()
        .map(|e| {
            if e.label < num_classes {
                Ok(e.label)
            } else {
                Err(Error::Index {
                    op: "finetune labels",
                    index: e.label,
                    size: num_classes,
                })
            }
        })
        .collect()
}

/// Converts a numeric failure during an iteration into a divergence error
/// carrying the trace collected so far.
fn diverged(iteration: usize, err: Error, trace: &TrainTrace) -> Error {
    if err.is_numeric() {
        Error::Diverged {
            iteration,
            reason: err.to_string(),
            trace: trace.clone(),
        }
    } else {
        err
    }
}

/// Fine-tunes a classifier: per iteration, shuffles the training set,
/// minimizes cross-entropy over the classification logits, then evaluates
/// on the test set. Returns the checkpoint of the iteration maximizing the
/// selection metric plus the full trace.
///
/// Training accuracy and loss are accumulated from the training-mode batches
/// themselves; test metrics come from a full evaluation pass per iteration.
pub fn finetune(
    mut model: ModelParams<f32>,
    vocab: &Vocabulary,
    label_names: &[String],
    train: &[LabeledExample],
    test: &[LabeledExample],
    turkish_lowercase: bool,
    config: &TrainConfig,
) -> Result<FinetuneOutcome> {
    config.validate()?;
    if config.epochs == 0 {
        return Err(Error::Config(
            "finetune needs at least one iteration".to_string(),
        ));
    }
    check_model_inputs(&model, vocab, label_names)?;
    if train.is_empty() || test.is_empty() {
        return Err(Error::Config(format!(
            "finetune needs non-empty splits, got {} train / {} test",
            train.len(),
            test.len()
        )));
    }

    let max_seq = model.config.max_seq;
    let train_enc = encode_all(train.iter().map(|e| e.text.as_str()), vocab, max_seq)?;
    let test_enc = encode_all(test.iter().map(|e| e.text.as_str()), vocab, max_seq)?;
    let train_labels = label_ids(train, model.config.num_classes)?;
    let test_labels = label_ids(test, model.config.num_classes)?;

    let steps_per_epoch = train.len().div_ceil(config.batch_size);
    let total_steps = (config.epochs * steps_per_epoch) as u64;
    let mut adam = Adam::new(config);
    let mut shuffle_rng = ChaCha8Rng::seed_from_u64(config.seed);
    shuffle_rng.set_stream(1);
    let mut dropout_rng = ChaCha8Rng::seed_from_u64(config.seed);
    dropout_rng.set_stream(2);

    let mut indices: Vec<usize> = (0..train.len()).collect();
    let mut trace = TrainTrace::default();
    let mut best: Option<(f64, ModelParams<f32>)> = None;
    let mut step = 0u64;

    for epoch in 1..=config.epochs {
        indices.shuffle(&mut shuffle_rng);
        let mut loss_sum = 0.0;
        let mut correct = 0usize;
        for chunk in indices.chunks(config.batch_size) {
            let batch: Vec<Encoding> = chunk.iter().map(|&i| train_enc[i].clone()).collect();
            let labels: Vec<usize> = chunk.iter().map(|&i| train_labels[i]).collect();
            let step_result = (|| {
                let graph = Graph::new();
                let (logits, pass) = classification_logits(
                    &graph,
                    &model,
                    &batch,
                    Mode::Train {
                        dropout_rng: &mut dropout_rng,
                    },
                )?;
                let loss = graph.cross_entropy(logits, &labels)?;
                let loss_value = graph.value(loss).item() as f64;
                let hits = argmax_rows(&graph.value(logits))
                    .into_iter()
                    .zip(&labels)
                    .filter(|(p, l)| p == *l)
                    .count();
                let mut grads = graph.backward(loss)?;
                accumulate_grads(&mut model, &pass.param_vars, &mut grads)?;
                Ok::<_, Error>((loss_value, hits))
            })();
            let (loss_value, hits) = step_result.map_err(|e| diverged(epoch, e, &trace))?;
            loss_sum += loss_value;
            correct += hits;
            step += 1;
            adam.step(
                &mut model,
                effective_lr(config.learning_rate, step, total_steps),
            )
            .map_err(|e| diverged(epoch, e, &trace))?;
        }

        let eval = evaluate_classifier(
            &model,
            &test_enc,
            &test_labels,
            label_names,
            config.batch_size,
        )?;
        trace.records.push(IterationRecord {
            iteration: epoch,
            train_loss: loss_sum / steps_per_epoch as f64,
            train_acc: correct as f64 / train.len() as f64,
            test_acc: eval.accuracy,
            test_weighted_f1: eval.weighted_f1,
        });
        let metric_value = match config.select_metric {
            SelectMetric::Accuracy => eval.accuracy,
            SelectMetric::WeightedF1 => eval.weighted_f1,
        };
        if best.as_ref().map_or(true, |(b, _)| metric_value > *b) {
            best = Some((metric_value, model.clone()));
        }
    }

    trace.selected_iteration = select_best(&trace.records, config.select_metric);
    let (_, best_model) = best.expect("at least one iteration ran");
    let checkpoint = Checkpoint::new(
        best_model,
        vocab.clone(),
        label_names.to_vec(),
        turkish_lowercase,
    )?;
    Ok(FinetuneOutcome { checkpoint, trace })
}

/// Deterministic per-example masking seed: one value per (seed, epoch,
/// example) triple, spread by SplitMix64 finalization.
fn mix_seed(seed: u64, epoch: u64, index: u64) -> u64 {
    let mut z = seed
        ^ epoch.wrapping_mul(0x9E37_79B9_7F4A_7C15)
        ^ index.wrapping_mul(0xD1B5_4A32_D192_ED03);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Mean masked-token loss over a fixed set of masked texts, evaluation mode,
/// weighted by masked-position count so batching does not change the result.
pub fn mlm_eval_loss(
    params: &ModelParams<f32>,
    masks: &[MaskOutcome],
    batch_size: usize,
) -> Result<f64> {
    if batch_size == 0 {
        return Err(Error::Config("batch_size must be at least 1".to_string()));
    }
    let mut loss_sum = 0.0;
    let mut total_masked = 0usize;
    for chunk in masks.chunks(batch_size) {
        let batch: Vec<Encoding> = chunk.iter().map(|m| m.masked.clone()).collect();
        let positions: Vec<Vec<usize>> = chunk.iter().map(|m| m.positions.clone()).collect();
        let labels: Vec<usize> = chunk
            .iter()
            .flat_map(|m| m.original_ids.iter().map(|&id| id as usize))
            .collect();
        if labels.is_empty() {
            continue;
        }
        let graph = Graph::new();
        let (logits, _) = mlm_logits(&graph, params, &batch, &positions, Mode::Eval)?;
        let loss = graph.cross_entropy(logits, &labels)?;
        loss_sum += graph.value(loss).item() as f64 * labels.len() as f64;
        total_masked += labels.len();
    }
    if total_masked == 0 {
        return Err(Error::Config(
            "no masked positions to evaluate".to_string(),
        ));
    }
    Ok(loss_sum / total_masked as f64)
}

/// Fraction of masked positions whose original id ranks in the top `k`
/// predicted logits.
pub fn mlm_top_k_accuracy(
    params: &ModelParams<f32>,
    masks: &[MaskOutcome],
    k: usize,
    batch_size: usize,
) -> Result<f64> {
    if k == 0 || batch_size == 0 {
        return Err(Error::Config(
            "top-k evaluation needs k and batch_size of at least 1".to_string(),
        ));
    }
    let mut hits = 0usize;
    let mut total = 0usize;
    for chunk in masks.chunks(batch_size) {
        let batch: Vec<Encoding> = chunk.iter().map(|m| m.masked.clone()).collect();
        let positions: Vec<Vec<usize>> = chunk.iter().map(|m| m.positions.clone()).collect();
        let originals: Vec<u32> = chunk
            .iter()
            .flat_map(|m| m.original_ids.iter().copied())
            .collect();
        if originals.is_empty() {
            continue;
        }
        let graph = Graph::new();
        let (logits, _) = mlm_logits(&graph, params, &batch, &positions, Mode::Eval)?;
        let logits = graph.value(logits);
        let vocab_size = logits.shape()[1];
        for (row, &truth) in logits.data().chunks(vocab_size).zip(&originals) {
            let own = row[truth as usize];
            let stronger = row.iter().filter(|&&v| v > own).count();
            if stronger < k {
                hits += 1;
            }
            total += 1;
        }
    }
    if total == 0 {
        return Err(Error::Config(
            "no masked positions to evaluate".to_string(),
        ));
    }
    Ok(hits as f64 / total as f64)
}

#[derive(Clone, Debug)]
pub struct PretrainOutcome {
    pub checkpoint: Checkpoint,
    /// `losses[k]` is the evaluation-mode masked-token loss after `k`
    /// iterations, measured on one fixed masking of the corpus; `losses[0]`
    /// is the loss of the initial weights.
    pub losses: Vec<f64>,
}

/// Pretrains with the masking objective: per iteration, shuffles the texts,
/// draws fresh masks, and minimizes cross-entropy of the masked-token
/// logits against the hidden ids. Zero epochs returns the model unchanged
/// (with its initial loss still measured).
pub fn pretrain_mlm(
    mut model: ModelParams<f32>,
    vocab: &Vocabulary,
    label_names: &[String],
    texts: &[String],
    turkish_lowercase: bool,
    config: &TrainConfig,
) -> Result<PretrainOutcome> {
    config.validate()?;
    check_model_inputs(&model, vocab, label_names)?;
    if texts.is_empty() {
        return Err(Error::Config("pretraining corpus is empty".to_string()));
    }

    let max_seq = model.config.max_seq;
    let encodings = encode_all(texts.iter().map(String::as_str), vocab, max_seq)?;

    // One fixed masking (epoch index 0) measures progress across epochs.
    let eval_masks: Vec<MaskOutcome> = encodings
        .iter()
        .enumerate()
        .map(|(i, e)| mask_tokens(e, vocab, config.mask_rate, mix_seed(config.seed, 0, i as u64)))
        .collect::<Result<_>>()?;

    let mut losses = vec![mlm_eval_loss(&model, &eval_masks, config.batch_size)?];

    let steps_per_epoch = texts.len().div_ceil(config.batch_size);
    let total_steps = (config.epochs * steps_per_epoch) as u64;
    let mut adam = Adam::new(config);
    let mut shuffle_rng = ChaCha8Rng::seed_from_u64(config.seed);
    shuffle_rng.set_stream(1);
    let mut dropout_rng = ChaCha8Rng::seed_from_u64(config.seed);
    dropout_rng.set_stream(2);
    let mut indices: Vec<usize> = (0..texts.len()).collect();
    let mut step = 0u64;

    for epoch in 1..=config.epochs {
        indices.shuffle(&mut shuffle_rng);
        for chunk in indices.chunks(config.batch_size) {
            let mut batch = Vec::with_capacity(chunk.len());
            let mut positions = Vec::with_capacity(chunk.len());
            let mut labels = Vec::new();
            for &i in chunk {
                let outcome = mask_tokens(
                    &encodings[i],
                    vocab,
                    config.mask_rate,
                    mix_seed(config.seed, epoch as u64, i as u64),
                )?;
                labels.extend(outcome.original_ids.iter().map(|&id| id as usize));
                batch.push(outcome.masked);
                positions.push(outcome.positions);
            }
            if labels.is_empty() {
                continue;
            }
            let step_result = (|| {
                let graph = Graph::new();
                let (logits, pass) = mlm_logits(
                    &graph,
                    &model,
                    &batch,
                    &positions,
                    Mode::Train {
                        dropout_rng: &mut dropout_rng,
                    },
                )?;
                let loss = graph.cross_entropy(logits, &labels)?;
                let mut grads = graph.backward(loss)?;
                accumulate_grads(&mut model, &pass.param_vars, &mut grads)?;
                Ok::<_, Error>(())
            })();
            step_result.map_err(|e| diverged(epoch, e, &loss_trace(&losses)))?;
            step += 1;
            adam.step(
                &mut model,
                effective_lr(config.learning_rate, step, total_steps),
            )
            .map_err(|e| diverged(epoch, e, &loss_trace(&losses)))?;
        }
        losses.push(mlm_eval_loss(&model, &eval_masks, config.batch_size)?);
    }

    let checkpoint = Checkpoint::new(
        model,
        vocab.clone(),
        label_names.to_vec(),
        turkish_lowercase,
    )?;
    Ok(PretrainOutcome { checkpoint, losses })
}

/// Loss history shaped as a trace so divergence errors carry it.
fn loss_trace(losses: &[f64]) -> TrainTrace {
    TrainTrace {
        records: losses
            .iter()
            .enumerate()
            .map(|(i, &l)| IterationRecord {
                iteration: i,
                train_loss: l,
                train_acc: 0.0,
                test_acc: 0.0,
                test_weighted_f1: 0.0,
            })
            .collect(),
        selected_iteration: 0,
    }
}
