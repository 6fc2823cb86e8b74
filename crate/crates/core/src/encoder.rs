//! Transformer encoder for short-text classification: token and position
//! embeddings, stacked self-attention blocks with additive PAD masking,
//! a tanh pooler over the first position, a classification head, and a
//! masked-token prediction head tied to the token embeddings.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tensor::{Gradients, Graph, ParamWalk, Parameter, Real, Tensor, Var};
use crate::tokenizer::Encoding;

pub const LAYER_NORM_EPS: f64 = 1e-12;
pub const INIT_STD: f64 = 0.02;

/// Architecture hyperparameters. Serialized into every checkpoint so a saved
/// model can be reloaded without the original configuration file.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub hidden_size: usize,
    pub num_layers: usize,
    pub num_heads: usize,
    pub max_seq: usize,
    pub vocab_size: usize,
    pub intermediate_size: usize,
    pub num_classes: usize,
    pub dropout_rate: f64,
}

impl ModelConfig {
    /// Desk-scale defaults: small enough to train on one CPU core while
    /// keeping the full architecture.
    pub fn toy() -> Self {
        ModelConfig {
            hidden_size: 64,
            num_layers: 2,
            num_heads: 4,
            max_seq: 64,
            vocab_size: 4000,
            intermediate_size: 256,
            num_classes: 12,
            dropout_rate: 0.1,
        }
    }

    pub fn head_dim(&self) -> usize {
        self.hidden_size / self.num_heads
    }

    pub fn validate(&self) -> Result<()> {
        if self.num_heads == 0 || self.hidden_size % self.num_heads != 0 {
            return Err(Error::Config(format!(
                "hidden_size {} must be divisible by num_heads {}",
                self.hidden_size, self.num_heads
            )));
        }
        if self.num_layers == 0 {
            return Err(Error::Config("num_layers must be at least 1".to_string()));
        }
        if self.max_seq < 2 {
            return Err(Error::Config(format!(
                "max_seq must be at least 2 to hold CLS and SEP, got {}",
                self.max_seq
            )));
        }
        if self.vocab_size <= crate::tokenizer::SPECIAL_TOKENS.len() {
            return Err(Error::Config(format!(
                "vocab_size {} leaves no room beyond the {} special tokens",
                self.vocab_size,
                crate::tokenizer::SPECIAL_TOKENS.len()
            )));
        }
        if self.intermediate_size == 0 {
            return Err(Error::Config(
                "intermediate_size must be at least 1".to_string(),
            ));
        }
        if self.num_classes < 2 {
            return Err(Error::Config(format!(
                "num_classes must be at least 2, got {}",
                self.num_classes
            )));
        }
        if !(0.0..1.0).contains(&self.dropout_rate) {
            return Err(Error::Config(format!(
                "dropout_rate must lie in [0, 1), got {}",
                self.dropout_rate
            )));
        }
        Ok(())
    }
}

/// Weights of one encoder block: the four attention projections, the
/// two-layer feed-forward, and the two layer norms.
#[derive(Clone, Debug)]
pub struct LayerParams<T> {
    pub query_w: Parameter<T>,
    pub query_b: Parameter<T>,
    pub key_w: Parameter<T>,
    pub key_b: Parameter<T>,
    pub value_w: Parameter<T>,
    pub value_b: Parameter<T>,
    pub attn_out_w: Parameter<T>,
    pub attn_out_b: Parameter<T>,
    pub attn_norm_gain: Parameter<T>,
    pub attn_norm_bias: Parameter<T>,
    pub ff_in_w: Parameter<T>,
    pub ff_in_b: Parameter<T>,
    pub ff_out_w: Parameter<T>,
    pub ff_out_b: Parameter<T>,
    pub ff_norm_gain: Parameter<T>,
    pub ff_norm_bias: Parameter<T>,
}

/// The full weight set. The masked-token output projection reuses
/// `token_embeddings` (tied weights); only its bias is a separate tensor.
#[derive(Clone, Debug)]
pub struct ModelParams<T> {
    pub config: ModelConfig,
    pub token_embeddings: Parameter<T>,
    pub position_embeddings: Parameter<T>,
    pub layers: Vec<LayerParams<T>>,
    pub pooler_w: Parameter<T>,
    pub pooler_b: Parameter<T>,
    pub classifier_w: Parameter<T>,
    pub classifier_b: Parameter<T>,
    pub mlm_bias: Parameter<T>,
}

/// Weights are drawn from a normal with this standard deviation, resampling
/// anything beyond two standard deviations.
fn truncated_normal<T: Real>(shape: &[usize], std: f64, rng: &mut ChaCha8Rng) -> Tensor<T> {
    let dist = Normal::new(0.0f64, std).expect("positive standard deviation");
    let n: usize = shape.iter().product();
    let mut data = Vec::with_capacity(n);
    while data.len() < n {
        let x = dist.sample(rng);
        if x.abs() <= 2.0 * std {
            data.push(T::from_f64(x));
        }
    }
    Tensor::from_vec(shape, data).expect("buffer sized to shape")
}

impl<T: Real> ModelParams<T> {
    /// Fresh weights: truncated-normal matrices and embeddings, zero biases,
    /// unit layer-norm gains. Deterministic under the seed.
    pub fn init(config: ModelConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let h = config.hidden_size;
        let i = config.intermediate_size;
        let v = config.vocab_size;

        let mut weight = |name: &str, shape: &[usize]| {
            Parameter::new(name, truncated_normal::<T>(shape, INIT_STD, &mut rng))
        };
        let token_embeddings = weight("embeddings.token", &[v, h]);
        let position_embeddings = weight("embeddings.position", &[config.max_seq, h]);
        let mut layers = Vec::with_capacity(config.num_layers);
        for l in 0..config.num_layers {
            let p = |part: &str| format!("layer{l}.{part}");
            layers.push(LayerParams {
                query_w: weight(&p("attention.query.weight"), &[h, h]),
                query_b: Parameter::new(p("attention.query.bias"), Tensor::zeros(&[h])),
                key_w: weight(&p("attention.key.weight"), &[h, h]),
                key_b: Parameter::new(p("attention.key.bias"), Tensor::zeros(&[h])),
                value_w: weight(&p("attention.value.weight"), &[h, h]),
                value_b: Parameter::new(p("attention.value.bias"), Tensor::zeros(&[h])),
                attn_out_w: weight(&p("attention.output.weight"), &[h, h]),
                attn_out_b: Parameter::new(p("attention.output.bias"), Tensor::zeros(&[h])),
                attn_norm_gain: Parameter::new(
                    p("attention.norm.gain"),
                    Tensor::filled(&[h], T::one()),
                ),
                attn_norm_bias: Parameter::new(p("attention.norm.bias"), Tensor::zeros(&[h])),
                ff_in_w: weight(&p("feed_forward.in.weight"), &[h, i]),
                ff_in_b: Parameter::new(p("feed_forward.in.bias"), Tensor::zeros(&[i])),
                ff_out_w: weight(&p("feed_forward.out.weight"), &[i, h]),
                ff_out_b: Parameter::new(p("feed_forward.out.bias"), Tensor::zeros(&[h])),
                ff_norm_gain: Parameter::new(
                    p("feed_forward.norm.gain"),
                    Tensor::filled(&[h], T::one()),
                ),
                ff_norm_bias: Parameter::new(p("feed_forward.norm.bias"), Tensor::zeros(&[h])),
            });
        }
        let pooler_w = weight("pooler.weight", &[h, h]);
        let pooler_b = Parameter::new("pooler.bias", Tensor::zeros(&[h]));
        let classifier_w = weight("classifier.weight", &[h, config.num_classes]);
        let classifier_b = Parameter::new("classifier.bias", Tensor::zeros(&[config.num_classes]));
        let mlm_bias = Parameter::new("mlm.output_bias", Tensor::zeros(&[v]));

        Ok(ModelParams {
            config,
            token_embeddings,
            position_embeddings,
            layers,
            pooler_w,
            pooler_b,
            classifier_w,
            classifier_b,
            mlm_bias,
        })
    }

    /// Every parameter in canonical order. This order defines the checkpoint
    /// layout and the optimizer/grad-check traversal.
    pub fn fields(&self) -> Vec<&Parameter<T>> {
        let mut out: Vec<&Parameter<T>> =
            vec![&self.token_embeddings, &self.position_embeddings];
        for l in &self.layers {
            out.extend([
                &l.query_w,
                &l.query_b,
                &l.key_w,
                &l.key_b,
                &l.value_w,
                &l.value_b,
                &l.attn_out_w,
                &l.attn_out_b,
                &l.attn_norm_gain,
                &l.attn_norm_bias,
                &l.ff_in_w,
                &l.ff_in_b,
                &l.ff_out_w,
                &l.ff_out_b,
                &l.ff_norm_gain,
                &l.ff_norm_bias,
            ]);
        }
        out.extend([
            &self.pooler_w,
            &self.pooler_b,
            &self.classifier_w,
            &self.classifier_b,
            &self.mlm_bias,
        ]);
        out
    }

    /// Mutable twin of [`fields`](Self::fields); must visit the same
    /// parameters in the same order.
    pub fn fields_mut(&mut self) -> Vec<&mut Parameter<T>> {
        let mut out: Vec<&mut Parameter<T>> =
            vec![&mut self.token_embeddings, &mut self.position_embeddings];
        for l in &mut self.layers {
            out.extend([
                &mut l.query_w,
                &mut l.query_b,
                &mut l.key_w,
                &mut l.key_b,
                &mut l.value_w,
                &mut l.value_b,
                &mut l.attn_out_w,
                &mut l.attn_out_b,
                &mut l.attn_norm_gain,
                &mut l.attn_norm_bias,
                &mut l.ff_in_w,
                &mut l.ff_in_b,
                &mut l.ff_out_w,
                &mut l.ff_out_b,
                &mut l.ff_norm_gain,
                &mut l.ff_norm_bias,
            ]);
        }
        out.extend([
            &mut self.pooler_w,
            &mut self.pooler_b,
            &mut self.classifier_w,
            &mut self.classifier_b,
            &mut self.mlm_bias,
        ]);
        out
    }

    pub fn num_parameters(&self) -> usize {
        self.fields().iter().map(|p| p.value.len()).sum()
    }

    pub fn zero_grads(&mut self) {
        for p in self.fields_mut() {
            p.zero_grad();
        }
    }
}

impl<T: Real> ParamWalk<T> for ModelParams<T> {
    fn walk_mut(&mut self, visit: &mut dyn FnMut(&mut Parameter<T>) -> Result<()>) -> Result<()> {
        for p in self.fields_mut() {
            visit(p)?;
        }
        Ok(())
    }
}

/// Whether a forward pass applies dropout. Training passes consume
/// randomness from the supplied generator; evaluation passes are fully
/// deterministic.
pub enum Mode<'a> {
    Train { dropout_rng: &'a mut ChaCha8Rng },
    Eval,
}

/// Handles produced by one forward pass, kept so the caller can attach a
/// loss, run backward, and route gradients back to named parameters.
pub struct EncoderPass {
    /// Hidden states, `[batch * max_seq, hidden]` row-major.
    pub hidden: Var,
    /// Pooled first-position representation, `[batch, hidden]`.
    pub pooled: Var,
    /// Post-softmax attention weights per layer, `[batch * heads, seq, seq]`.
    pub attention: Vec<Var>,
    /// The registered token embedding table, reused by the tied
    /// masked-token output projection.
    pub token_table: Var,
    /// Every parameter registered on the graph during this pass.
    pub param_vars: Vec<(String, Var)>,
}

fn check_batch(batch: &[Encoding], config: &ModelConfig) -> Result<()> {
    if batch.is_empty() {
        return Err(Error::Config(
            "forward pass needs at least one encoding".to_string(),
        ));
    }
    for e in batch {
        if e.ids.len() != config.max_seq || e.attention_mask.len() != config.max_seq {
            return Err(Error::Shape {
                op: "forward_encode",
                lhs: vec![e.ids.len(), e.attention_mask.len()],
                rhs: vec![config.max_seq],
            });
        }
    }
    Ok(())
}

/// Runs the encoder stack over a batch of encodings.
///
/// PAD key positions receive an additive `-1e9` before every softmax, so
/// attention carries no mass onto padding. Each block applies attention,
/// add and norm, feed-forward, add and norm; the pooled output is
/// `tanh(pooler(hidden[:, 0]))`.
pub fn forward_encode<T: Real>(
    graph: &Graph<T>,
    params: &ModelParams<T>,
    batch: &[Encoding],
    mode: Mode<'_>,
) -> Result<EncoderPass> {
    let config = &params.config;
    check_batch(batch, config)?;
    let b = batch.len();
    let s = config.max_seq;
    let heads = config.num_heads;
    let scale = T::from_f64(1.0 / (config.head_dim() as f64).sqrt());
    let rate = config.dropout_rate;

    let mut dropout_rng = match mode {
        Mode::Train { dropout_rng } => Some(dropout_rng),
        Mode::Eval => None,
    };
    let mut param_vars: Vec<(String, Var)> = Vec::new();
    let reg = |p: &Parameter<T>, vars: &mut Vec<(String, Var)>| {
        let v = graph.input(p.value.clone());
        vars.push((p.name.clone(), v));
        v
    };

    let token_indices: Vec<usize> = batch
        .iter()
        .flat_map(|e| e.ids.iter().map(|&id| id as usize))
        .collect();
    let position_indices: Vec<usize> = (0..b).flat_map(|_| 0..s).collect();
    let key_mask: Vec<u8> = batch
        .iter()
        .flat_map(|e| e.attention_mask.iter().copied())
        .collect();

    let token_table = reg(&params.token_embeddings, &mut param_vars);
    let position_table = reg(&params.position_embeddings, &mut param_vars);
    let tok = graph.gather_rows(token_table, &token_indices)?;
    let pos = graph.gather_rows(position_table, &position_indices)?;
    let mut x = graph.add(tok, pos)?;
    if let Some(rng) = dropout_rng.as_deref_mut() {
        x = graph.dropout(x, rate, rng)?;
    }

    let mut attention = Vec::with_capacity(config.num_layers);
    for layer in &params.layers {
        let query_w = reg(&layer.query_w, &mut param_vars);
        let query_b = reg(&layer.query_b, &mut param_vars);
        let key_w = reg(&layer.key_w, &mut param_vars);
        let key_b = reg(&layer.key_b, &mut param_vars);
        let value_w = reg(&layer.value_w, &mut param_vars);
        let value_b = reg(&layer.value_b, &mut param_vars);
        let attn_out_w = reg(&layer.attn_out_w, &mut param_vars);
        let attn_out_b = reg(&layer.attn_out_b, &mut param_vars);
        let attn_norm_gain = reg(&layer.attn_norm_gain, &mut param_vars);
        let attn_norm_bias = reg(&layer.attn_norm_bias, &mut param_vars);
        let ff_in_w = reg(&layer.ff_in_w, &mut param_vars);
        let ff_in_b = reg(&layer.ff_in_b, &mut param_vars);
        let ff_out_w = reg(&layer.ff_out_w, &mut param_vars);
        let ff_out_b = reg(&layer.ff_out_b, &mut param_vars);
        let ff_norm_gain = reg(&layer.ff_norm_gain, &mut param_vars);
        let ff_norm_bias = reg(&layer.ff_norm_bias, &mut param_vars);

        let q = graph.add_row_bias(graph.matmul(x, query_w)?, query_b)?;
        let k = graph.add_row_bias(graph.matmul(x, key_w)?, key_b)?;
        let v = graph.add_row_bias(graph.matmul(x, value_w)?, value_b)?;
        let qh = graph.split_heads(q, b, s, heads)?;
        let kh = graph.split_heads(k, b, s, heads)?;
        let vh = graph.split_heads(v, b, s, heads)?;
        let scores = graph.scale(graph.bmm_nt(qh, kh)?, scale)?;
        let masked = graph.mask_scores(scores, &key_mask, heads)?;
        let weights = graph.softmax(masked)?;
        attention.push(weights);
        let context = graph.merge_heads(graph.bmm(weights, vh)?, b, s, heads)?;
        let mut attn_out = graph.add_row_bias(graph.matmul(context, attn_out_w)?, attn_out_b)?;
        if let Some(rng) = dropout_rng.as_deref_mut() {
            attn_out = graph.dropout(attn_out, rate, rng)?;
        }
        x = graph.layer_norm(
            graph.add(x, attn_out)?,
            attn_norm_gain,
            attn_norm_bias,
            LAYER_NORM_EPS,
        )?;

        let expanded = graph.gelu(graph.add_row_bias(graph.matmul(x, ff_in_w)?, ff_in_b)?)?;
        let mut ff = graph.add_row_bias(graph.matmul(expanded, ff_out_w)?, ff_out_b)?;
        if let Some(rng) = dropout_rng.as_deref_mut() {
            ff = graph.dropout(ff, rate, rng)?;
        }
        x = graph.layer_norm(
            graph.add(x, ff)?,
            ff_norm_gain,
            ff_norm_bias,
            LAYER_NORM_EPS,
        )?;
    }

    let pooler_w = reg(&params.pooler_w, &mut param_vars);
    let pooler_b = reg(&params.pooler_b, &mut param_vars);
    let first_positions: Vec<usize> = (0..b).map(|i| i * s).collect();
    let first = graph.gather_rows(x, &first_positions)?;
    let pooled = graph.tanh(graph.add_row_bias(graph.matmul(first, pooler_w)?, pooler_b)?)?;

    Ok(EncoderPass {
        hidden: x,
        pooled,
        attention,
        token_table,
        param_vars,
    })
}

/// Classification logits `[batch, num_classes]` on the live graph, for
/// training. The pass handles are returned for gradient routing.
pub fn classification_logits<T: Real>(
    graph: &Graph<T>,
    params: &ModelParams<T>,
    batch: &[Encoding],
    mode: Mode<'_>,
) -> Result<(Var, EncoderPass)> {
    let mut pass = forward_encode(graph, params, batch, mode)?;
    let classifier_w = graph.input(params.classifier_w.value.clone());
    let classifier_b = graph.input(params.classifier_b.value.clone());
    pass.param_vars
        .push((params.classifier_w.name.clone(), classifier_w));
    pass.param_vars
        .push((params.classifier_b.name.clone(), classifier_b));
    let logits = graph.add_row_bias(graph.matmul(pass.pooled, classifier_w)?, classifier_b)?;
    Ok((logits, pass))
}

/// Evaluation-mode classification: returns plain logits `[batch, num_classes]`.
pub fn classify<T: Real>(params: &ModelParams<T>, batch: &[Encoding]) -> Result<Tensor<T>> {
    let graph = Graph::new();
    let (logits, _) = classification_logits(&graph, params, batch, Mode::Eval)?;
    Ok(graph.value(logits))
}

/// Evaluation-mode encoder outputs: hidden states `[batch, max_seq, hidden]`
/// and pooled vectors `[batch, hidden]`.
pub fn encode_batch<T: Real>(
    params: &ModelParams<T>,
    batch: &[Encoding],
) -> Result<(Tensor<T>, Tensor<T>)> {
    let graph = Graph::new();
    let pass = forward_encode(&graph, params, batch, Mode::Eval)?;
    let flat = graph.value(pass.hidden);
    let hidden = Tensor::from_vec(
        &[batch.len(), params.config.max_seq, params.config.hidden_size],
        flat.data().to_vec(),
    )?;
    Ok((hidden, graph.value(pass.pooled)))
}

/// Vocabulary logits at the masked positions, `[total_masked, vocab_size]`,
/// using the token embedding table as the (tied) output projection.
///
/// `masked_positions[i]` lists positions inside example `i`; each must point
/// at a real interior token, so `1 <= p <= true_length - 2` (excluding CLS,
/// SEP, and padding).
pub fn mlm_logits<T: Real>(
    graph: &Graph<T>,
    params: &ModelParams<T>,
    batch: &[Encoding],
    masked_positions: &[Vec<usize>],
    mode: Mode<'_>,
) -> Result<(Var, EncoderPass)> {
    if masked_positions.len() != batch.len() {
        return Err(Error::Config(format!(
            "masked position lists ({}) must match batch size ({})",
            masked_positions.len(),
            batch.len()
        )));
    }
    let s = params.config.max_seq;
    let mut flat = Vec::new();
    for (i, (encoding, positions)) in batch.iter().zip(masked_positions).enumerate() {
        for &p in positions {
            if p == 0 || p + 1 >= encoding.true_length {
                return Err(Error::Index {
                    op: "mlm_forward",
                    index: p,
                    size: encoding.true_length,
                });
            }
            flat.push(i * s + p);
        }
    }

    let mut pass = forward_encode(graph, params, batch, mode)?;
    let mlm_bias = graph.input(params.mlm_bias.value.clone());
    pass.param_vars
        .push((params.mlm_bias.name.clone(), mlm_bias));
    let at_masked = graph.gather_rows(pass.hidden, &flat)?;
    let logits = graph.add_row_bias(graph.matmul_nt(at_masked, pass.token_table)?, mlm_bias)?;
    Ok((logits, pass))
}

/// Evaluation-mode masked-token logits as a plain tensor.
pub fn mlm_forward<T: Real>(
    params: &ModelParams<T>,
    batch: &[Encoding],
    masked_positions: &[Vec<usize>],
) -> Result<Tensor<T>> {
    let graph = Graph::new();
    let (logits, _) = mlm_logits(&graph, params, batch, masked_positions, Mode::Eval)?;
    Ok(graph.value(logits))
}

/// Moves the gradients computed by a backward pass into the named
/// parameters' accumulators. Parameters that did not influence the loss are
/// left untouched.
pub fn accumulate_grads<T: Real>(
    params: &mut ModelParams<T>,
    param_vars: &[(String, Var)],
    grads: &mut Gradients<T>,
) -> Result<()> {
    let mut fields = params.fields_mut();
    for (name, var) in param_vars {
        let Some(g) = grads.take(*var) else {
            continue;
        };
        let target = fields
            .iter_mut()
            .find(|p| &p.name == name)
            .ok_or_else(|| Error::Config(format!("gradient for unknown parameter {name:?}")))?;
        if g.shape() != target.grad.shape() {
            return Err(Error::Shape {
                op: "accumulate_grads",
                lhs: g.shape().to_vec(),
                rhs: target.grad.shape().to_vec(),
            });
        }
        target.grad.accumulate(&g);
    }
    Ok(())
}

/// Index of the largest entry per row; ties resolve to the lowest index.
pub fn argmax_rows<T: Real>(logits: &Tensor<T>) -> Vec<usize> {
    assert_eq!(logits.rank(), 2, "argmax_rows expects a matrix");
    let cols = logits.shape()[1];
    logits
        .data()
        .chunks(cols)
        .map(|row| {
            let mut best = 0;
            for (j, &v) in row.iter().enumerate() {
                if v > row[best] {
                    best = j;
                }
            }
            best
        })
        .collect()
}

/// Row-wise softmax in double precision, for probability output.
pub fn softmax_rows<T: Real>(logits: &Tensor<T>) -> Vec<Vec<f64>> {
    assert_eq!(logits.rank(), 2, "softmax_rows expects a matrix");
    let cols = logits.shape()[1];
    logits
        .data()
        .chunks(cols)
        .map(|row| {
            let max = row
                .iter()
                .map(|v| v.as_f64())
                .fold(f64::NEG_INFINITY, f64::max);
            let exps: Vec<f64> = row.iter().map(|v| (v.as_f64() - max).exp()).collect();
            let sum: f64 = exps.iter().sum();
            exps.into_iter().map(|e| e / sum).collect()
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tokenizer::{CLS_ID, PAD_ID, SEP_ID};

    fn tiny_config() -> ModelConfig {
        ModelConfig {
            hidden_size: 8,
            num_layers: 1,
            num_heads: 2,
            max_seq: 6,
            vocab_size: 20,
            intermediate_size: 16,
            num_classes: 3,
            dropout_rate: 0.1,
        }
    }

    /// An encoding built directly from ids, bypassing the tokenizer.
    fn enc(ids: &[u32], true_length: usize) -> Encoding {
        let mut attention_mask = vec![0u8; ids.len()];
        for m in attention_mask.iter_mut().take(true_length) {
            *m = 1;
        }
        Encoding {
            ids: ids.to_vec(),
            attention_mask,
            true_length,
        }
    }

    /// Fresh init keeps every matrix at magnitude 0.02, which leaves
    /// attention scores near 1e-9, the swap effect below single-precision
    /// resolution, and query/key gradients below what central differences
    /// can resolve. Scaling embeddings and projection matrices to a
    /// trained-like magnitude makes every signal path numerically visible.
    /// Biases and layer-norm parameters stay untouched.
    fn amplify_weights<T: Real>(model: &mut ModelParams<T>, factor: f64) {
        let f = T::from_f64(factor);
        for p in model.fields_mut() {
            if p.name.contains("norm.") || p.name.ends_with("bias") {
                continue;
            }
            for v in p.value.data_mut() {
                *v = *v * f;
            }
        }
    }

    #[test]
    fn config_validation_catches_each_bad_field() {
        assert!(ModelConfig::toy().validate().is_ok());
        let mut c = ModelConfig::toy();
        c.hidden_size = 65;
        assert!(c.validate().is_err());
        let mut c = ModelConfig::toy();
        c.num_layers = 0;
        assert!(c.validate().is_err());
        let mut c = ModelConfig::toy();
        c.max_seq = 1;
        assert!(c.validate().is_err());
        let mut c = ModelConfig::toy();
        c.vocab_size = 5;
        assert!(c.validate().is_err());
        let mut c = ModelConfig::toy();
        c.num_classes = 1;
        assert!(c.validate().is_err());
        let mut c = ModelConfig::toy();
        c.dropout_rate = 1.0;
        assert!(c.validate().is_err());
    }

    #[test]
    fn init_produces_expected_shapes_and_values() {
        let config = tiny_config();
        let model = ModelParams::<f32>::init(config.clone(), 7).unwrap();
        assert_eq!(model.token_embeddings.value.shape(), &[20, 8]);
        assert_eq!(model.position_embeddings.value.shape(), &[6, 8]);
        assert_eq!(model.layers.len(), 1);
        assert_eq!(model.layers[0].ff_in_w.value.shape(), &[8, 16]);
        assert_eq!(model.layers[0].ff_out_w.value.shape(), &[16, 8]);
        assert_eq!(model.pooler_w.value.shape(), &[8, 8]);
        assert_eq!(model.classifier_w.value.shape(), &[8, 3]);
        assert_eq!(model.mlm_bias.value.shape(), &[20]);

        // Biases zero, norm gains one, weights inside the truncation bound.
        assert!(model.layers[0].query_b.value.data().iter().all(|&v| v == 0.0));
        assert!(model.layers[0]
            .attn_norm_gain
            .value
            .data()
            .iter()
            .all(|&v| v == 1.0));
        let bound = (2.0 * INIT_STD) as f32;
        assert!(model
            .token_embeddings
            .value
            .data()
            .iter()
            .all(|v| v.abs() <= bound));
    }

    #[test]
    fn init_is_deterministic_per_seed() {
        let a = ModelParams::<f32>::init(tiny_config(), 11).unwrap();
        let b = ModelParams::<f32>::init(tiny_config(), 11).unwrap();
        let c = ModelParams::<f32>::init(tiny_config(), 12).unwrap();
        assert_eq!(a.token_embeddings.value.data(), b.token_embeddings.value.data());
        assert_ne!(a.token_embeddings.value.data(), c.token_embeddings.value.data());
    }

    #[test]
    fn field_listings_agree_on_order() {
        let mut model = ModelParams::<f32>::init(tiny_config(), 3).unwrap();
        let names: Vec<String> = model.fields().iter().map(|p| p.name.clone()).collect();
        let names_mut: Vec<String> = model.fields_mut().iter().map(|p| p.name.clone()).collect();
        assert_eq!(names, names_mut);
        assert_eq!(names.len(), 2 + 16 + 5);
        // A few spot checks of the canonical order.
        assert_eq!(names[0], "embeddings.token");
        assert_eq!(names[2], "layer0.attention.query.weight");
        assert_eq!(names[names.len() - 1], "mlm.output_bias");
    }

    #[test]
    fn forward_produces_contracted_shapes() {
        let config = ModelConfig {
            hidden_size: 32,
            num_layers: 1,
            num_heads: 4,
            max_seq: 16,
            vocab_size: 30,
            intermediate_size: 64,
            num_classes: 3,
            dropout_rate: 0.0,
        };
        let model = ModelParams::<f32>::init(config, 5).unwrap();
        let batch: Vec<Encoding> = (0..3)
            .map(|i| {
                let mut ids = vec![PAD_ID; 16];
                ids[0] = CLS_ID;
                ids[1] = 6 + i;
                ids[2] = SEP_ID;
                enc(&ids, 3)
            })
            .collect();
        let (hidden, pooled) = encode_batch(&model, &batch).unwrap();
        assert_eq!(hidden.shape(), &[3, 16, 32]);
        assert_eq!(pooled.shape(), &[3, 32]);
    }

    #[test]
    fn single_unmasked_position_attends_to_itself_exactly() {
        let model = ModelParams::<f32>::init(tiny_config(), 9).unwrap();
        let batch = [enc(&[CLS_ID, PAD_ID, PAD_ID, PAD_ID, PAD_ID, PAD_ID], 1)];
        let graph = Graph::new();
        let pass = forward_encode(&graph, &model, &batch, Mode::Eval).unwrap();
        for weights in &pass.attention {
            let w = graph.value(*weights);
            assert_eq!(w.shape(), &[2, 6, 6]);
            for head in 0..2 {
                let row = &w.data()[head * 36..head * 36 + 6];
                assert_eq!(row[0], 1.0);
                assert_eq!(&row[1..], [0.0; 5]);
            }
        }
    }

    #[test]
    fn attention_rows_sum_to_one_with_zero_pad_mass() {
        let model = ModelParams::<f32>::init(tiny_config(), 21).unwrap();
        let batch = [
            enc(&[CLS_ID, 7, 9, SEP_ID, PAD_ID, PAD_ID], 4),
            enc(&[CLS_ID, 11, SEP_ID, PAD_ID, PAD_ID, PAD_ID], 3),
        ];
        let graph = Graph::new();
        let pass = forward_encode(&graph, &model, &batch, Mode::Eval).unwrap();
        for weights in &pass.attention {
            let w = graph.value(*weights);
            for group in 0..w.shape()[0] {
                let example = group / 2;
                for r in 0..6 {
                    let row = &w.data()[(group * 6 + r) * 6..(group * 6 + r + 1) * 6];
                    let sum: f32 = row.iter().sum();
                    assert!((sum - 1.0).abs() < 1e-6, "row sums to {sum}");
                    for c in batch[example].true_length..6 {
                        assert!(row[c] < 1e-6, "PAD column carries mass {}", row[c]);
                    }
                }
            }
        }
    }

    #[test]
    fn outputs_ignore_pad_id_content() {
        let model = ModelParams::<f32>::init(tiny_config(), 33).unwrap();
        let a = [enc(&[CLS_ID, 7, 9, SEP_ID, PAD_ID, PAD_ID], 4)];
        // Same real tokens, garbage ids in the padded tail.
        let b = [enc(&[CLS_ID, 7, 9, SEP_ID, 17, 13], 4)];
        let (hidden_a, pooled_a) = encode_batch(&model, &a).unwrap();
        let (hidden_b, pooled_b) = encode_batch(&model, &b).unwrap();
        for (x, y) in pooled_a.data().iter().zip(pooled_b.data()) {
            assert!((x - y).abs() < 1e-6);
        }
        // Real positions (everything inside true_length) are unaffected.
        let h = 8;
        for p in 0..4 {
            let ra = &hidden_a.data()[p * h..(p + 1) * h];
            let rb = &hidden_b.data()[p * h..(p + 1) * h];
            for (x, y) in ra.iter().zip(rb) {
                assert!((x - y).abs() < 1e-6);
            }
        }
    }

    #[test]
    fn eval_forward_is_bitwise_deterministic() {
        let model = ModelParams::<f32>::init(tiny_config(), 2).unwrap();
        let batch = [enc(&[CLS_ID, 8, 10, 12, SEP_ID, PAD_ID], 5)];
        let (_, pooled_a) = encode_batch(&model, &batch).unwrap();
        let (_, pooled_b) = encode_batch(&model, &batch).unwrap();
        let bits_a: Vec<u32> = pooled_a.data().iter().map(|v| v.to_bits()).collect();
        let bits_b: Vec<u32> = pooled_b.data().iter().map(|v| v.to_bits()).collect();
        assert_eq!(bits_a, bits_b);
    }

    #[test]
    fn swapping_token_positions_changes_pooled_output() {
        let mut model = ModelParams::<f32>::init(tiny_config(), 17).unwrap();
        amplify_weights(&mut model, 10.0);
        let a = [enc(&[CLS_ID, 7, 9, SEP_ID, PAD_ID, PAD_ID], 4)];
        let b = [enc(&[CLS_ID, 9, 7, SEP_ID, PAD_ID, PAD_ID], 4)];
        let (_, pooled_a) = encode_batch(&model, &a).unwrap();
        let (_, pooled_b) = encode_batch(&model, &b).unwrap();
        let diff: f32 = pooled_a
            .data()
            .iter()
            .zip(pooled_b.data())
            .map(|(x, y)| (x - y).abs())
            .sum();
        assert!(diff > 1e-6, "position embeddings had no effect");
    }

    #[test]
    fn train_mode_dropout_is_seeded_and_eval_ignores_it() {
        let model = ModelParams::<f32>::init(tiny_config(), 4).unwrap();
        let batch = [enc(&[CLS_ID, 7, SEP_ID, PAD_ID, PAD_ID, PAD_ID], 3)];
        let run = |seed: u64| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let graph = Graph::new();
            let pass = forward_encode(
                &graph,
                &model,
                &batch,
                Mode::Train {
                    dropout_rng: &mut rng,
                },
            )
            .unwrap();
            graph.value(pass.pooled).data().to_vec()
        };
        assert_eq!(run(5), run(5));
        assert_ne!(run(5), run(6));
    }

    #[test]
    fn zero_classifier_weights_give_uniform_probabilities() {
        let mut config = tiny_config();
        config.num_classes = 12;
        let mut model = ModelParams::<f32>::init(config, 8).unwrap();
        for v in model.classifier_w.value.data_mut() {
            *v = 0.0;
        }
        let batch = [enc(&[CLS_ID, 6, SEP_ID, PAD_ID, PAD_ID, PAD_ID], 3)];
        let logits = classify(&model, &batch).unwrap();
        assert_eq!(logits.shape(), &[1, 12]);
        let probs = softmax_rows(&logits);
        for p in &probs[0] {
            assert!((p - 1.0 / 12.0).abs() < 1e-9);
        }
    }

    #[test]
    fn mlm_logits_shape_follows_masked_count() {
        let model = ModelParams::<f32>::init(tiny_config(), 14).unwrap();
        let batch = [
            enc(&[CLS_ID, 7, 9, 11, SEP_ID, PAD_ID], 5),
            enc(&[CLS_ID, 13, SEP_ID, PAD_ID, PAD_ID, PAD_ID], 3),
        ];
        let logits = mlm_forward(&model, &batch, &[vec![1, 3], vec![1]]).unwrap();
        assert_eq!(logits.shape(), &[3, 20]);
        let empty = mlm_forward(&model, &batch, &[vec![], vec![]]).unwrap();
        assert_eq!(empty.shape(), &[0, 20]);
    }

    #[test]
    fn mlm_rejects_positions_outside_the_interior() {
        let model = ModelParams::<f32>::init(tiny_config(), 14).unwrap();
        let batch = [enc(&[CLS_ID, 7, 9, SEP_ID, PAD_ID, PAD_ID], 4)];
        // CLS, SEP, and PAD positions are all invalid mask targets.
        for bad in [0usize, 3, 4] {
            let err = mlm_forward(&model, &batch, &[vec![bad]]).unwrap_err();
            match err {
                Error::Index { op, index, size } => {
                    assert_eq!(op, "mlm_forward");
                    assert_eq!(index, bad);
                    assert_eq!(size, 4);
                }
                other => panic!("expected index error, got {other:?}"),
            }
        }
    }

    #[test]
    fn forward_rejects_wrong_sequence_length_and_empty_batch() {
        let model = ModelParams::<f32>::init(tiny_config(), 1).unwrap();
        let err = encode_batch(&model, &[]).unwrap_err();
        assert!(matches!(err, Error::Config(_)));
        let short = enc(&[CLS_ID, SEP_ID], 2);
        let err = encode_batch(&model, &[short]).unwrap_err();
        assert!(matches!(err, Error::Shape { op: "forward_encode", .. }));
    }

    #[test]
    fn argmax_and_softmax_helpers() {
        let logits = Tensor::from_vec(&[2, 3], vec![0.1f32, 2.0, -1.0, 5.0, 5.0, 4.0]).unwrap();
        assert_eq!(argmax_rows(&logits), vec![1, 0]);
        let probs = softmax_rows(&logits);
        for row in &probs {
            let sum: f64 = row.iter().sum();
            assert!((sum - 1.0).abs() < 1e-12);
        }
        assert!((probs[1][0] - probs[1][1]).abs() < 1e-12);
    }

    #[test]
    fn classification_gradients_match_finite_differences() {
        let config = tiny_config();
        let batch = [
            enc(&[CLS_ID, 7, 9, SEP_ID, PAD_ID, PAD_ID], 4),
            enc(&[CLS_ID, 11, 13, 15, SEP_ID, PAD_ID], 5),
        ];
        let labels = [0usize, 2];

        let mut model = ModelParams::<f64>::init(config, 42).unwrap();
        amplify_weights(&mut model, 10.0);
        let loss_of = |m: &mut ModelParams<f64>| -> crate::error::Result<f64> {
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
        let report =
            crate::tensor::grad_check(&mut model, loss_of, 1e-5, 6, 424242).unwrap();
        assert!(
            report.max_rel_err < 1e-4,
            "max rel err {} at {}",
            report.max_rel_err,
            report.worst_entry
        );
    }

    #[test]
    fn mlm_gradients_match_finite_differences() {
        let config = tiny_config();
        let batch = [enc(&[CLS_ID, 7, 9, 11, SEP_ID, PAD_ID], 5)];
        let positions = [vec![1usize, 3]];
        let labels = [7usize, 11];

        let mut model = ModelParams::<f64>::init(config, 77).unwrap();
        amplify_weights(&mut model, 10.0);
        let loss_of = |m: &mut ModelParams<f64>| -> crate::error::Result<f64> {
            let graph = Graph::new();
            let (logits, _) = mlm_logits(&graph, m, &batch, &positions, Mode::Eval)?;
            let loss = graph.cross_entropy(logits, &labels)?;
            Ok(graph.value(loss).item())
        };

        {
            let graph = Graph::new();
            let (logits, pass) =
                mlm_logits(&graph, &model, &batch, &positions, Mode::Eval).unwrap();
            let loss = graph.cross_entropy(logits, &labels).unwrap();
            let mut grads = graph.backward(loss).unwrap();
            accumulate_grads(&mut model, &pass.param_vars, &mut grads).unwrap();
        }
        let report = crate::tensor::grad_check(&mut model, loss_of, 1e-5, 6, 99).unwrap();
        assert!(
            report.max_rel_err < 1e-4,
            "max rel err {} at {}",
            report.max_rel_err,
            report.worst_entry
        );
    }
}
