//! Resolved run configuration: defaults, then a line-oriented `key = value`
//! file, then command-line flags, applied in that order so later sources win.

use std::path::{Path, PathBuf};

use adtext_core::corpus::DataFormat;
use adtext_core::encoder::ModelConfig;
use adtext_core::metrics::ReportFormat;
use adtext_core::train::{SelectMetric, TrainConfig};
use adtext_core::{Error, Result};

/// Every tunable of the pipeline in one place. The full resolved value set
/// is echoed to the output directory before any command does real work.
#[derive(Clone, Debug, PartialEq)]
pub struct RunConfig {
    pub data: Option<PathBuf>,
    /// Input format; `None` infers from the data file extension.
    pub data_format: Option<DataFormat>,
    pub out: Option<PathBuf>,
    pub vocab: Option<PathBuf>,
    pub checkpoint: Option<PathBuf>,
    pub seed: u64,
    pub train_fraction: f64,
    pub turkish_lowercase: bool,
    pub vocab_size: usize,
    pub min_freq: u64,
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub mask_rate: f64,
    pub select_metric: SelectMetric,
    pub report_format: ReportFormat,
    pub hidden_size: usize,
    pub num_layers: usize,
    pub num_heads: usize,
    pub max_seq: usize,
    pub intermediate_size: usize,
    pub dropout_rate: f64,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            data: None,
            data_format: None,
            out: None,
            vocab: None,
            checkpoint: None,
            seed: 42,
            train_fraction: 0.7,
            turkish_lowercase: true,
            vocab_size: 4000,
            min_freq: 1,
            epochs: 10,
            batch_size: 32,
            learning_rate: 5e-4,
            mask_rate: 0.15,
            select_metric: SelectMetric::Accuracy,
            report_format: ReportFormat::Text,
            hidden_size: 64,
            num_layers: 2,
            num_heads: 4,
            max_seq: 64,
            intermediate_size: 256,
            dropout_rate: 0.1,
        }
    }
}

fn parse<T: std::str::FromStr>(key: &str, value: &str) -> Result<T>
where
    T::Err: std::fmt::Display,
{
    value
        .parse()
        .map_err(|e| Error::Config(format!("bad value {value:?} for {key}: {e}")))
}

impl RunConfig {
    /// Sets one key. Unknown keys are rejected so typos surface immediately.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        match key {
            "data" => self.data = Some(PathBuf::from(value)),
            "data_format" => self.data_format = Some(parse(key, value)?),
            "out" => self.out = Some(PathBuf::from(value)),
            "vocab" => self.vocab = Some(PathBuf::from(value)),
            "checkpoint" => self.checkpoint = Some(PathBuf::from(value)),
            "seed" => self.seed = parse(key, value)?,
            "train_fraction" => self.train_fraction = parse(key, value)?,
            "turkish_lowercase" => self.turkish_lowercase = parse(key, value)?,
            "vocab_size" => self.vocab_size = parse(key, value)?,
            "min_freq" => self.min_freq = parse(key, value)?,
            "epochs" => self.epochs = parse(key, value)?,
            "batch_size" => self.batch_size = parse(key, value)?,
            "learning_rate" => self.learning_rate = parse(key, value)?,
            "mask_rate" => self.mask_rate = parse(key, value)?,
            "select_metric" => self.select_metric = parse(key, value)?,
            "report_format" => self.report_format = parse(key, value)?,
            "hidden_size" => self.hidden_size = parse(key, value)?,
            "num_layers" => self.num_layers = parse(key, value)?,
            "num_heads" => self.num_heads = parse(key, value)?,
            "max_seq" => self.max_seq = parse(key, value)?,
            "intermediate_size" => self.intermediate_size = parse(key, value)?,
            "dropout_rate" => self.dropout_rate = parse(key, value)?,
            other => {
                return Err(Error::Config(format!("unknown configuration key {other:?}")));
            }
        }
        Ok(())
    }

    /// Applies a `key = value` configuration file. Blank lines and lines
    /// starting with `#` are skipped; anything else must contain `=`.
    pub fn apply_file(&mut self, path: &Path) -> Result<()> {
        let raw = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read config {}: {e}", path.display())))?;
        for (idx, line) in raw.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| {
                Error::Config(format!(
                    "{} line {}: expected `key = value`, got {line:?}",
                    path.display(),
                    idx + 1
                ))
            })?;
            self.set(key.trim(), value.trim()).map_err(|e| {
                Error::Config(format!("{} line {}: {e}", path.display(), idx + 1))
            })?;
        }
        Ok(())
    }

    /// Renders the resolved configuration in the same `key = value` syntax
    /// the loader accepts, one key per line, unset paths omitted.
    pub fn echo(&self) -> String {
        let mut out = String::new();
        let mut put = |key: &str, value: String| {
            out.push_str(key);
            out.push_str(" = ");
            out.push_str(&value);
            out.push('\n');
        };
        if let Some(p) = &self.data {
            put("data", p.display().to_string());
        }
        if let Some(f) = self.data_format {
            put("data_format", f.to_string());
        }
        if let Some(p) = &self.out {
            put("out", p.display().to_string());
        }
        if let Some(p) = &self.vocab {
            put("vocab", p.display().to_string());
        }
        if let Some(p) = &self.checkpoint {
            put("checkpoint", p.display().to_string());
        }
        put("seed", self.seed.to_string());
        put("train_fraction", self.train_fraction.to_string());
        put("turkish_lowercase", self.turkish_lowercase.to_string());
        put("vocab_size", self.vocab_size.to_string());
        put("min_freq", self.min_freq.to_string());
        put("epochs", self.epochs.to_string());
        put("batch_size", self.batch_size.to_string());
        put("learning_rate", self.learning_rate.to_string());
        put("mask_rate", self.mask_rate.to_string());
        put("select_metric", self.select_metric.to_string());
        put("report_format", self.report_format.to_string());
        put("hidden_size", self.hidden_size.to_string());
        put("num_layers", self.num_layers.to_string());
        put("num_heads", self.num_heads.to_string());
        put("max_seq", self.max_seq.to_string());
        put("intermediate_size", self.intermediate_size.to_string());
        put("dropout_rate", self.dropout_rate.to_string());
        out
    }

    /// Model shape with the sizes only the data can decide filled in.
    pub fn model_config(&self, vocab_len: usize, num_classes: usize) -> ModelConfig {
        ModelConfig {
            hidden_size: self.hidden_size,
            num_layers: self.num_layers,
            num_heads: self.num_heads,
            max_seq: self.max_seq,
            vocab_size: vocab_len,
            intermediate_size: self.intermediate_size,
            num_classes,
            dropout_rate: self.dropout_rate,
        }
    }

    pub fn train_config(&self) -> TrainConfig {
        TrainConfig {
            epochs: self.epochs,
            batch_size: self.batch_size,
            learning_rate: self.learning_rate,
            mask_rate: self.mask_rate,
            seed: self.seed,
            select_metric: self.select_metric,
            ..TrainConfig::default()
        }
    }

    /// Explicit format if set, otherwise inferred from the file extension
    /// (`.csv` means CSV, anything else JSONL).
    pub fn format_for(&self, path: &Path) -> DataFormat {
        self.data_format.unwrap_or_else(|| {
            match path.extension().and_then(|e| e.to_str()) {
                Some("csv") => DataFormat::Csv,
                _ => DataFormat::Jsonl,
            }
        })
    }
}
