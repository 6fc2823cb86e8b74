//! From-scratch toolkit for classifying short Turkish ad texts into sectors
//! with a small transformer encoder.
//!
//! The pipeline: load a labeled corpus, normalize the Turkish text, tokenize
//! with WordPiece, optionally pretrain with masked-language modeling, then
//! fine-tune a classification head and report per-class precision, recall,
//! and F1.

pub mod checkpoint;
pub mod corpus;
pub mod encoder;
pub mod error;
pub mod metrics;
pub mod synth;
pub mod tensor;
pub mod tokenizer;
pub mod train;

pub use checkpoint::Checkpoint;
pub use corpus::{DataFormat, DatasetSplit, LabelMap, LabeledExample, RawRecord};
pub use encoder::{ModelConfig, ModelParams};
pub use error::{Error, Result};
pub use metrics::{ConfusionMatrix, EvaluationReport, ReportFormat};
pub use tokenizer::{Encoding, Vocabulary};
pub use train::{SelectMetric, TrainConfig, TrainTrace};
