use std::path::PathBuf;

/// Errors surfaced by every stage of the pipeline.
///
/// Variants split into two broad classes: problems with inputs or
/// configuration (bad records, shape mismatches, unknown labels) and numeric
/// failures during training (non-finite values, divergence). The CLI maps the
/// first class to exit code 2 and the second to exit code 3.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("malformed record at line {line}: {reason}")]
    MalformedRecord { line: usize, reason: String },

    #[error("corpus at {path} contains no records")]
    EmptyCorpus { path: PathBuf },

    #[error("class {name:?} has {count} example(s); stratified splitting needs at least 2")]
    InsufficientClassSize { name: String, count: usize },

    #[error("unknown label {name:?}; known labels: {known:?}")]
    UnknownLabel { name: String, known: Vec<String> },

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("{op}: incompatible shapes {lhs:?} and {rhs:?}")]
    Shape {
        op: &'static str,
        lhs: Vec<usize>,
        rhs: Vec<usize>,
    },

    #[error("{op}: index {index} out of range for dimension of size {size}")]
    Index {
        op: &'static str,
        index: usize,
        size: usize,
    },

    #[error("token id {id} out of range for vocabulary of size {vocab_size}")]
    InvalidTokenId { id: u32, vocab_size: usize },

    #[error("{metric} is undefined: no evaluated examples")]
    UndefinedMetric { metric: &'static str },

    #[error("non-finite value encountered in {path}")]
    NonFinite { path: String },

    #[error("training diverged at iteration {iteration}: {reason}")]
    Diverged {
        iteration: usize,
        reason: String,
        trace: crate::train::TrainTrace,
    },

    #[error("checkpoint {path}: {reason}")]
    Checkpoint { path: PathBuf, reason: String },

    #[error("{0}")]
    Io(#[from] std::io::Error),
}

impl Error {
    /// True for numeric failures (divergence, non-finite values), false for
    /// input and configuration problems.
    pub fn is_numeric(&self) -> bool {
        matches!(self, Error::NonFinite { .. } | Error::Diverged { .. })
    }
}

pub type Result<T> = std::result::Result<T, Error>;
