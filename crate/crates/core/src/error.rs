//! Error types shared across the crate.

use thiserror::Error;

/// Crate-wide result alias.
pub type Result<T> = std::result::Result<T, Error>;

/// Errors produced by data handling, training, and evaluation.
#[derive(Debug, Error)]
pub enum Error {
    /// An operation received an empty input it cannot work with.
    #[error("empty input: {0}")]
    EmptyInput(&'static str),

    /// A split day fell outside the trace's date range.
    #[error("invalid split day {split_day}: trace covers {first} to {last}")]
    InvalidSplit {
        split_day: String,
        first: String,
        last: String,
    },

    /// A peer-relative labeling call had no peer windows.
    #[error("insufficient peers: {0}")]
    InsufficientPeers(&'static str),

    /// A CSV row failed to parse.
    #[error("parse error at line {line}, column {column}: {message}")]
    Parse {
        line: usize,
        column: usize,
        message: String,
    },

    /// Two tensor shapes were incompatible for the requested op.
    #[error("shape mismatch in {op}: {lhs:?} vs {rhs:?}")]
    Shape {
        op: &'static str,
        lhs: (usize, usize),
        rhs: (usize, usize),
    },

    /// An API contract was violated (e.g. backward from a non-scalar).
    #[error("contract violation: {0}")]
    Contract(String),

    /// Training produced NaN or infinite values; the run is aborted.
    #[error("numeric failure: {0}")]
    NumericFailure(String),

    /// A configuration value was out of range or inconsistent.
    #[error("invalid config: {0}")]
    Config(String),

    /// Training data admits no model (e.g. a single class for SVM).
    #[error("degenerate training data: {0}")]
    DegenerateTraining(String),

    /// Cross-validation fold count exceeded the sample count.
    #[error("invalid folds: k={k} but only {n} samples")]
    InvalidFolds { k: usize, n: usize },

    /// A disk id was not present in the dataset.
    #[error("unknown disk: {0}")]
    UnknownDisk(String),

    /// A prompt's token estimate exceeded the context budget.
    #[error("prompt over budget: estimated {estimate} tokens, budget {budget}")]
    OverBudget { estimate: usize, budget: usize },

    /// An LLM response carried no parseable verdict lines.
    #[error("protocol error: {0}")]
    Protocol(String),

    /// The operation is not defined for the model's kernel.
    #[error("unsupported for kernel {0}")]
    UnsupportedForKernel(String),

    /// A domain invariant was violated by input data.
    #[error("invariant violation: {0}")]
    Invariant(String),

    #[error("serialization error: {0}")]
    Serialize(#[from] serde_json::Error),

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}
