use thiserror::Error;

/// Errors raised anywhere in the library.
#[derive(Debug, Error)]
pub enum Error {
    #[error("shape mismatch: {0}")]
    Shape(String),

    /// A probabilistic quantity was evaluated outside its domain, e.g. a
    /// likelihood scored against a zero-scale belief.
    #[error("domain error: {0}")]
    Domain(String),

    #[error("parse error at row {row}: {msg}")]
    Parse { row: usize, msg: String },

    #[error("out of range: {0}")]
    Range(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    /// Input data violates a precondition (e.g. missing values in training data).
    #[error("invalid data: {0}")]
    Data(String),

    #[error("calibration error: {0}")]
    Calibration(String),

    #[error("undefined score: {0}")]
    UndefinedScore(String),

    #[error("checkpoint error: {0}")]
    Checkpoint(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
