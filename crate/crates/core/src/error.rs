use thiserror::Error;

/// Errors raised anywhere in the library.
#[derive(Debug, Error)]
pub enum MidamError {
    #[error("parse error at line {line}: {msg}")]
    Parse { line: u64, msg: String },

    #[error("integrity error: {0}")]
    Integrity(String),

    #[error("dataset is empty")]
    EmptyDataset,

    #[error("invalid argument: {0}")]
    Argument(String),

    #[error("shape mismatch: expected {expected}, got {got}")]
    Shape { expected: usize, got: usize },

    #[error("numeric error: {0}")]
    Numeric(String),

    #[error("bag index {0} out of range")]
    Index(usize),

    #[error("split error: {0}")]
    Split(String),

    #[error("config error: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T, E = MidamError> = std::result::Result<T, E>;
