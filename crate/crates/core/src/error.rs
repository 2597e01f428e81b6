use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("index {index} out of range for length {len}")]
    IndexOutOfRange { index: usize, len: usize },

    /// A configuration value violates its invariant. `field` is the dotted
    /// path of the offending entry, e.g. `hyperparams.momentum_u`.
    #[error("{field}: {reason}")]
    InvalidConfig { field: String, reason: String },

    #[error("non-finite value in {what} at step {step}")]
    NonFinite { step: usize, what: &'static str },

    #[error("empty input: {0}")]
    Empty(&'static str),

    #[error("zero-length probe direction")]
    ZeroDirection,

    #[error("missing recorded quantity: {0}")]
    MissingRecord(&'static str),

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
}

impl Error {
    pub fn config(field: impl Into<String>, reason: impl Into<String>) -> Self {
        Error::InvalidConfig {
            field: field.into(),
            reason: reason.into(),
        }
    }

    /// Prefixes the field path of a config error, leaving other errors untouched.
    pub fn within(self, prefix: &str) -> Self {
        match self {
            Error::InvalidConfig { field, reason } => Error::InvalidConfig {
                field: format!("{prefix}.{field}"),
                reason,
            },
            other => other,
        }
    }
}
