use thiserror::Error;

/// Errors raised by the controllers, environments and configuration loaders.
#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: {what} expected {expected}, got {got}")]
    Dimension {
        what: &'static str,
        expected: usize,
        got: usize,
    },
    #[error("non-finite value in {0}")]
    NonFinite(&'static str),
    #[error("matrix `{0}` is not symmetric positive-definite")]
    NotPositiveDefinite(&'static str),
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("empty control sequence")]
    EmptySequence,
    #[error("every sample diverged; no finite log-weight")]
    AllSamplesDiverged,
    #[error("unknown environment `{0}`")]
    UnknownEnv(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
