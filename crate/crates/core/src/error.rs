use thiserror::Error;

/// Failure modes shared by the numeric, geometric and solver layers.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),
    #[error("degenerate input: {0}")]
    DegenerateInput(String),
    #[error("degenerate sample: {0}")]
    DegenerateSample(String),
    #[error("insufficient data: need at least {needed}, got {got}")]
    InsufficientData { needed: usize, got: usize },
    #[error("synthetic generation failed: {0}")]
    GenerationFailed(String),
    #[error("estimation failed: no usable model after {iterations} iterations ({degenerate_samples} degenerate samples)")]
    EstimationFailed {
        iterations: usize,
        degenerate_samples: usize,
    },
    #[error("internal error: {0}")]
    Internal(String),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidInput(msg.into())
    }
}
