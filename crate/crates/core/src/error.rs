use thiserror::Error;

/// Errors surfaced by the sampling pipeline.
#[derive(Error, Debug)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("unsupported target: {0}")]
    UnsupportedTarget(String),

    #[error("training data contains a single class; segmentation needs at least two")]
    SingleClass,

    #[error("reverse ODE produced a non-finite state at step {step}")]
    IntegrationFailure { step: usize },

    #[error("normalizing-constant estimation failed: {0}")]
    EstimationFailure(String),

    #[error("training aborted: {0}")]
    Training(String),

    #[error("not a generator artifact: {0}")]
    Artifact(String),

    #[error("config error: {0}")]
    Config(String),

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }
}
