use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch in {context}: expected {expected}, got {got}")]
    Dimension {
        context: &'static str,
        expected: usize,
        got: usize,
    },

    #[error("{0} is not symmetric positive definite")]
    NotPositiveDefinite(&'static str),

    #[error("filter diverged at step {step} (iterate {iterate}): non-finite value")]
    Diverged { step: usize, iterate: usize },

    #[error("innovation covariance is singular at step {step}")]
    SingularInnovation { step: usize },

    #[error("step too large: no equivalent finite prior (eigenvalue {eigenvalue} >= 1)")]
    StepTooLarge { eigenvalue: f64 },

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("malformed input: {0}")]
    Parse(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn config(msg: impl Into<String>) -> Self {
        Error::InvalidConfig(msg.into())
    }
}
