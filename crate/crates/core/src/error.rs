use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("domain error: {0}")]
    Domain(String),

    #[error(
        "circulant embedding has a negative eigenvalue {value:e} at index {index}; \
         increase the number of steps or use the Cholesky generator"
    )]
    NegativeEigenvalue { index: usize, value: f64 },

    #[error("covariance matrix is not numerically positive definite")]
    NotPositiveDefinite,

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("non-finite state at step {step}")]
    NonFiniteState { step: usize },

    #[error("non-finite gradient entry at flat index {index}")]
    NonFiniteGradient { index: usize },

    #[error("degenerate input: {0}")]
    Degenerate(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error("{regenerated} of {total} trajectories diverged and had to be regenerated")]
    TooManyRegenerations { regenerated: usize, total: usize },

    #[error("non-finite loss at epoch {epoch}, trajectory {trajectory}")]
    NonFiniteLoss { epoch: usize, trajectory: usize },

    #[error("parse error in {path}: {msg}")]
    Parse { path: String, msg: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub(crate) fn domain(msg: impl Into<String>) -> Error {
    Error::Domain(msg.into())
}
