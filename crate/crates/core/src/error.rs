use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid potential: {0}")]
    InvalidPotential(String),

    #[error("domain error: {0}")]
    Domain(String),

    #[error("time {t} is not aligned with the slice grid (step {step})")]
    Alignment { t: f64, step: f64 },

    #[error("estimator undefined: {0}")]
    EstimatorUndefined(String),

    #[error("quadrature too large: {0}")]
    QuadratureSize(String),

    #[error("internal consistency error: {0}")]
    Consistency(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error("checkpoint error: {0}")]
    Checkpoint(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}
