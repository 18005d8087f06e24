use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid potential: {0}")]
    InvalidPotential(String),

    #[error("invalid network: {0}")]
    InvalidNetwork(String),

    #[error("invalid grid: {0}")]
    InvalidGrid(String),

    #[error("invalid training config: {0}")]
    InvalidTraining(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("length mismatch: expected {expected}, got {actual}")]
    LengthMismatch { expected: usize, actual: usize },

    /// ∫ψ² dropped below the collapse threshold; the residual loss is undefined.
    #[error("trial wavefunction collapsed (norm² = {norm_squared:e}) at iteration {iteration}")]
    CollapsedTrial { norm_squared: f64, iteration: usize },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}
