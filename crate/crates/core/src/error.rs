use thiserror::Error;

/// Errors produced by the simulator and the optimizer.
#[derive(Debug, Error)]
pub enum Error {
    #[error("configuration error: {0}")]
    Config(String),

    #[error("domain error: {0}")]
    Domain(String),

    #[error("path index out of bounds: {0}")]
    IndexOutOfBounds(String),

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("off-grid delay: tau*M/T = {0} is not an integer")]
    OffGridDelay(f64),

    #[error("grid too small: {0}")]
    GridTooSmall(String),

    #[error("estimator degenerate: {0}")]
    EstimatorDegenerate(String),

    #[error("degenerate scenario: {0}")]
    DegenerateScenario(String),

    #[error("lattice too large for dense assembly (MN = {0}); use the factored form")]
    UseFactoredForm(usize),

    #[error("lattice too large for the full per-symbol SE (MN = {0}); use the lower bound")]
    UseLowerBound(usize),

    #[error("sensing constraint infeasible: required {required:.6e}, best achievable {achievable:.6e}")]
    Infeasible { required: f64, achievable: f64 },

    #[error("max-min objective decreased from {previous} to {current}")]
    NonMonotone { previous: f64, current: f64 },

    #[error("I/O error: {0}")]
    Io(#[from] std::io::Error),

    #[error("serialization error: {0}")]
    Serialization(String),
}

pub type Result<T> = std::result::Result<T, Error>;

impl From<serde_json::Error> for Error {
    fn from(e: serde_json::Error) -> Self {
        Error::Serialization(e.to_string())
    }
}

impl From<csv::Error> for Error {
    fn from(e: csv::Error) -> Self {
        Error::Serialization(e.to_string())
    }
}
