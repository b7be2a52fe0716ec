//! Error type shared across the crate.

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid distribution: {0}")]
    InvalidDistribution(String),

    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),

    #[error("discount factor must lie strictly inside (0, 1), got {0}")]
    InvalidDiscount(f64),

    #[error("value iteration did not converge within {max_iterations} sweeps (residual {residual})")]
    NonConvergence {
        max_iterations: usize,
        residual: f64,
    },

    #[error("linear solve failed: {0}")]
    SingularSystem(String),

    #[error("index out of range: {0}")]
    IndexOutOfRange(String),

    #[error("unknown environment parameters: {0}")]
    UnknownParams(String),

    #[error("unknown task: {0}")]
    UnknownTask(String),

    #[error("unknown family: {0}")]
    UnknownFamily(String),

    #[error("invalid config: {0}")]
    InvalidConfig(String),

    #[error("empty input: {0}")]
    EmptyInput(String),

    #[error("snapshot format error: {0}")]
    SnapshotFormat(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error("csv error: {0}")]
    Csv(String),
}

impl From<csv::Error> for Error {
    fn from(e: csv::Error) -> Self {
        Error::Csv(e.to_string())
    }
}
