use thiserror::Error;

/// Errors raised by the platooning model.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("invalid model parameters: {0}")]
    InvalidParams(String),

    #[error("state {0} is not a member of the state space")]
    UnknownState(String),

    #[error("invalid state: {0}")]
    InvalidState(String),

    #[error("platoon size {size} outside (0, {capacity}]")]
    InvalidSize { size: usize, capacity: usize },

    #[error("value table has no entry for state {0}")]
    MissingValue(String),

    #[error("value iteration did not reach a stable policy after {0} sweeps")]
    NoConvergence(usize),

    #[error("stationary distribution could not be solved: residual {residual:e} after {iterations} iterations")]
    SingularChain { residual: f64, iterations: usize },

    #[error("need at least {needed} results, got {got}")]
    InsufficientData { needed: usize, got: usize },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("csv export failed: {0}")]
    Csv(String),
}

impl From<csv::Error> for Error {
    fn from(err: csv::Error) -> Self {
        Error::Csv(err.to_string())
    }
}

pub type Result<T> = std::result::Result<T, Error>;
