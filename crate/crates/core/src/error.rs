use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid target: {0}")]
    InvalidTarget(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("time {0} outside the admissible range")]
    TimeOutOfRange(f64),

    #[error("non-finite velocity at step {step}, row {row}")]
    NonFinite { step: usize, row: usize },

    #[error("training diverged at step {step} (loss {loss:e}, initial {initial:e})")]
    Diverged { step: usize, loss: f64, initial: f64 },

    #[error("assignment size {n} exceeds the solver budget of {max}")]
    BudgetExceeded { n: usize, max: usize },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}
