use thiserror::Error;

/// Errors shared by every module of the crate.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid distance matrix: {0}")]
    InvalidMatrix(String),

    #[error("instance too large for exact mode: {size} points exceeds cap {cap}")]
    InstanceTooLarge { size: usize, cap: usize },

    #[error("index {index} exceeds stored family length {length}")]
    IndexOutOfRange { index: usize, length: usize },

    #[error("precondition violated: {0}")]
    Precondition(String),

    #[error("certificate search budget exhausted at level {level} of {r}: {reason}")]
    BudgetExhausted {
        level: usize,
        r: usize,
        reason: String,
        /// Best deviation reached on the failing level, when one was measured.
        best_margin: Option<f64>,
    },

    #[error("certificate verification failed: {0}")]
    VerificationFailed(String),

    #[error("construction consistency fault: {0}")]
    ConstructionFault(String),

    #[error("malformed input: {0}")]
    Parse(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
