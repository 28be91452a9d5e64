use thiserror::Error;

/// Crate-wide error type.
#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: expected length {expected}, got {actual}")]
    DimensionMismatch { expected: usize, actual: usize },

    #[error("unsupported tensor order {order}: {reason}")]
    UnsupportedOrder { order: usize, reason: &'static str },

    #[error("index {index} out of range for dimension {dim}")]
    IndexOutOfRange { index: usize, dim: usize },

    #[error("sparsity level {s} out of range [1, {bound}]")]
    SparsityOutOfRange { s: usize, bound: usize },

    #[error("resource limit exceeded: {0}")]
    ResourceLimit(String),

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("invalid input: {0}")]
    InvalidInput(String),

    /// Armijo backtracking ran out of trial steps; the solver maps this to
    /// a `LinesearchFailed` status.
    #[error("line search exhausted after {0} backtracking steps")]
    LineSearchExhausted(usize),

    /// The start point is the origin with a nonzero right-hand side; for
    /// order >= 3 the gradient vanishes there and no progress is possible.
    #[error("degenerate start: x0 = 0 with nonzero right-hand side")]
    DegenerateStart,

    #[error("I/O error: {0}")]
    Io(#[from] std::io::Error),

    #[error("JSON error: {0}")]
    Json(#[from] serde_json::Error),

    #[error("CSV error: {0}")]
    Csv(#[from] csv::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
