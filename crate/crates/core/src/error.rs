use thiserror::Error;

/// Errors raised by problem construction, the exact engine, the bounds and the oracles.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("degenerate problem: {0}")]
    DegenerateProblem(String),

    /// The step size violates `eta <= 1 / (lambda_max + alpha * tr(H))`.
    #[error("step size {eta} exceeds the stability limit {limit}")]
    StabilityViolation { eta: f64, limit: f64 },

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("trajectory holds states up to t = {available}, window needs t = {needed}")]
    TrajectoryTooShort { available: usize, needed: usize },

    #[error("singular system: {0}")]
    Singular(String),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn invalid(msg: impl Into<String>) -> Error {
    Error::InvalidArgument(msg.into())
}
