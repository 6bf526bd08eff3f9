use alloc::string::String;

/// Errors produced by the numerical core.
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum CoreError {
    #[error("series too short: need at least {need} points, got {got}")]
    TooShort { need: usize, got: usize },
    #[error("zero variance: {0}")]
    ZeroVariance(String),
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("capacity exceeded: need {need} columns, capacity is {capacity}")]
    CapacityExceeded { need: usize, capacity: usize },
    #[error("empty input: {0}")]
    EmptyInput(String),
    #[error("non-finite value encountered: {0}")]
    NonFinite(String),
}
