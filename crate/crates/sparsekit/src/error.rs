use thiserror::Error;

/// Errors produced by the toolkit.
#[derive(Debug, Error)]
pub enum SparseError {
    #[error("invalid dimensions: {0}")]
    InvalidDimensions(String),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    /// A zero or duplicated column makes a coherence/spark computation meaningless.
    #[error("degenerate dictionary: {0}")]
    DegenerateDictionary(String),

    /// Exhaustive spark/RIP searches refuse to run past their combinatorial guards.
    #[error("combinatorial guard exceeded: {0}")]
    GuardExceeded(String),

    #[error("singular system: {0}")]
    SingularSystem(String),

    #[error("not a frame: {0}")]
    NotAFrame(String),

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),

    #[error("parse error: {0}")]
    Parse(String),
}

pub type Result<T> = std::result::Result<T, SparseError>;
