use thiserror::Error;

/// Errors produced anywhere in the crate.
#[derive(Debug, Error)]
pub enum Error {
    /// Operand shapes do not conform.
    #[error("dimension error: {0}")]
    Dimension(String),
    /// An input violates a documented precondition.
    #[error("validation error: {0}")]
    Validation(String),
    /// A numeric procedure failed (non-finite values, no convergence).
    #[error("numeric error: {0}")]
    Numeric(String),
    /// A file does not match its declared on-disk format.
    #[error("format error: {0}")]
    Format(String),
    /// The training loop cannot continue.
    #[error("training error: {0}")]
    Training(String),
    /// An operation was called outside its valid lifecycle.
    #[error("state error: {0}")]
    State(String),
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
