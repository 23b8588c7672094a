//! Crate-wide error type.
//!
//! Variants map one-to-one onto the CLI exit codes: config/usage problems
//! exit 2, data validation failures exit 3, numeric failures exit 4.

/// Error raised by library operations.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    /// Invalid configuration, shapes, arguments or file contents.
    #[error("config error: {0}")]
    Config(String),

    /// Input data violates a stated precondition (e.g. a training point
    /// outside the constraint set).
    #[error("data validation error: {0}")]
    Data(String),

    /// A computation produced a non-finite value.
    #[error("numeric failure: {0}")]
    Numeric(String),

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

impl Error {
    pub fn config(msg: impl Into<String>) -> Self {
        Error::Config(msg.into())
    }
    pub fn data(msg: impl Into<String>) -> Self {
        Error::Data(msg.into())
    }
    pub fn numeric(msg: impl Into<String>) -> Self {
        Error::Numeric(msg.into())
    }

    /// Process exit code for this error class.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Config(_) | Error::Io(_) => 2,
            Error::Data(_) => 3,
            Error::Numeric(_) => 4,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
