//! Crate-wide error type.

use thiserror::Error;

/// Errors produced by the library.
///
/// The variants separate caller mistakes (bad parameters, malformed files)
/// from internal invariant violations, which the command-line front end
/// maps to distinct exit codes.
#[derive(Debug, Error)]
pub enum Error {
    /// A parameter or input object violates an operation's precondition.
    #[error("invalid input: {0}")]
    InvalidInput(String),
    /// A checked postcondition or structural invariant failed.
    #[error("invariant violated: {0}")]
    Invariant(String),
    /// A serialized artifact could not be parsed.
    #[error("parse error: {0}")]
    Parse(String),
    /// Underlying I/O failure while reading or writing an artifact.
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidInput(msg.into())
    }

    pub(crate) fn invariant(msg: impl Into<String>) -> Self {
        Error::Invariant(msg.into())
    }

    pub(crate) fn parse(msg: impl Into<String>) -> Self {
        Error::Parse(msg.into())
    }
}

/// Result alias used throughout the crate.
pub type Result<T> = std::result::Result<T, Error>;
