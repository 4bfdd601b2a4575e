use std::io;

use thiserror::Error;

/// Errors surfaced by every public operation in the crate.
#[derive(Debug, Error)]
pub enum Error {
    /// Input violated a documented precondition.
    #[error("validation error: {0}")]
    Validation(String),
    /// A record in an input stream could not be decoded or failed a
    /// field-level check. `ordinal` is zero-based.
    #[error("malformed record #{ordinal}: {reason}")]
    MalformedRecord { ordinal: u64, reason: String },
    /// Stored data does not match its manifest.
    #[error("corrupt store: {0}")]
    Corrupt(String),
    #[error("I/O error: {0}")]
    Io(#[from] io::Error),
    #[error("JSON error: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn validation(msg: impl Into<String>) -> Self {
        Error::Validation(msg.into())
    }

    /// Process exit code used by the command-line front end.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Validation(_) | Error::MalformedRecord { .. } => 2,
            Error::Io(_) | Error::Json(_) | Error::Corrupt(_) => 3,
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

/// Fails with a validation error naming `field` unless `value` is finite and > 0.
pub(crate) fn require_positive(field: &str, value: f64) -> Result<()> {
    if value.is_finite() && value > 0.0 {
        Ok(())
    } else {
        Err(Error::Validation(format!(
            "{field} must be strictly positive (got {value})"
        )))
    }
}

pub(crate) fn require_non_negative(field: &str, value: f64) -> Result<()> {
    if value.is_finite() && value >= 0.0 {
        Ok(())
    } else {
        Err(Error::Validation(format!(
            "{field} must be non-negative (got {value})"
        )))
    }
}
