use std::io;

use thiserror::Error;

/// Errors raised across the toolkit.
///
/// The variants map onto the command-line exit codes: usage and domain
/// problems exit with 1, I/O and file-format problems with 2, numeric
/// failures with 3.
#[derive(Debug, Error)]
pub enum Error {
    /// A value violates a documented domain constraint.
    #[error("domain error: {0}")]
    Domain(String),

    /// The caller asked for something the operation cannot do with the given inputs.
    #[error("usage error: {0}")]
    Usage(String),

    #[error("i/o error: {0}")]
    Io(#[from] io::Error),

    /// A file could be read but its content is malformed.
    #[error("format error: {0}")]
    Format(String),

    /// A computation could not produce a meaningful value.
    #[error("numeric failure: {0}")]
    Numeric(String),
}

impl Error {
    pub fn domain(msg: impl Into<String>) -> Self {
        Error::Domain(msg.into())
    }

    pub fn usage(msg: impl Into<String>) -> Self {
        Error::Usage(msg.into())
    }

    pub fn format(msg: impl Into<String>) -> Self {
        Error::Format(msg.into())
    }

    pub fn numeric(msg: impl Into<String>) -> Self {
        Error::Numeric(msg.into())
    }

    /// Process exit code for this error class.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Domain(_) | Error::Usage(_) => 1,
            Error::Io(_) | Error::Format(_) => 2,
            Error::Numeric(_) => 3,
        }
    }
}

impl From<serde_json::Error> for Error {
    fn from(err: serde_json::Error) -> Self {
        if err.is_io() {
            Error::Io(err.into())
        } else {
            Error::Usage(format!("invalid JSON: {err}"))
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
