use std::path::PathBuf;

use thiserror::Error;

/// Errors produced by the toolflow library.
#[derive(Debug, Error)]
pub enum Error {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    /// Malformed input document. `line`/`column` are 1-based when known.
    #[error("{path}:{line}:{column}: {message}")]
    Parse {
        path: PathBuf,
        line: usize,
        column: usize,
        message: String,
    },

    /// A value violates a domain invariant. `context` names the offending
    /// layer, stream or file and `field` the offending field.
    #[error("invalid {field} in {context}: {message}")]
    Invalid {
        context: String,
        field: &'static str,
        message: String,
    },

    #[error("length mismatch for {what}: expected {expected}, got {actual}")]
    LengthMismatch {
        what: &'static str,
        expected: usize,
        actual: usize,
    },

    #[error("{what} index {index} out of range (len {len})")]
    OutOfRange {
        what: &'static str,
        index: usize,
        len: usize,
    },

    #[error("corrupt trace file {path}: {message}")]
    CorruptTrace { path: PathBuf, message: String },

    #[error("infeasible: {0}")]
    Infeasible(String),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

impl Error {
    pub(crate) fn invalid(
        context: impl Into<String>,
        field: &'static str,
        message: impl Into<String>,
    ) -> Self {
        Error::Invalid {
            context: context.into(),
            field,
            message: message.into(),
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
