//! Crate-wide error type.
//!
//! Every fallible operation returns [`Result`]. Domain violations (bad
//! arguments, inconsistent grids, malformed data) are reported through
//! dedicated variants so callers can distinguish them from I/O failures.

use std::path::PathBuf;

/// Convenience alias used throughout the crate.
pub type Result<T> = std::result::Result<T, Error>;

/// Errors produced by this crate.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    /// A scalar or vector argument violated a documented precondition.
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    /// Two objects that must share a time grid do not.
    #[error("grid mismatch: {0}")]
    GridMismatch(String),

    /// A time fell outside the domain of the function it was applied to.
    #[error("time {t} outside domain [0, {horizon})")]
    OutOfDomain {
        /// Offending time, in hours.
        t: f64,
        /// Exclusive upper end of the domain, in hours.
        horizon: f64,
    },

    /// A user id was not found where one was required.
    #[error("unknown user: {0}")]
    UnknownUser(String),

    /// Malformed textual input (event logs, follow graphs).
    #[error("parse error at line {line}: {message}")]
    Parse {
        /// 1-based line number of the offending record.
        line: usize,
        /// Human-readable description of the problem.
        message: String,
    },

    /// Structurally invalid interchange file (schemas, versions, lengths).
    #[error("invalid file: {0}")]
    InvalidFile(String),

    /// JSON (de)serialization failure.
    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),

    /// An I/O failure, annotated with the path when one is known.
    #[error("i/o error on {path}: {source}")]
    Io {
        /// Path involved in the failed operation.
        path: PathBuf,
        /// Underlying error.
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    /// Builds an [`Error::InvalidArgument`] from anything displayable.
    pub fn invalid(msg: impl std::fmt::Display) -> Self {
        Error::InvalidArgument(msg.to_string())
    }

    /// Attaches a path to a raw I/O error.
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// True when the error stems from the machine rather than the input.
    pub fn is_io(&self) -> bool {
        matches!(self, Error::Io { .. })
    }
}
