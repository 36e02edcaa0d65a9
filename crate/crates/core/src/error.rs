use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    /// Malformed record or document. `line` is 1-based; `offset` is a byte offset into the input.
    #[error("parse error in {path} at line {line} (byte offset {offset}): {message}")]
    Parse {
        path: PathBuf,
        line: usize,
        offset: usize,
        message: String,
    },

    #[error("validation failed: {0}")]
    Validation(String),

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("numerical failure: {0}")]
    Numeric(String),

    #[error("model format version {found} is not supported (expected {expected})")]
    Version { found: u32, expected: u32 },
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// Process exit code used by the command-line tool for this error.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Io { .. } | Error::InvalidInput(_) => 1,
            Error::Parse { .. } | Error::Validation(_) | Error::Version { .. } => 2,
            Error::Numeric(_) => 3,
        }
    }
}
