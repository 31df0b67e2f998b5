use std::io;
use std::path::PathBuf;

use thiserror::Error;

/// Errors surfaced by the toolkit.
///
/// The three broad classes map onto the CLI exit codes: usage errors are
/// handled by the argument parser, [`Error::Data`] / [`Error::Parse`] /
/// [`Error::Io`] exit with 2, and [`Error::Numeric`] exits with 3.
#[derive(Debug, Error)]
pub enum Error {
    /// Input data violates a format or content requirement.
    #[error("data error: {0}")]
    Data(String),

    /// A malformed line in a structured text file. Line numbers are 1-based.
    #[error("{path}:{line}: {msg}")]
    Parse {
        path: String,
        line: usize,
        msg: String,
    },

    /// A caller violated an operation's contract (empty session, id out of
    /// range, target without a final end-of-sequence symbol, ...).
    #[error("contract violation: {0}")]
    Contract(String),

    /// A computation produced NaN or infinity.
    #[error("numeric error: {0}")]
    Numeric(String),

    /// A checkpoint file has the wrong magic, version, or contents.
    #[error("checkpoint error: {0}")]
    Checkpoint(String),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: io::Error,
    },
}

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
