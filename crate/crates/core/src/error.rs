use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    /// A record in an input document could not be decoded.
    #[error("parse error in {record}: {message}")]
    Parse { record: String, message: String },

    /// A line of a JSONL input violates its format.
    #[error("format error at line {line}: {message}")]
    Format { line: usize, message: String },

    #[error("referential integrity: {0}")]
    Integrity(String),

    #[error("lookup failed: {0}")]
    Lookup(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("coverage mismatch: {0}")]
    Coverage(String),

    /// A statistic is undefined for its input (no positives, single class, ...).
    #[error("undefined: {0}")]
    Undefined(String),

    #[error("tau calibration: {0}")]
    Calibration(String),

    #[error("training diverged at epoch {epoch}, step {step}: {message}")]
    Diverged {
        epoch: usize,
        step: usize,
        message: String,
    },
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// True for errors caused by the inputs rather than by the computation.
    pub fn is_input_error(&self) -> bool {
        matches!(
            self,
            Error::Io { .. }
                | Error::Parse { .. }
                | Error::Format { .. }
                | Error::Integrity(_)
                | Error::Lookup(_)
                | Error::Config(_)
                | Error::Coverage(_)
        )
    }
}
