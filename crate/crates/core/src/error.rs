use std::io;
use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: io::Error,
    },

    #[error("I/O error: {0}")]
    Stream(#[from] io::Error),

    /// Malformed input. `location` names the byte offset or line number.
    #[error("parse error at {location}: {message}")]
    Parse { location: String, message: String },

    #[error("domain error: {0}")]
    Domain(String),

    #[error("dimension mismatch: expected {expected}, got {actual}")]
    DimensionMismatch { expected: usize, actual: usize },

    #[error("normal equations are rank deficient (pivot {pivot} of {size}); use lambda > 0")]
    RankDeficient { pivot: usize, size: usize },

    #[error("empty design: all {0} pairs are out of vocabulary")]
    EmptyDesign(usize),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("invalid experiment: {0}")]
    Plan(String),
}

impl Error {
    pub(crate) fn parse_at_line(line: usize, message: impl Into<String>) -> Self {
        Error::Parse { location: format!("line {line}"), message: message.into() }
    }

    pub(crate) fn parse_at_byte(offset: u64, message: impl Into<String>) -> Self {
        Error::Parse { location: format!("byte {offset}"), message: message.into() }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: io::Error) -> Self {
        Error::Io { path: path.into(), source }
    }

    /// Numerical failures (rank deficiency, empty designs) as opposed to
    /// configuration or I/O problems.
    pub fn is_numerical(&self) -> bool {
        matches!(self, Error::RankDeficient { .. } | Error::EmptyDesign(_) | Error::Domain(_))
    }
}
