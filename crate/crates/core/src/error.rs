use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("unsupported sample rate {0} Hz (need at least 8000 Hz)")]
    UnsupportedSampleRate(u32),

    #[error("non-finite sample at input index {sample} rejected frame {frame}")]
    NonFiniteSample { frame: usize, sample: usize },

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{what}, line {line}: {msg}")]
    Parse {
        what: &'static str,
        line: u64,
        msg: String,
    },

    #[error("{0}")]
    Invalid(String),

    #[error("index {index} out of range (len {len})")]
    OutOfRange { index: usize, len: usize },

    #[error("length mismatch: {left} reports vs {right} ground-truth frames")]
    LengthMismatch { left: usize, right: usize },

    #[error("DTW matrix of {cells} cells exceeds the cap of {cap}")]
    CapExceeded { cells: usize, cap: usize },

    #[error("wav: {0}")]
    Wav(#[from] hound::Error),

    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn parse(what: &'static str, line: u64, msg: impl Into<String>) -> Self {
        Error::Parse {
            what,
            line,
            msg: msg.into(),
        }
    }
}
