use std::path::PathBuf;

use thiserror::Error;

use crate::grid::GridShape;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid grid shape {width}x{height}")]
    InvalidShape { width: usize, height: usize },

    #[error("shape mismatch: {left} vs {right}")]
    ShapeMismatch { left: GridShape, right: GridShape },

    #[error("map of length {len} does not fit shape {shape}")]
    LengthMismatch { shape: GridShape, len: usize },

    #[error("no pixel is valid in both flow fields")]
    NoOverlap,

    #[error("invalid parameter: {0}")]
    InvalidParam(String),

    #[error("event {index}: timestamp {t} precedes {last} at pixel ({x}, {y})")]
    EventOutOfOrder {
        index: usize,
        t: u64,
        last: u64,
        x: u16,
        y: u16,
    },

    #[error("query time {t} precedes latest ingested event at {latest}")]
    QueryInPast { t: u64, latest: u64 },

    #[error("{location}: {message}")]
    Format { location: String, message: String },

    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("configuration: {0}")]
    Config(String),
}

impl Error {
    pub(crate) fn format(location: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Format {
            location: location.into(),
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
