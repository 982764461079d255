use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("invalid argument: {0}")]
    Argument(String),

    #[error("raster has no valid (non-nodata) pixels")]
    EmptyRaster,

    #[error("extent error: {0}")]
    Extent(String),

    #[error("index ({col}, {row}) out of bounds for {ncols}x{nrows} grid")]
    Index {
        col: usize,
        row: usize,
        ncols: usize,
        nrows: usize,
    },

    #[error("geometry error: {0}")]
    Geometry(String),

    #[error("value {value} outside permitted range [{min}, {max}]: {what}")]
    Range {
        what: String,
        value: f64,
        min: f64,
        max: f64,
    },

    #[error("parse error in {context} at {location}: {message}")]
    Parse {
        context: String,
        location: String,
        message: String,
    },

    #[error("unsupported: {0}")]
    Capability(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub(crate) fn parse(
        context: impl Into<String>,
        location: impl Into<String>,
        message: impl Into<String>,
    ) -> Self {
        Error::Parse {
            context: context.into(),
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
