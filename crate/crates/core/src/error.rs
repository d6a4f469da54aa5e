use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("file not found: {}", .0.display())]
    NotFound(PathBuf),

    #[error("mask contains label {0}, expected one of 0, 1, 2, 3")]
    CorruptLabel(u8),

    #[error("invalid dimensions: {0}")]
    InvalidDimensions(String),

    #[error("invalid split: {0}")]
    InvalidSplit(String),

    #[error("dataset is empty")]
    EmptyDataset,

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("empty input")]
    EmptyInput,

    #[error("non-finite {term} at iteration {iteration}")]
    Divergence { iteration: u64, term: &'static str },

    #[error("incompatible checkpoint: format version {found}, expected {expected}")]
    IncompatibleCheckpoint { found: u32, expected: u32 },

    #[error("no model loaded with id {0:?}")]
    ModelNotLoaded(String),

    #[error("invalid raster: {0}")]
    InvalidRaster(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl From<image::ImageError> for Error {
    fn from(err: image::ImageError) -> Self {
        match err {
            image::ImageError::IoError(io) => Error::Io(io),
            other => Error::InvalidRaster(other.to_string()),
        }
    }
}

impl From<serde_json::Error> for Error {
    fn from(err: serde_json::Error) -> Self {
        Error::Io(std::io::Error::new(std::io::ErrorKind::InvalidData, err))
    }
}

impl From<toml::de::Error> for Error {
    fn from(err: toml::de::Error) -> Self {
        Error::InvalidConfig(err.to_string())
    }
}

impl From<toml::ser::Error> for Error {
    fn from(err: toml::ser::Error) -> Self {
        Error::InvalidConfig(err.to_string())
    }
}
