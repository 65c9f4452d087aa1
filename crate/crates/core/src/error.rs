use thiserror::Error;

/// Errors produced by the reconstruction library.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid grid: {0}")]
    InvalidGrid(String),
    #[error("invalid geometry: {0}")]
    InvalidGeometry(String),
    #[error("expected image in {expected:?}, got {found:?}")]
    WrongUnit { expected: crate::image::Unit, found: crate::image::Unit },
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("mask selects no pixels")]
    EmptyMask,
    #[error("channel set is empty")]
    EmptyChannelSet,
    #[error("negative line integral {value} at view {view}, channel {channel}")]
    NegativeLineIntegral { view: usize, channel: usize, value: f64 },
    #[error("non-finite value: {0}")]
    NonFinite(String),
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("config error: {0}")]
    Config(String),
    #[error("file format error: {0}")]
    Format(String),
    #[error("I/O error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub(crate) fn io(path: &std::path::Path, source: std::io::Error) -> Self {
        Error::Io { path: path.display().to_string(), source }
    }
}
