use std::io;
use std::path::PathBuf;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: io::Error,
    },

    #[error("invalid header {path}: {msg}")]
    Header { path: PathBuf, msg: String },

    #[error("payload size mismatch: expected {expected} bytes, found {found}")]
    PayloadSize { expected: u64, found: u64 },

    #[error("non-finite sample at index {0}")]
    NonFinite(usize),

    #[error("value {value} out of range for {dtype}")]
    OutOfRange { value: f64, dtype: &'static str },

    #[error("geometry mismatch: {0}")]
    Geometry(String),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("degenerate input: {0}")]
    Degenerate(String),

    #[error("insufficient samples: {0}")]
    InsufficientSamples(String),

    #[error("dataset error: {0}")]
    Dataset(String),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn geometry(msg: impl Into<String>) -> Self {
        Error::Geometry(msg.into())
    }

    pub(crate) fn param(msg: impl Into<String>) -> Self {
        Error::InvalidParameter(msg.into())
    }
}
