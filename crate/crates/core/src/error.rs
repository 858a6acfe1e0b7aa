use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    /// A tensor extent did not match what an operation requires.
    #[error("{op}: dimension mismatch on {axis}: expected {expected}, got {actual}")]
    Dimension {
        op: &'static str,
        axis: String,
        expected: String,
        actual: String,
    },

    #[error("invalid argument: {0}")]
    Argument(String),

    /// An API was driven in the wrong order, e.g. a backward pass without its forward context.
    #[error("usage error: {0}")]
    Usage(String),

    #[error("numerical error: {0}")]
    Numerical(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error("weight store: {0}")]
    WeightStore(String),

    #[error(transparent)]
    Load(#[from] LoadError),

    #[error(transparent)]
    Image(#[from] ImageError),

    #[error("{path}: line {line}: {message}")]
    Parse {
        path: PathBuf,
        line: u64,
        message: String,
    },

    #[error("empty input: {0}")]
    EmptyInput(String),

    #[error("AUC undefined: {0}")]
    UndefinedAuc(String),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub(crate) fn dim(
        op: &'static str,
        axis: impl Into<String>,
        expected: impl ToString,
        actual: impl ToString,
    ) -> Self {
        Error::Dimension {
            op,
            axis: axis.into(),
            expected: expected.to_string(),
            actual: actual.to_string(),
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}

/// Failures while reading a weight manifest and its blob.
#[derive(Debug, Error)]
pub enum LoadError {
    #[error("malformed weight manifest: {0}")]
    Manifest(String),

    #[error("unknown dtype {0:?} (only \"f32le\" is supported)")]
    UnknownDtype(String),

    #[error("blob truncated: expected {expected} bytes, found {actual}")]
    Truncated { expected: u64, actual: u64 },

    #[error("manifest/blob length mismatch: records cover {records} bytes, blob has {blob}")]
    LengthMismatch { records: u64, blob: u64 },

    #[error("blob checksum mismatch: manifest crc32 {expected}, computed {actual}")]
    Checksum { expected: String, actual: String },
}

#[derive(Debug, Error)]
pub enum ImageError {
    #[error("bad magic number {0:?} (expected P6)")]
    BadMagic(String),

    #[error("unsupported maxval {0} (only 255 is supported)")]
    BadMaxval(u32),

    #[error("malformed header: {0}")]
    Header(String),

    #[error("truncated pixel data: expected {expected} bytes, found {actual}")]
    Truncated { expected: usize, actual: usize },

    #[error("unsupported image format: {0}")]
    Unsupported(String),
}
