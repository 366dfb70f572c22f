use std::path::PathBuf;

use thiserror::Error;

/// Broad failure class, used by the CLI to pick an exit code.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorClass {
    Config,
    Data,
    Numerical,
}

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("degenerate crop: {width:.3}x{height:.3} source pixels (need at least 2x2)")]
    DegenerateCrop { width: f64, height: f64 },

    #[error("shape mismatch for sample `{sample}` layer `{layer}`: expected {expected} values, got {actual}")]
    ShapeMismatch {
        sample: String,
        layer: String,
        expected: usize,
        actual: usize,
    },

    #[error("dimension mismatch: expected {expected}, got {actual}")]
    DimensionMismatch { expected: usize, actual: usize },

    #[error("invalid bundle: {0}")]
    Bundle(String),

    #[error("blob truncated: expected {expected} bytes, found {actual}")]
    Truncated { expected: u64, actual: u64 },

    #[error("unsupported bundle format version {0}")]
    UnsupportedVersion(u8),

    #[error("non-finite value in sample `{sample}` layer `{layer}`")]
    NonFinite { sample: String, layer: String },

    #[error("unknown block id {0}")]
    UnknownBlock(u32),

    #[error("missing samples for pairs: {}", .0.join(", "))]
    MissingPairs(Vec<String>),

    #[error("training diverged at epoch {epoch}: loss is {loss} (learning rate {lr} may be too high)")]
    Diverged { epoch: usize, loss: f64, lr: f64 },

    #[error("source `{source_id}`: {inner}")]
    Source {
        source_id: String,
        #[source]
        inner: Box<Error>,
    },

    #[error("{path}: {inner}")]
    Io {
        path: PathBuf,
        #[source]
        inner: std::io::Error,
    },

    #[error("{path}: {inner}")]
    Json {
        path: PathBuf,
        #[source]
        inner: serde_json::Error,
    },

    #[error("{path}: {inner}")]
    Image {
        path: PathBuf,
        #[source]
        inner: image::ImageError,
    },
}

impl Error {
    pub fn class(&self) -> ErrorClass {
        match self {
            Error::Config(_) | Error::InvalidArgument(_) | Error::UnknownBlock(_) => ErrorClass::Config,
            Error::Diverged { .. } => ErrorClass::Numerical,
            Error::Source { inner, .. } => inner.class(),
            _ => ErrorClass::Data,
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, inner: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            inner,
        }
    }

    pub(crate) fn json(path: impl Into<PathBuf>, inner: serde_json::Error) -> Self {
        Error::Json {
            path: path.into(),
            inner,
        }
    }

    pub(crate) fn image(path: impl Into<PathBuf>, inner: image::ImageError) -> Self {
        Error::Image {
            path: path.into(),
            inner,
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
