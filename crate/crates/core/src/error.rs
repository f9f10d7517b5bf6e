use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("{op}: shape mismatch between {left:?} and {right:?}")]
    ShapeMismatch {
        op: &'static str,
        left: Vec<usize>,
        right: Vec<usize>,
    },

    #[error("{op}: axis {axis} out of range for rank {rank}")]
    InvalidAxis {
        op: &'static str,
        axis: usize,
        rank: usize,
    },

    #[error("backward requires a scalar root, got dims {0:?}")]
    NonScalarRoot(Vec<usize>),

    #[error("{layer}: invalid geometry: {detail}")]
    Geometry { layer: &'static str, detail: String },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("missing target for enabled head `{0}`")]
    MissingTarget(&'static str),

    #[error("dataset: {0}")]
    Dataset(String),

    #[error("non-finite {what} at {location}")]
    NonFinite { what: String, location: String },

    #[error("parameter mismatch: {0}")]
    ParamMismatch(String),

    #[error(transparent)]
    Container(#[from] ContainerError),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("config: {0}")]
    Config(String),
}

impl Error {
    pub(crate) fn geometry(layer: &'static str, detail: impl Into<String>) -> Self {
        Error::Geometry {
            layer,
            detail: detail.into(),
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}

/// Failures decoding the binary dataset and weight containers.
#[derive(Debug, Error)]
pub enum ContainerError {
    #[error("bad magic: expected {expected:?}, found {found:?}")]
    BadMagic { expected: [u8; 4], found: [u8; 4] },

    #[error("unsupported version {0}")]
    UnsupportedVersion(u16),

    #[error("truncated container: needed {needed} more bytes at offset {offset}")]
    Truncated { offset: usize, needed: usize },

    #[error("header declares {declared} records but {found} are present")]
    CountMismatch { declared: usize, found: usize },

    #[error("malformed container: {0}")]
    Malformed(String),
}

impl ContainerError {
    /// Stable numeric code, one per failure class.
    pub fn code(&self) -> u8 {
        match self {
            ContainerError::BadMagic { .. } => 1,
            ContainerError::UnsupportedVersion(_) => 2,
            ContainerError::Truncated { .. } => 3,
            ContainerError::CountMismatch { .. } => 4,
            ContainerError::Malformed(_) => 5,
        }
    }
}
