use std::path::PathBuf;

use thiserror::Error;

/// Errors raised by the engine.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid shape {0:?}: every extent must be at least 1")]
    InvalidShape(Vec<usize>),

    #[error("{context}: expected shape {expected:?}, got {actual:?}")]
    ShapeMismatch {
        context: &'static str,
        expected: Vec<usize>,
        actual: Vec<usize>,
    },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("{0}: tensor is empty")]
    Empty(&'static str),

    #[error("{0}: non-finite value encountered")]
    NonFinite(&'static str),

    #[error("label {label} out of range for {classes} classes")]
    LabelOutOfRange { label: usize, classes: usize },

    #[error("decode error: {0}")]
    Decode(String),

    #[error("unknown filter '{0}'")]
    UnknownFilter(String),

    #[error("unknown layer '{0}'")]
    UnknownLayer(String),

    #[error("layer '{layer}': {reason}")]
    Build { layer: String, reason: String },

    #[error("dataset error: {0}")]
    Dataset(String),

    #[error("class '{0}' has no entry in the class mapping")]
    UnmappedClass(String),

    #[error("weight archive: {0}")]
    Archive(#[from] ArchiveError),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("serialization: {0}")]
    Serialize(String),
}

/// Failures specific to reading a weight archive.
#[derive(Debug, Error, PartialEq, Eq)]
pub enum ArchiveError {
    #[error("bad magic bytes")]
    BadMagic,
    #[error("unsupported format version {0}")]
    Version(u32),
    #[error("stream truncated")]
    Truncated,
    #[error("checksum mismatch: stored {stored:#010x}, computed {computed:#010x}")]
    Checksum { stored: u32, computed: u32 },
    #[error("layer '{layer}': {reason}")]
    Layer { layer: String, reason: String },
    #[error("{0}")]
    Malformed(String),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn build(layer: impl Into<String>, reason: impl Into<String>) -> Self {
        Error::Build {
            layer: layer.into(),
            reason: reason.into(),
        }
    }
}
