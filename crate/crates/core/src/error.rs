use std::io;

use thiserror::Error;

/// Errors produced by the attribution toolkit.
#[derive(Debug, Error)]
pub enum Error {
    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("invalid model: {0}")]
    InvalidModel(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("class index {index} out of range for {num_classes} classes")]
    ClassIndex { index: usize, num_classes: usize },

    #[error("invalid layer index {index}: {reason}")]
    LayerIndex { index: usize, reason: String },

    #[error("numerical failure: {0}")]
    Numerical(String),

    #[error("corrupt file: {0}")]
    Corrupt(#[from] FormatError),

    #[error(transparent)]
    Io(#[from] io::Error),
}

/// Reasons a container file is rejected.
#[derive(Debug, Error, PartialEq, Eq)]
pub enum FormatError {
    #[error("bad magic bytes {found:?}, expected {expected:?}")]
    BadMagic { expected: [u8; 4], found: [u8; 4] },

    #[error("unsupported format version {0}")]
    UnsupportedVersion(u16),

    #[error("checksum mismatch in block {block}")]
    Checksum { block: String },

    #[error("file truncated while reading {0}")]
    Truncated(String),

    #[error("malformed content: {0}")]
    Malformed(String),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
