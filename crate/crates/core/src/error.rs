use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("configuration error: {0}")]
    Config(String),

    #[error("channel mismatch: expected {expected}, got {got}")]
    ChannelMismatch { expected: usize, got: usize },

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("empty batch")]
    EmptyBatch,

    #[error("non-finite value in `{tensor}`")]
    NonFinite { tensor: String },

    #[error(transparent)]
    Checkpoint(#[from] CheckpointError),

    #[error("dataset errors:\n  {}", .0.join("\n  "))]
    Dataset(Vec<String>),

    #[error("input is not binary: found value {0}")]
    NonBinary(f64),

    #[error("ground truth has no non-uniform 8x8 block but prediction differs from it")]
    DegenerateGroundTruth,

    #[error("{path}: {source}")]
    Image {
        path: PathBuf,
        #[source]
        source: image::ImageError,
    },

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

/// Load/save failures for the tensor container format.
#[derive(Debug, Error)]
pub enum CheckpointError {
    #[error("unsupported container version `{found}` (expected `{expected}`)")]
    Version { found: String, expected: String },

    #[error("malformed manifest at line {line}: {msg}")]
    Manifest { line: usize, msg: String },

    #[error("truncated payload: tensor `{name}` needs bytes up to {needed}, file payload has {available}")]
    Truncated { name: String, needed: u64, available: u64 },

    #[error("shape mismatch for `{name}`: expected {expected:?}, found {found:?}")]
    ShapeMismatch {
        name: String,
        expected: Vec<usize>,
        found: Vec<usize>,
    },

    #[error("missing tensors: {}", .0.join(", "))]
    MissingTensors(Vec<String>),

    #[error("unsupported dtype `{0}`")]
    Dtype(String),
}
