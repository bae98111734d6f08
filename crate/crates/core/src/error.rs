use std::path::PathBuf;

use thiserror::Error;

/// Errors produced anywhere in the training stack.
#[derive(Debug, Error)]
pub enum Error {
    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("duplicate parameter name `{0}`")]
    DuplicateParam(String),

    #[error("unknown parameter `{0}`")]
    UnknownParam(String),

    #[error("non-finite value encountered: {0}")]
    NonFinite(String),

    #[error("empty batch: no valid (unmasked) positions")]
    EmptyBatch,

    #[error("label {label} out of range for {classes} classes")]
    LabelOutOfRange { label: i64, classes: usize },

    #[error("non-finite loss at step {step}")]
    NonFiniteLoss { step: u64 },

    #[error("unsupported dataset version {found} (expected {expected})")]
    DatasetVersion { found: u64, expected: u64 },

    #[error("dataset digest mismatch: header {expected}, payload {found}")]
    DigestMismatch { expected: String, found: String },

    #[error("malformed dataset record at line {line}: {reason}")]
    MalformedRecord { line: usize, reason: String },

    #[error("malformed checkpoint: {0}")]
    Checkpoint(String),

    #[error("unknown ablation variant `{0}`")]
    UnknownVariant(String),

    #[error("config error: {0}")]
    Config(String),

    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
