use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("catalog {path}: line {line}, column {column}: {message}")]
    MalformedRow {
        path: PathBuf,
        line: usize,
        column: String,
        message: String,
    },
    #[error("catalog {path}: schema mismatch: {message}")]
    SchemaMismatch { path: PathBuf, message: String },
    #[error("catalog {path}: record {id} references missing image {image}")]
    MissingImage { path: PathBuf, id: String, image: PathBuf },
    #[error("empty catalog")]
    EmptyCatalog,
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("non-finite value: {0}")]
    NonFinite(String),
    #[error("negative vote count {count} in slot {slot}")]
    NegativeVote { slot: usize, count: i64 },
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("image format: {0}")]
    ImageFormat(String),
    #[error("checkpoint format: {0}")]
    Checkpoint(String),
    #[error("unknown family {0:?} (expected residual, dense-connect or compound-scaled)")]
    UnknownFamily(String),
    #[error("unknown config preset {0:?} (expected paper or tiny)")]
    UnknownPreset(String),
    #[error("backward called without a training-mode forward")]
    NoTrainingTape,
    #[error("non-finite loss {loss} at epoch {epoch}, batch {batch}")]
    NonFiniteLoss { epoch: usize, batch: usize, loss: f64 },
    #[error("prediction/truth id mismatch at position {index}: {prediction} vs {truth}")]
    IdMismatch {
        index: usize,
        prediction: String,
        truth: String,
    },
    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
