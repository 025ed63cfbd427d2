use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid tensor: {0}")]
    InvalidTensor(String),
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("{op} produced a non-finite value")]
    NonFinite { op: &'static str },
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("invalid config: {0}")]
    Config(String),
    #[error("weight file: {0}")]
    WeightFile(String),
    #[error("missing weight tensor `{0}`")]
    MissingWeight(String),
    #[error("{path}: {msg}")]
    Image { path: PathBuf, msg: String },
    #[error("{path}:{line}: {msg}")]
    Label { path: PathBuf, line: usize, msg: String },
    #[error("unknown image id `{0}`")]
    UnknownImage(String),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("json: {0}")]
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
