use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("{op}: shape mismatch between {lhs:?} and {rhs:?}")]
    Shape { op: &'static str, lhs: Vec<usize>, rhs: Vec<usize> },

    #[error("{0}")]
    InvalidArgument(String),

    #[error("invalid network spec: {0}")]
    Spec(String),

    #[error("backward called on a consumed graph")]
    GraphConsumed,

    #[error("expected a scalar, got shape {0:?}")]
    NonScalar(Vec<usize>),

    #[error("non-finite loss at epoch {epoch}")]
    Divergence { epoch: usize },

    #[error("registration unreliable: correlation peak {peak:.4} below 0.2")]
    Unreliable { peak: f64 },

    #[error("{path}: malformed image at byte {offset}: {msg}")]
    Format { path: String, offset: usize, msg: String },

    #[error("config: {0}")]
    Config(String),

    #[error("data: {0}")]
    Data(String),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }

    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io { path: path.into(), source }
    }
}
