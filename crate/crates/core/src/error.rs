use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("{op}: shape mismatch between {left:?} and {right:?}")]
    Shape {
        op: &'static str,
        left: Vec<usize>,
        right: Vec<usize>,
    },

    #[error("invalid tensor: {0}")]
    Tensor(String),

    #[error("backward requires a scalar root, got shape {0:?}")]
    NonScalarRoot(Vec<usize>),

    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("no embeddings")]
    NoEmbeddings,

    #[error("covariance matrix is singular even after regularization ({0})")]
    Singular(String),

    #[error("unmapped tags: {}", .0.join(", "))]
    UnmappedTags(Vec<String>),

    #[error("unknown tag {0:?}")]
    UnknownTag(String),

    #[error("corpus too small to split: {0} sentences (need at least 41)")]
    CorpusTooSmall(usize),

    #[error("embedding space mismatch: model expects {expected:?}, got {found:?}")]
    SpaceMismatch { expected: String, found: String },

    #[error("tagset mismatch: {0}")]
    TagsetMismatch(String),

    #[error("{0}: non-finite value")]
    NonFinite(&'static str),

    #[error("training diverged at epoch {epoch} (last finite loss {last_finite_loss})")]
    Divergence { epoch: usize, last_finite_loss: f64 },

    #[error("annotation pool exhausted")]
    PoolExhausted,

    #[error("model format: {0}")]
    ModelFormat(String),

    #[error("{0}")]
    Invalid(String),
}

impl Error {
    pub fn invalid(msg: impl Into<String>) -> Self {
        Error::Invalid(msg.into())
    }

    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// True for failures caused by numerical blow-up rather than bad input.
    pub fn is_numerical(&self) -> bool {
        matches!(self, Error::Divergence { .. } | Error::NonFinite(_))
    }
}
