use std::io;
use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: io::Error,
    },

    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("missing column `{0}`")]
    MissingColumn(String),

    #[error("invalid code {0:?}: codes must be non-empty and contain no whitespace")]
    InvalidCode(String),

    #[error("invalid input: {0}")]
    Invalid(String),

    #[error("invalid generator spec: {0}")]
    InvalidSpec(String),

    #[error("impossible prefix: {0}")]
    ImpossiblePrefix(String),

    #[error("shape mismatch in {op}: {left:?} vs {right:?}")]
    Shape {
        op: &'static str,
        left: (usize, usize),
        right: (usize, usize),
    },

    #[error("non-finite value produced by {0}")]
    NonFinite(&'static str),

    #[error("checkpoint: {0}")]
    Checkpoint(String),

    #[error("checkpoint field `{field}` mismatch: expected {expected}, found {found}")]
    CheckpointMismatch {
        field: &'static str,
        expected: String,
        found: String,
    },

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    /// Stable machine-readable name of the variant.
    pub fn code(&self) -> &'static str {
        match self {
            Error::Io { source, .. } if source.kind() == io::ErrorKind::NotFound => "not_found",
            Error::Io { .. } => "io",
            Error::Parse { .. } | Error::Json(_) | Error::Csv(_) => "parse",
            Error::MissingColumn(_) => "missing_column",
            Error::InvalidCode(_) => "invalid_code",
            Error::Invalid(_) => "invalid_input",
            Error::InvalidSpec(_) => "invalid_spec",
            Error::ImpossiblePrefix(_) => "impossible_prefix",
            Error::Shape { .. } => "shape",
            Error::NonFinite(_) => "non_finite",
            Error::Checkpoint(_) => "checkpoint",
            Error::CheckpointMismatch { .. } => "checkpoint_mismatch",
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::Invalid(msg.into())
    }
}
