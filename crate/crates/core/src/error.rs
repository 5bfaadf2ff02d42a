use std::path::PathBuf;

use crate::trace::Violation;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("malformed JSON in {path}: {source}")]
    Json {
        path: PathBuf,
        #[source]
        source: serde_json::Error,
    },

    #[error("unsupported format_version {0}")]
    UnsupportedFormat(u64),

    #[error("signal payload size mismatch in {path}: expected {expected} bytes, found {actual}")]
    PayloadSize {
        path: PathBuf,
        expected: usize,
        actual: usize,
    },

    #[error("trace validation failed: {}", join_violations(.0))]
    Validation(Vec<Violation>),

    #[error("missing plane {0}")]
    MissingPlane(String),

    #[error("missing predictions: robust accuracy needs both predictions and truth")]
    MissingPredictions,

    #[error("object subset is empty")]
    EmptySubset,

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("dimension mismatch: assessor expects {expected} inputs, got {actual}")]
    Dimension { expected: usize, actual: usize },

    #[error("training set is empty")]
    EmptyTrainingSet,

    #[error("{0}")]
    InvalidArgument(String),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }
}

fn join_violations(v: &[Violation]) -> String {
    v.iter()
        .map(|x| x.to_string())
        .collect::<Vec<_>>()
        .join("; ")
}
