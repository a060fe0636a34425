use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("dataset is empty")]
    EmptyDataset,

    #[error("no interactions left after filtering with min_count={min_count}")]
    EmptyAfterFilter { min_count: usize },

    #[error("cannot split user {user}: {count} interactions, need at least 3")]
    Split { user: String, count: usize },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("training diverged ({context}); try a smaller learning rate")]
    Divergence { context: String },

    #[error("class {class} has {count} member(s); {needed} required")]
    ClassTooSmall {
        class: String,
        count: usize,
        needed: usize,
    },

    #[error("unknown hyperparameter `{key}` for {learner}; accepted keys: {accepted}")]
    UnknownHyperparameter {
        key: String,
        learner: String,
        accepted: String,
    },

    #[error("unknown label `{0}`")]
    UnknownLabel(String),

    #[error("invalid snapshot: {0}")]
    Snapshot(String),

    #[error("index {index} out of range (len {len})")]
    OutOfRange { index: usize, len: usize },
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn diverged(context: impl Into<String>) -> Self {
        Error::Divergence {
            context: context.into(),
        }
    }
}
