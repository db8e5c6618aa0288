use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{file}:{line}: {message}")]
    Parse {
        file: String,
        line: usize,
        message: String,
    },

    #[error("interaction of user {user} references unknown item {item:?}")]
    UnknownItem { user: String, item: String },

    #[error("duplicate item id {0:?}")]
    DuplicateItem(String),

    #[error("invalid item {item:?}: {reason}")]
    InvalidItem { item: String, reason: String },

    #[error("user {user} has {len} interactions, at least {min} required")]
    SequenceTooShort { user: String, len: usize, min: usize },

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("dimension mismatch in {context}: expected {expected}, got {got}")]
    Shape {
        context: String,
        expected: String,
        got: String,
    },

    #[error("non-finite value encountered in {0}")]
    NonFinite(String),

    #[error("domain error: {0}")]
    Domain(String),

    #[error("token {token} out of range for level {level} (vocabulary {vocab})")]
    TokenRange { level: usize, token: usize, vocab: usize },

    #[error("item {0:?} has no token assignment")]
    Untokenized(String),

    #[error("checkpoint: {0}")]
    Checkpoint(String),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn shape(context: impl Into<String>, expected: impl ToString, got: impl ToString) -> Self {
        Error::Shape {
            context: context.into(),
            expected: expected.to_string(),
            got: got.to_string(),
        }
    }
}
