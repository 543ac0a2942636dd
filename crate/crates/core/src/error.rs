use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch in {context}: expected {expected}, got {got}")]
    Dimension {
        context: String,
        expected: String,
        got: String,
    },

    #[error("validation failed: {0}")]
    Validation(String),

    /// No sample in the data carries a label on any track.
    #[error("no labels present on any track: {0}")]
    NoLabels(String),

    #[error("non-finite gradient in parameter `{param}` at entry {index} (value {value})")]
    NonFiniteGradient {
        param: String,
        index: usize,
        value: f64,
    },

    #[error("{path}:{line}: {message}")]
    Parse {
        path: String,
        line: usize,
        message: String,
    },

    #[error("rule file line {line}: {message}")]
    RuleParse { line: usize, message: String },

    #[error("checkpoint: {0}")]
    Checkpoint(String),

    #[error("checkpoint is incompatible with the data: {0}")]
    CheckpointMismatch(String),

    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub(crate) fn dim(
        context: impl Into<String>,
        expected: impl ToString,
        got: impl ToString,
    ) -> Self {
        Error::Dimension {
            context: context.into(),
            expected: expected.to_string(),
            got: got.to_string(),
        }
    }

    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
