use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = VprError> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum VprError {
    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    /// Malformed binary input; `offset` is the byte position where decoding failed.
    #[error("{what}: parse error at byte offset {offset}: {message}")]
    Parse {
        what: &'static str,
        offset: usize,
        message: String,
    },

    /// Malformed text input; `line` is 1-based.
    #[error("{what}: line {line}: {message}")]
    Format {
        what: &'static str,
        line: usize,
        message: String,
    },

    #[error("non-finite value at row {row}, column {col}")]
    NonFinite { row: usize, col: usize },

    #[error("dimension mismatch in {context}: expected {expected}, found {found}")]
    DimensionMismatch {
        context: &'static str,
        expected: String,
        found: String,
    },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("no positives: precision/recall undefined")]
    NoPositives,

    #[error("empty precision-recall curve")]
    EmptyCurve,

    #[error("stage `{stage}` failed: {source}")]
    Stage {
        stage: String,
        #[source]
        source: Box<VprError>,
    },
}

impl VprError {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        VprError::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        VprError::InvalidArgument(msg.into())
    }

    pub(crate) fn dims(
        context: &'static str,
        expected: impl ToString,
        found: impl ToString,
    ) -> Self {
        VprError::DimensionMismatch {
            context,
            expected: expected.to_string(),
            found: found.to_string(),
        }
    }

    /// Wraps an error with the name of the pipeline stage that produced it.
    pub fn in_stage(self, stage: impl Into<String>) -> Self {
        VprError::Stage {
            stage: stage.into(),
            source: Box::new(self),
        }
    }
}
