use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("shape error in {op}: {detail}")]
    Shape { op: &'static str, detail: String },

    #[error("{op}: {detail}")]
    InvalidArgument { op: &'static str, detail: String },

    /// A numerical quantity is undefined for the given input (zero mass, zero variance, ...).
    #[error("{op}: {detail}")]
    Degenerate { op: &'static str, detail: String },

    #[error("backward: {0}")]
    Backward(String),

    #[error("image decode error at byte {offset}: {detail}")]
    Image { offset: usize, detail: String },

    #[error("checkpoint error at byte {offset}: {detail}")]
    Checkpoint { offset: usize, detail: String },

    #[error("invalid annotation: {}", .violations.join("; "))]
    Annotation { violations: Vec<String> },

    #[error("invalid config field `{field}`: {detail}")]
    Config { field: String, detail: String },

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
    pub(crate) fn shape(op: &'static str, detail: impl Into<String>) -> Self {
        Error::Shape { op, detail: detail.into() }
    }

    pub(crate) fn invalid(op: &'static str, detail: impl Into<String>) -> Self {
        Error::InvalidArgument { op, detail: detail.into() }
    }

    pub(crate) fn degenerate(op: &'static str, detail: impl Into<String>) -> Self {
        Error::Degenerate { op, detail: detail.into() }
    }

    pub(crate) fn config(field: impl Into<String>, detail: impl Into<String>) -> Self {
        Error::Config { field: field.into(), detail: detail.into() }
    }

    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io { path: path.into(), source }
    }
}
