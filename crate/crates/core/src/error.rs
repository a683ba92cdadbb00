use std::path::PathBuf;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("parse error at line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("non-finite value at row {row}, column {column}")]
    NonFinite { row: usize, column: usize },

    #[error("configuration error: {0}")]
    Config(String),

    #[error("degenerate channel `{0}`: zero variance")]
    Degenerate(String),

    #[error("ill-conditioned matrix (condition number {condition:.3e})")]
    Conditioning { condition: f64 },

    #[error("index out of range: {0}")]
    Index(String),

    #[error("invariant violated for `{field}`: {message}")]
    Invariant { field: String, message: String },

    #[error("integration blew up at t = {time}")]
    Integration { time: f64 },

    #[error("fit failed: {0}")]
    Fit(String),

    #[error("internal error: {0}")]
    Internal(String),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn invariant(field: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Invariant {
            field: field.into(),
            message: message.into(),
        }
    }
}
