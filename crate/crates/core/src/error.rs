use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("duplicate knob `{0}` in system view")]
    DuplicateKnob(String),

    #[error("knob `{knob}`: cannot parse field `{field}` from {value:?}")]
    BadField {
        knob: String,
        field: &'static str,
        value: String,
    },

    #[error("system view: {0}")]
    SystemView(String),

    #[error("unknown knob `{0}`")]
    UnknownKnob(String),

    #[error("quantity {expr:?}: {reason}")]
    Quantity { expr: String, reason: String },

    #[error("llm: {0}")]
    Llm(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("configuration {kind} for `{knob}` is outside its domain")]
    Domain { knob: String, kind: &'static str },

    #[error("configuration arity {got} does not match space with {expected} dimensions")]
    Arity { expected: usize, got: usize },

    #[error("harness: {0}")]
    Harness(String),

    #[error("session config: {0}")]
    Config(String),

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
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn quantity(expr: &str, reason: impl Into<String>) -> Self {
        Error::Quantity {
            expr: expr.to_string(),
            reason: reason.into(),
        }
    }
}
