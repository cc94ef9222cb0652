//! Crate-wide error type.

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("shape mismatch in {context}: expected {expected}, got {got}")]
    ShapeMismatch {
        context: &'static str,
        expected: String,
        got: String,
    },

    #[error("empty input: {0}")]
    EmptyInput(&'static str),

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("dimension {dim} of size {size} is not divisible by pool size {pool}")]
    NotDivisible { dim: &'static str, size: usize, pool: usize },

    #[error("non-finite value encountered in {0}")]
    NonFinite(String),

    #[error("annotation parse error at line {line}: {message}")]
    AnnotationParse { line: usize, message: String },

    #[error("unknown label {label:?}; known labels: {known:?}")]
    UnknownLabel { label: String, known: Vec<String> },

    #[error("corpus error: {0}")]
    Corpus(String),

    #[error("audio error: {0}")]
    Audio(String),

    #[error("checkpoint error: {0}")]
    Checkpoint(String),

    #[error("io error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub(crate) fn io(path: impl Into<String>, source: std::io::Error) -> Self {
        Error::Io { path: path.into(), source }
    }

    pub(crate) fn shape(context: &'static str, expected: impl Into<String>, got: impl Into<String>) -> Self {
        Error::ShapeMismatch { context, expected: expected.into(), got: got.into() }
    }
}
