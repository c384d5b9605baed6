use thiserror::Error;

/// Errors raised across the toolkit.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    /// Every weight in a normalization was zero (all log-weights were -inf).
    #[error("total weight is zero; the particle system is degenerate")]
    TotalWeightZero,

    #[error("configuration error in `{key}`: {message}")]
    Config { key: String, message: String },

    #[error("parameter transform error for `{name}`: value {value} is on or outside the boundary")]
    Transform { name: String, value: f64 },

    #[error("ingest error at line {line}: {message}")]
    Ingest { line: usize, message: String },

    #[error("filter variant `{variant}` is not supported by model `{model}`")]
    UnsupportedVariant { variant: String, model: String },

    #[error("mixture fit failed: {0}")]
    Fit(String),

    #[error("evidence estimation failed: {0}")]
    Evidence(String),

    #[error("i/o error: {0}")]
    Io(String),
}

impl Error {
    pub fn config(key: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Config {
            key: key.into(),
            message: message.into(),
        }
    }
}

impl From<std::io::Error> for Error {
    fn from(err: std::io::Error) -> Self {
        Error::Io(err.to_string())
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
