use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid argument `{name}`: {reason}")]
    InvalidArgument { name: &'static str, reason: String },

    #[error("length mismatch: expected {expected}, found {found}")]
    LengthMismatch { expected: usize, found: usize },

    #[error("states live on different mode grids")]
    GridMismatch,

    #[error("step size mismatch: {what} has step {found}, plan expects {expected}")]
    StepMismatch {
        what: &'static str,
        expected: f64,
        found: f64,
    },

    #[error("path {path} produced a non-finite state at step {step}")]
    NonFinite { path: u64, step: usize },

    #[error("{failed} of {total} paths failed, above the tolerated fraction")]
    TooManyFailures { failed: usize, total: usize },

    #[error("only {found} points available for the rate fit, need at least 3")]
    InsufficientPoints { found: usize },

    #[error("config error in `{field}`: {reason}")]
    Config { field: String, reason: String },

    #[error("i/o error: {0}")]
    Io(String),
}

impl Error {
    pub(crate) fn invalid(name: &'static str, reason: impl Into<String>) -> Self {
        Error::InvalidArgument {
            name,
            reason: reason.into(),
        }
    }
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, Error>;
