use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    /// Input values that violate a documented precondition.
    #[error("validation error: {0}")]
    Validation(String),

    /// Inconsistent model, ladder, policy or experiment configuration.
    #[error("configuration error: {0}")]
    Config(String),

    #[error("context of {len} tokens exceeds the model limit of {max}")]
    ContextOverflow { len: usize, max: usize },

    #[error("empty batch")]
    EmptyBatch,

    #[error("trace has no rounds")]
    EmptyTrace,

    #[error("non-finite loss {loss} at exit {exit}")]
    NonFiniteLoss { loss: f64, exit: usize },

    #[error("corrupt checkpoint header: {0}")]
    CorruptHeader(String),

    #[error("checkpoint shape mismatch for `{name}`: expected {expected} values, manifest declares {found}")]
    ShapeMismatch {
        name: String,
        expected: usize,
        found: usize,
    },

    #[error("checkpoint payload truncated: expected {expected} bytes, found {found}")]
    Truncated { expected: usize, found: usize },

    #[error("zero elapsed time in wall-clock measurement")]
    ZeroElapsed,

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}

macro_rules! ensure {
    ($cond:expr, $variant:ident, $($fmt:tt)+) => {
        if !$cond {
            return Err($crate::error::Error::$variant(format!($($fmt)+)));
        }
    };
}
pub(crate) use ensure;
