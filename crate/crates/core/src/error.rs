use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("coordinate out of bounds: {0}")]
    OutOfBounds(String),
    #[error("instance too large: {0}")]
    TooLarge(String),
    #[error("insufficient data: {0}")]
    InsufficientData(String),
    #[error("no convergence: {0}")]
    NonConvergence(String),
    #[error("precondition violated: {0}")]
    Precondition(String),
    #[error("degenerate sample: {0}")]
    Degenerate(String),
    #[error("malformed input: {0}")]
    Format(String),
    #[error("internal error: {0}")]
    Internal(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

macro_rules! ensure {
    ($cond:expr, $variant:ident, $($arg:tt)+) => {
        if !$cond {
            return Err($crate::error::Error::$variant(format!($($arg)+)));
        }
    };
}
pub(crate) use ensure;
