use thiserror::Error;

/// Errors raised anywhere in the scheduling pipeline.
#[derive(Debug, Error)]
pub enum Error {
    #[error("configuration error: {0}")]
    Config(String),

    #[error("input error: {0}")]
    Input(String),

    #[error("problem too large for exhaustive search: L = {size} exceeds the limit of {limit}")]
    Size { size: usize, limit: usize },

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("invalid state: {0}")]
    State(String),

    #[error("numerical failure: {0}")]
    Numerical(String),

    #[error("incompatible artifacts: {0}")]
    Compatibility(String),

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),

    #[error("malformed record: {0}")]
    Parse(#[from] serde_json::Error),

    #[error("table output error: {0}")]
    Table(#[from] csv::Error),
}

impl Error {
    /// Process exit status for this error class.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Config(_) => 2,
            Error::Input(_) | Error::Size { .. } | Error::Io(_) | Error::Parse(_) | Error::Table(_) => 3,
            Error::Numerical(_) => 4,
            Error::Compatibility(_) | Error::Shape(_) | Error::State(_) => 5,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
