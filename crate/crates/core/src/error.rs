use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    /// Bad shapes, out-of-range parameters, non-finite entries.
    #[error("invalid input: {0}")]
    InvalidInput(String),

    /// The request is valid but beyond what a brute-force or exact routine
    /// is configured to handle.
    #[error("capacity exceeded: {0}")]
    Capacity(String),

    /// A numerical routine failed in a way that contradicts its own
    /// preconditions (singular system where one cannot occur, LP failure).
    #[error("solver failure: {0}")]
    Solver(String),

    #[error("parse error at line {line}, column {column}: {message}")]
    Parse {
        line: usize,
        column: usize,
        message: String,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidInput(msg.into())
    }

    pub(crate) fn solver(msg: impl Into<String>) -> Self {
        Error::Solver(msg.into())
    }
}
