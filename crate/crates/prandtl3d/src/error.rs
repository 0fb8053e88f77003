//! Crate-wide error type and exit-code mapping.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    /// Configuration or input validation failed (exit code 2).
    #[error("validation: {0}")]
    Validation(String),
    /// A numerical failure: blow-up, NaN, singular solve, CFL violation (exit code 3).
    #[error("numerics: {0}")]
    Numerics(String),
    /// File input/output failure (exit code 4).
    #[error("io: {0}")]
    Io(String),
}

impl Error {
    pub fn validation(msg: impl Into<String>) -> Self {
        Error::Validation(msg.into())
    }
    pub fn numerics(msg: impl Into<String>) -> Self {
        Error::Numerics(msg.into())
    }
    pub fn io(msg: impl Into<String>) -> Self {
        Error::Io(msg.into())
    }

    /// Stable process exit code contract: 0 success, 2 validation, 3 numerical, 4 I/O.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Validation(_) => 2,
            Error::Numerics(_) => 3,
            Error::Io(_) => 4,
        }
    }
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

impl From<serde_json::Error> for Error {
    fn from(e: serde_json::Error) -> Self {
        Error::Validation(format!("json: {e}"))
    }
}

pub type Result<T> = std::result::Result<T, Error>;
