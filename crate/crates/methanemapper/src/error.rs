use std::path::Path;

use methanemapper_core::Error as CoreError;

pub type Result<T, E = AppError> = std::result::Result<T, E>;

/// Failure of a pipeline command, split by who has to act on it.
#[derive(Debug, thiserror::Error)]
pub enum AppError {
    /// Bad input, configuration or arguments.
    #[error("{0}")]
    User(String),
    #[error("internal error: {0}")]
    Internal(String),
}

impl AppError {
    pub fn exit_code(&self) -> i32 {
        match self {
            AppError::User(_) => 2,
            AppError::Internal(_) => 1,
        }
    }

    pub fn user(msg: impl Into<String>) -> Self {
        AppError::User(msg.into())
    }

    pub fn internal(msg: impl Into<String>) -> Self {
        AppError::Internal(msg.into())
    }

    /// Prefixes the message with the file it concerns.
    pub fn at(self, path: &Path) -> Self {
        match self {
            AppError::User(m) => AppError::User(format!("{}: {m}", path.display())),
            AppError::Internal(m) => AppError::Internal(format!("{}: {m}", path.display())),
        }
    }
}

impl From<CoreError> for AppError {
    fn from(e: CoreError) -> Self {
        use CoreError::*;
        match e {
            NotPositiveDefinite | ZeroDenominator | NonFiniteCost | TooFewPredictions { .. } | OddDimension(_) => {
                AppError::Internal(e.to_string())
            }
            other => AppError::User(other.to_string()),
        }
    }
}

impl From<std::io::Error> for AppError {
    fn from(e: std::io::Error) -> Self {
        use std::io::ErrorKind::*;
        match e.kind() {
            NotFound | PermissionDenied | InvalidData | UnexpectedEof => AppError::User(format!("io failure: {e}")),
            _ => AppError::Internal(format!("io failure: {e}")),
        }
    }
}

impl From<serde_json::Error> for AppError {
    fn from(e: serde_json::Error) -> Self {
        AppError::User(format!("malformed JSON: {e}"))
    }
}

/// Attaches a path to errors of any convertible kind.
pub trait Context<T> {
    fn at(self, path: &Path) -> Result<T>;
}

impl<T, E: Into<AppError>> Context<T> for std::result::Result<T, E> {
    fn at(self, path: &Path) -> Result<T> {
        self.map_err(|e| e.into().at(path))
    }
}
