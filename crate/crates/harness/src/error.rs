use saddle_core::CoreError;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("configuration error: {0}")]
    Config(String),

    #[error(transparent)]
    Core(#[from] CoreError),

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),

    #[error("acceptance gate failed: {0}")]
    Gate(String),
}

impl HarnessError {
    /// 2 for configuration and runtime errors, 3 for gate failures.
    pub fn exit_code(&self) -> i32 {
        match self {
            HarnessError::Gate(_) => 3,
            _ => 2,
        }
    }
}

pub type Result<T> = std::result::Result<T, HarnessError>;
