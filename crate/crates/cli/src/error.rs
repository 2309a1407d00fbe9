//! CLI error type and the exit-code contract:
//! 0 success, 2 usage/config, 3 numerical divergence, 4 verification failure.

use prefcal_core::Error as CoreError;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    Config(String),
    #[error("{0}")]
    Core(CoreError),
    #[error("verification failed: {0}")]
    VerificationFailed(String),
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

impl From<CoreError> for CliError {
    fn from(e: CoreError) -> Self {
        CliError::Core(e)
    }
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Core(CoreError::Divergence { .. }) => 3,
            CliError::VerificationFailed(_) => 4,
            _ => 2,
        }
    }
}

pub type CliResult<T> = Result<T, CliError>;
