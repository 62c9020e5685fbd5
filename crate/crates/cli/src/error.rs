use std::io;

/// Failures of a CLI run, each mapped to a stable exit code.
#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("config error: {0}")]
    Config(String),
    #[error("refusing unstable problem: {0}")]
    Unstable(String),
    #[error("verification failed: {0}")]
    Verification(String),
    #[error("output error: {0}")]
    Io(#[from] io::Error),
    #[error(transparent)]
    Core(sgdrisk::Error),
}

impl From<sgdrisk::Error> for CliError {
    fn from(e: sgdrisk::Error) -> Self {
        match e {
            sgdrisk::Error::StabilityViolation { .. } => CliError::Unstable(e.to_string()),
            other => CliError::Core(other),
        }
    }
}

impl CliError {
    /// 0 success, 1 verification failure, 2 config error, 3 stability refusal.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Verification(_) | CliError::Core(_) => 1,
            CliError::Config(_) | CliError::Io(_) => 2,
            CliError::Unstable(_) => 3,
        }
    }
}
