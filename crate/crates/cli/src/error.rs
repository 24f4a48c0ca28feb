use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    /// Bad flags, files or configs: exit code 1.
    #[error("{0}")]
    Usage(String),
    #[error(transparent)]
    Core(#[from] d2v_core::Error),
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => 1,
            CliError::Core(e) if e.is_validation() => 1,
            _ => 2,
        }
    }
}

impl From<csv::Error> for CliError {
    fn from(e: csv::Error) -> Self {
        CliError::Usage(format!("csv: {e}"))
    }
}

impl From<serde_json::Error> for CliError {
    fn from(e: serde_json::Error) -> Self {
        CliError::Usage(format!("json: {e}"))
    }
}

pub type CliResult<T> = std::result::Result<T, CliError>;
