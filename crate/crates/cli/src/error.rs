//! Command-level error taxonomy mapped onto process exit codes.

use thiserror::Error;

/// Exit codes: 0 success, 1 config error, 2 data error, 3 numeric
/// failure, 4 partial ablation.
#[derive(Debug, Error)]
pub enum CliError {
    #[error("config error: {0}")]
    Config(String),
    #[error("data error: {0}")]
    Data(String),
    #[error("numeric failure: {0}")]
    Numeric(String),
    #[error("partial ablation: {0}")]
    PartialAblation(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 1,
            CliError::Data(_) => 2,
            CliError::Numeric(_) => 3,
            CliError::PartialAblation(_) => 4,
        }
    }

    pub fn config(msg: impl Into<String>) -> Self {
        CliError::Config(msg.into())
    }

    pub fn data(msg: impl Into<String>) -> Self {
        CliError::Data(msg.into())
    }
}

/// Core errors arising while processing data files: numeric failures
/// keep their own exit code, everything else is a data problem.
impl From<factordiff_core::Error> for CliError {
    fn from(err: factordiff_core::Error) -> Self {
        match err {
            factordiff_core::Error::Numeric(_) => CliError::Numeric(err.to_string()),
            _ => CliError::Data(err.to_string()),
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(err: std::io::Error) -> Self {
        CliError::Data(format!("i/o: {err}"))
    }
}

pub type CliResult<T> = Result<T, CliError>;
