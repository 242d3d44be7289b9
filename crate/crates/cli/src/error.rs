use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("usage error: {0}")]
    Usage(String),
    #[error("validation error: {0}")]
    Validation(String),
    #[error("i/o error: {0}")]
    Io(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => 2,
            CliError::Validation(_) => 3,
            CliError::Io(_) => 4,
        }
    }
}

impl From<bats_core::Error> for CliError {
    fn from(e: bats_core::Error) -> Self {
        use bats_core::Error::*;
        match e {
            Validation(m) | Domain(m) | Table(m) => CliError::Validation(m),
            Io(m) | Format(m) => CliError::Io(m),
        }
    }
}
