use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error(transparent)]
    Core(#[from] bliss_core::Error),
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
    #[error("{0}")]
    Io(#[from] std::io::Error),
    #[error("{0}")]
    Invalid(String),
}

impl CliError {
    /// 2 for filesystem trouble, 1 for everything the user can fix in the
    /// inputs or flags.
    pub fn exit_code(&self) -> i32 {
        let io = match self {
            CliError::Core(e) => e.is_io(),
            CliError::Csv(e) => e.is_io_error(),
            CliError::Io(_) => true,
            CliError::Invalid(_) => false,
        };
        if io {
            2
        } else {
            1
        }
    }
}

pub type CliResult<T> = Result<T, CliError>;

pub fn invalid(msg: impl Into<String>) -> CliError {
    CliError::Invalid(msg.into())
}
