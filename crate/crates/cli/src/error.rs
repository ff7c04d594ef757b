use std::path::PathBuf;

/// Exit codes, also listed in `--help`.
pub const EXIT_OTHER: u8 = 1;
pub const EXIT_USAGE: u8 = 2;
pub const EXIT_IO: u8 = 3;
pub const EXIT_CHECKPOINT: u8 = 4;
pub const EXIT_DIVERGED: u8 = 5;

pub const EXIT_CODES_HELP: &str = "\
Exit codes:
  0  success
  1  unexpected failure
  2  bad usage, configuration or input data
  3  missing or unreadable file or directory
  4  corrupt or mismatched checkpoint
  5  training or adaptation diverged";

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error("{path}: {message}")]
    Io { path: PathBuf, message: String },
    #[error(transparent)]
    Core(#[from] selfvsr::Error),
    #[error("{0}")]
    Other(String),
}

impl CliError {
    pub fn io(path: impl Into<PathBuf>, err: impl std::fmt::Display) -> Self {
        CliError::Io { path: path.into(), message: err.to_string() }
    }

    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Usage(_) => EXIT_USAGE,
            CliError::Io { .. } => EXIT_IO,
            CliError::Core(e) => match e {
                selfvsr::Error::InvalidInput(_) => EXIT_USAGE,
                selfvsr::Error::Io(_) => EXIT_IO,
                selfvsr::Error::CorruptCheckpoint(_) => EXIT_CHECKPOINT,
                selfvsr::Error::TrainingDiverged(_) | selfvsr::Error::AdaptationDiverged { .. } => EXIT_DIVERGED,
            },
            CliError::Other(_) => EXIT_OTHER,
        }
    }
}

pub type CliResult<T> = std::result::Result<T, CliError>;
