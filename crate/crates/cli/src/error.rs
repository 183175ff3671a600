use std::path::PathBuf;

use cftc::ErrorKind;

/// Process exit statuses, shared by every subcommand.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[repr(u8)]
pub enum ExitStatus {
    Success = 0,
    Input = 2,
    Numerical = 3,
    Integrity = 4,
}

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error(transparent)]
    Core(#[from] cftc::Error),

    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{0}")]
    Input(String),

    #[error("{0}")]
    Integrity(String),

    #[error("cannot render {}: {source}", path.display())]
    Plot {
        path: PathBuf,
        #[source]
        source: image::ImageError,
    },
}

impl CliError {
    pub fn io(path: impl Into<PathBuf>) -> impl FnOnce(std::io::Error) -> Self {
        let path = path.into();
        move |source| CliError::Io { path, source }
    }

    pub fn status(&self) -> ExitStatus {
        match self {
            CliError::Core(e) => match e.kind() {
                ErrorKind::Input => ExitStatus::Input,
                ErrorKind::Numerical => ExitStatus::Numerical,
                ErrorKind::Integrity => ExitStatus::Integrity,
            },
            CliError::Integrity(_) => ExitStatus::Integrity,
            CliError::Io { .. } | CliError::Input(_) | CliError::Plot { .. } => ExitStatus::Input,
        }
    }
}

pub type CliResult<T> = Result<T, CliError>;
