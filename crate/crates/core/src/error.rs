use std::path::PathBuf;

/// Errors produced by the classifier toolkit.
///
/// The variants are grouped so that a command-line front end can map them
/// onto stable exit codes with [`Error::kind`].
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("{path}: line {line}: {message}")]
    Parse {
        path: PathBuf,
        line: usize,
        message: String,
    },

    #[error("{0}: corpus is empty")]
    EmptyCorpus(PathBuf),

    #[error("empty input: {0}")]
    EmptyInput(String),

    #[error("config error: {0}")]
    Config(String),

    #[error("infeasible synthetic spec: {0}")]
    Infeasible(String),

    #[error("contract violation: {0}")]
    Contract(String),

    #[error("non-finite loss in epoch {epoch}, batch {batch}: term {term} = {value}")]
    NonFinite {
        epoch: usize,
        batch: usize,
        term: &'static str,
        value: f64,
    },

    #[error("integrity error: {0}")]
    Integrity(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Coarse error classes, stable across commands.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorKind {
    Input,
    Numerical,
    Integrity,
}

impl Error {
    pub fn kind(&self) -> ErrorKind {
        match self {
            Error::NonFinite { .. } => ErrorKind::Numerical,
            Error::Integrity(_) => ErrorKind::Integrity,
            _ => ErrorKind::Input,
        }
    }

    pub(crate) fn contract(msg: impl Into<String>) -> Self {
        Error::Contract(msg.into())
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
