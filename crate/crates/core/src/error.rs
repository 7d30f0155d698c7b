use std::path::PathBuf;

use thiserror::Error;

use crate::cls_solver::SolveError;

pub type Result<T, E = Error> = std::result::Result<T, E>;

/// Coarse classification used by front ends to pick an exit status.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorKind {
    Usage,
    Data,
    Numerical,
}

#[derive(Debug, Error)]
pub enum Error {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}:{line}: column `{column}`: {message}")]
    Field {
        path: PathBuf,
        line: u64,
        column: String,
        message: String,
    },

    #[error("{path}:{line}: {message}")]
    Row { path: PathBuf, line: u64, message: String },

    #[error("{path}: missing required column `{column}`")]
    MissingColumn { path: PathBuf, column: String },

    #[error("unrecognized weather condition `{0}`")]
    UnknownCondition(String),

    #[error("invalid split: {0}")]
    InvalidSplit(String),

    #[error("empty input: {0}")]
    Empty(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("model file: {0}")]
    Model(String),

    #[error("{phase}: {source}")]
    Solver {
        phase: String,
        #[source]
        source: Box<SolveError>,
    },

    #[error("json: {0}")]
    Json(#[from] serde_json::Error),

    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
}

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub fn solver(phase: impl Into<String>, source: SolveError) -> Self {
        Error::Solver {
            phase: phase.into(),
            source: Box::new(source),
        }
    }

    pub fn kind(&self) -> ErrorKind {
        match self {
            Error::InvalidArgument(_) | Error::InvalidSplit(_) => ErrorKind::Usage,
            Error::Solver { .. } => ErrorKind::Numerical,
            _ => ErrorKind::Data,
        }
    }
}
