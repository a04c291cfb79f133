use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("non-finite value: {0}")]
    NonFinite(String),

    #[error("singular normal equations at mu = {mu:e}")]
    Singular { mu: f64 },

    #[error("inconsistent geometry in {id}: atoms {i} and {j} are {distance:e} Å apart")]
    GeometryInconsistent {
        id: String,
        i: usize,
        j: usize,
        distance: f64,
    },

    #[error("eigensolver failed: {0}")]
    Eigen(String),

    #[error("{path}:{line}: {message}")]
    Parse {
        path: String,
        line: usize,
        message: String,
    },

    #[error("data error: {0}")]
    Data(String),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn parse(path: impl AsRef<str>, line: usize, message: impl Into<String>) -> Self {
        Error::Parse {
            path: path.as_ref().to_string(),
            line,
            message: message.into(),
        }
    }

    /// Failure class used by the command-line front end.
    pub fn class(&self) -> ErrorClass {
        match self {
            Error::InvalidConfig(_) => ErrorClass::Config,
            Error::NonFinite(_) | Error::Singular { .. } | Error::Eigen(_) => ErrorClass::Numeric,
            Error::Shape(_)
            | Error::GeometryInconsistent { .. }
            | Error::Parse { .. }
            | Error::Data(_)
            | Error::Io { .. }
            | Error::Csv(_)
            | Error::Json(_) => ErrorClass::Data,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorClass {
    Config,
    Data,
    Numeric,
}
