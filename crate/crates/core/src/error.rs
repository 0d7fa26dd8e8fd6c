//! Error type shared by every stage of the pipeline.

use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("parse error at row {row}, column {column}: {message}")]
    Parse {
        row: usize,
        column: usize,
        message: String,
    },

    #[error("validation error: {0}")]
    Validation(String),

    #[error("domain error: {0}")]
    Domain(String),

    #[error("insufficient data: {0}")]
    InsufficientData(String),

    #[error("alignment error: {0}")]
    Alignment(String),

    #[error("infeasible: {0}")]
    Infeasible(String),

    /// A numerical routine failed; `last_iterate` carries whatever state the
    /// routine had when it gave up.
    #[error("numerical error: {message}")]
    Numerical {
        message: String,
        last_iterate: Option<Vec<f64>>,
    },

    /// No optimizer run met its convergence test; `best_iterate` holds the
    /// lowest-objective parameters seen.
    #[error("fit failure: {message}")]
    FitFailure {
        message: String,
        best_iterate: Option<Vec<f64>>,
    },

    #[error("reducible chain: closed classes {classes:?}")]
    ReducibleChain { classes: Vec<Vec<usize>> },

    #[error("config error: {0}")]
    Config(String),

    #[error("missing dependency artifact for stage `{stage}`: {path}")]
    MissingDependency { stage: String, path: PathBuf },

    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("serialization error: {0}")]
    Serde(String),
}

impl Error {
    pub(crate) fn numerical(message: impl Into<String>) -> Self {
        Error::Numerical {
            message: message.into(),
            last_iterate: None,
        }
    }

    pub(crate) fn numerical_with(message: impl Into<String>, last: Vec<f64>) -> Self {
        Error::Numerical {
            message: message.into(),
            last_iterate: Some(last),
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// Process exit code used by the CLI.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Numerical { .. } | Error::FitFailure { .. } | Error::ReducibleChain { .. } => 3,
            Error::MissingDependency { .. } => 4,
            _ => 2,
        }
    }
}

impl From<serde_json::Error> for Error {
    fn from(e: serde_json::Error) -> Self {
        Error::Serde(e.to_string())
    }
}

impl From<csv::Error> for Error {
    fn from(e: csv::Error) -> Self {
        let (row, column) = e
            .position()
            .map(|p| (p.line() as usize, 0))
            .unwrap_or((0, 0));
        Error::Parse {
            row,
            column,
            message: e.to_string(),
        }
    }
}
