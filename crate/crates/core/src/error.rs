use std::path::PathBuf;

use thiserror::Error;

/// Errors raised anywhere in the IFAC pipeline.
#[derive(Debug, Error)]
pub enum Error {
    #[error("manifest error: {0}")]
    Manifest(String),

    #[error("data error: {0}")]
    Data(String),

    #[error("data error at row {row}, column `{column}`: {message}")]
    Cell {
        row: usize,
        column: String,
        message: String,
    },

    #[error("invalid argument: {0}")]
    Argument(String),

    #[error("fit error: {0}")]
    Fit(String),

    #[error("scoring error: no probability for instance `{0}`")]
    MissingPrediction(String),

    #[error("slift undefined: no transaction verifies the legal part without the sensitive part")]
    UndefinedSlift,

    #[error(
        "situation testing needs {k} labeled neighbors in the {group} group, found {available}"
    )]
    InsufficientNeighbors {
        group: &'static str,
        available: usize,
        k: usize,
    },

    #[error("review error: {0}")]
    Review(String),

    #[error("{stage} stage failed: {source}")]
    Stage {
        stage: &'static str,
        #[source]
        source: Box<Error>,
    },

    #[error("i/o error on {path}: {source}")]
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

pub type Result<T, E = Error> = std::result::Result<T, E>;

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// Wraps an error with the name of the pipeline stage that produced it.
    pub fn in_stage(self, stage: &'static str) -> Self {
        match self {
            staged @ Error::Stage { .. } => staged,
            other => Error::Stage {
                stage,
                source: Box::new(other),
            },
        }
    }

    /// True for errors caused by the input data or manifest rather than the
    /// pipeline logic. Used by the CLI to pick an exit code.
    pub fn is_data_error(&self) -> bool {
        match self {
            Error::Manifest(_)
            | Error::Data(_)
            | Error::Cell { .. }
            | Error::Csv(_)
            | Error::Json(_)
            | Error::Io { .. }
            | Error::MissingPrediction(_) => true,
            Error::Stage { source, .. } => source.is_data_error(),
            _ => false,
        }
    }
}
