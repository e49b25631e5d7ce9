use std::path::{Path, PathBuf};

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid instance: {0}")]
    InvalidInstance(String),

    #[error("invalid assignment: {0}")]
    InvalidAssignment(String),

    #[error("invalid parameters: {0}")]
    InvalidParams(String),

    #[error("could not draw {wanted} distinct solutions: only {found} found after {attempts} attempts")]
    DistinctSolutionExhaustion {
        wanted: usize,
        found: usize,
        attempts: usize,
    },

    #[error("more than {limit} solutions exist")]
    LimitExceeded { limit: usize },

    #[error("objective value {0} does not match any solution value")]
    NotASolutionValue(f64),

    #[error("no records for group {0}")]
    EmptyGroup(String),

    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    pub(crate) fn io(path: &Path, source: std::io::Error) -> Self {
        Error::Io {
            path: path.to_path_buf(),
            source,
        }
    }
}
