use std::path::{Path, PathBuf};

use thiserror::Error;

pub type ServiceResult<T> = std::result::Result<T, ServiceError>;

#[derive(Debug, Error)]
pub enum ServiceError {
    #[error("missing annotator token")]
    MissingToken,

    #[error("unknown annotator token {0:?}")]
    UnknownAnnotator(String),

    #[error("{0}")]
    UnknownCandidate(String),

    #[error("bad request: {0}")]
    BadRequest(String),

    /// Nothing was recorded; the same request may be sent again.
    #[error("storage failure on {path}: {source}")]
    Storage {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("decision log is damaged: {0}")]
    Corrupt(String),

    #[error(transparent)]
    Core(#[from] linkforge_core::Error),
}

impl ServiceError {
    pub(crate) fn storage(path: &Path, source: std::io::Error) -> Self {
        Self::Storage {
            path: path.to_path_buf(),
            source,
        }
    }

    pub fn is_retryable(&self) -> bool {
        matches!(self, Self::Storage { .. })
    }
}
