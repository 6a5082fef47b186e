use std::path::Path;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    /// Malformed or inconsistent input files.
    #[error("ingestion error: {0}")]
    Ingest(String),

    /// Invalid model definitions, e.g. unresolved covariates.
    #[error("model error: {0}")]
    Model(String),

    /// Arguments outside an operation's domain.
    #[error("domain error: {0}")]
    Domain(String),

    #[error("memory budget exceeded: cache needs {required} bytes, budget is {budget} bytes")]
    Budget { required: usize, budget: usize },

    #[error("{0}")]
    Singular(String),

    /// The maximum likelihood estimate does not exist (observed statistics on the hull boundary).
    #[error("MLE does not exist: {0}")]
    NonExistence(String),

    /// Exact enumeration refused because the support is too large.
    #[error("enumeration refused: {0}")]
    Guard(String),

    #[error("config error: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn in_file(self, path: &Path) -> Self {
        match self {
            Error::Ingest(msg) => Error::Ingest(format!("{}: {msg}", path.display())),
            other => other,
        }
    }
}
