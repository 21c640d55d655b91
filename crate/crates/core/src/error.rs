use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("domain error: {0}")]
    Domain(String),

    #[error("integration failed for mode k={k} at t={t}: {reason}")]
    Integration { k: f64, t: f64, reason: String },

    #[error("unsupported combination: {0}")]
    Unsupported(String),

    #[error("internal consistency check failed: {0}")]
    Consistency(String),

    #[error("resource limit: {0}")]
    Resource(String),

    #[error("parse error at line {line}: {msg}")]
    Parse { line: usize, msg: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn domain(msg: impl Into<String>) -> Self {
        Error::Domain(msg.into())
    }
}
