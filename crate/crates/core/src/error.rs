use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    /// An operation was called outside its documented domain.
    #[error("precondition failed: {0}")]
    Precondition(String),
    /// A stage hypothesis does not hold on the given instance.
    #[error("hypothesis `{clause}` failed: {detail}")]
    Hypothesis { clause: String, detail: String },
    /// A construction produced output that violates one of its invariants.
    #[error("invariant `{name}` violated: {detail}")]
    Invariant { name: String, detail: String },
    #[error("parse error at line {line}: {msg}")]
    Parse { line: usize, msg: String },
    #[error("resource limit exceeded: {0}")]
    Resource(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub fn hypothesis(clause: impl Into<String>, detail: impl Into<String>) -> Self {
        Error::Hypothesis {
            clause: clause.into(),
            detail: detail.into(),
        }
    }

    pub fn invariant(name: impl Into<String>, detail: impl Into<String>) -> Self {
        Error::Invariant {
            name: name.into(),
            detail: detail.into(),
        }
    }
}
