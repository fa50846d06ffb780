use crate::optimize::OptimizationTrace;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("domain error: {0}")]
    Domain(String),
    #[error("validation error: {0}")]
    Validation(String),
    #[error("numeric error: {0}")]
    Numeric(String),
    #[error("capability error: {0}")]
    Capability(String),
    #[error("precondition failed: {0}")]
    Precondition(String),
    #[error("no convergence after {iterations} iterations: {detail}")]
    Convergence { iterations: usize, detail: String },
    #[error("line search failed at iteration {}: {detail}", trace.iterations.len())]
    LineSearch {
        detail: String,
        trace: Box<OptimizationTrace>,
    },
    #[error("unknown check '{0}'")]
    Registry(String),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
