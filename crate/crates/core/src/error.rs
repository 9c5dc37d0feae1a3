use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("domain error: {0}")]
    Domain(String),
    #[error("no convergence after {iterations} iterations (last change {defect:.3e})")]
    NoConvergence { iterations: usize, defect: f64 },
    #[error("extrapolation unreliable: {0}")]
    Extrapolation(String),
    #[error("estimator unstable: {0}")]
    Unstable(String),
    #[error("numerical check failed: {0}")]
    Check(String),
    #[error("format error: {0}")]
    Format(String),
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn domain<T>(msg: impl Into<String>) -> Result<T> {
    Err(Error::Domain(msg.into()))
}
