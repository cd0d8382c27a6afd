use thiserror::Error;

/// Errors raised by the numerical routines.
#[derive(Debug, Error)]
pub enum Error {
    #[error("domain error: {0}")]
    Domain(String),
    #[error("no convergence: {0}")]
    NonConvergence(String),
    #[error("precision loss: {0}")]
    PrecisionLoss(String),
    #[error("pole of {what} inside [{lo}, {hi}]")]
    Pole { what: String, lo: f64, hi: f64 },
    #[error("node of {what} at r = {r}")]
    Node { what: String, r: f64 },
    #[error("indeterminate value: {0}")]
    Indeterminate(String),
    #[error("consistency check failed: {0}")]
    Consistency(String),
    #[error("invariant violated: {0}")]
    Invariant(String),
    #[error("eigenvalue {re} has imaginary part {im}")]
    NonRealSpectrum { re: f64, im: f64 },
    #[error("configuration error: {0}")]
    Config(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
