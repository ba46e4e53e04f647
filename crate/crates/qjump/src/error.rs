use thiserror::Error;

/// Errors raised by the simulation library.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    Validation(String),
    #[error("basis mismatch: expected {expected}, found {found}")]
    BasisMismatch { expected: String, found: String },
    #[error("numerical failure: {0}")]
    Numerical(String),
    #[error("steady state did not converge (residual {residual:.3e} after t = {t})")]
    NonConvergence { residual: f64, t: f64 },
    #[error("indeterminate: {0}")]
    Indeterminate(String),
    #[error("domain error: {0}")]
    Domain(String),
    #[error("no downward crossing of n_mid = {n_mid} inside window [{t0}, {t1}]")]
    NoCrossing { n_mid: f64, t0: f64, t1: f64 },
    #[error("config line {line}: {msg}")]
    Config { line: usize, msg: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// True for errors caused by bad user input rather than numerics.
    pub fn is_validation(&self) -> bool {
        matches!(
            self,
            Error::Validation(_) | Error::BasisMismatch { .. } | Error::Config { .. }
        )
    }
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn invalid<T>(msg: impl Into<String>) -> Result<T> {
    Err(Error::Validation(msg.into()))
}
