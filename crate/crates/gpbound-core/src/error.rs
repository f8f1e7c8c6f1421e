//! Crate-wide error type.

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch in {context}: expected {expected}, got {got}")]
    DimensionMismatch {
        context: &'static str,
        expected: usize,
        got: usize,
    },

    #[error("hyperparameters out of domain for {family}: {detail}")]
    PhiOutOfDomain { family: &'static str, detail: String },

    #[error("input point outside the domain of the {family} covariance function")]
    InputOutOfDomain { family: &'static str },

    #[error("invalid hyperrectangle: {0}")]
    InvalidBox(String),

    #[error("candidate set is empty")]
    EmptyCandidateSet,

    #[error("candidate set carries no monotonicity certificate; run certify() or explicitly waive the check")]
    MissingCertificate,

    #[error("property check failed for {family}: {detail}")]
    PropertyCheckFailed { family: &'static str, detail: String },

    #[error("Gram matrix of size {size} is not positive definite, even with jitter up to {last_jitter:.3e}")]
    IllConditionedGram { size: usize, last_jitter: f64 },

    #[error("box optimization did not converge after {iters} iterations (projected gradient norm {grad_norm:.3e})")]
    NonConvergence { iters: usize, grad_norm: f64 },

    #[error("hyperparameter fit failed: {0}")]
    FitFailed(String),

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("CSV parse error at line {line}: {detail}")]
    CsvParse { line: u64, detail: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}
