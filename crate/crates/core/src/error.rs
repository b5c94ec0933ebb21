use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("row {0} has zero norm")]
    ZeroRow(usize),

    #[error("matrix entries must be finite (entry {index} is {value})")]
    NonFinite { index: usize, value: f64 },

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("quantile level {q} times {m} is not an integer")]
    NonIntegerQuantile { q: String, m: usize },

    #[error("singular value iteration did not converge after {sweeps} sweeps")]
    ConvergenceFailure { sweeps: usize },

    #[error("subset enumeration needs {count} evaluations, above the cap of {cap}")]
    TooManySubsets { count: u128, cap: u64 },

    #[error("invalid spec: {0}")]
    InvalidSpec(String),

    #[error("index {index} out of range 1..={len}")]
    IndexOutOfRange { index: usize, len: usize },

    #[error("admissible set is empty")]
    EmptyAdmissibleSet,

    #[error("parameters outside the bound's regime: {0}")]
    InvalidRegime(String),

    #[error("matrix is not of full column rank (sigma_n = {sigma_min:e}, sigma_max = {sigma_max:e})")]
    FullRankViolation { sigma_min: f64, sigma_max: f64 },

    #[error("horizon window {window} exceeds trace length {len}")]
    WindowTooLarge { window: usize, len: usize },

    #[error("corruption vector is identically zero")]
    ZeroCorruption,

    #[error("decay constant C = {0:e} is not positive")]
    NonPositiveC(f64),

    #[error("malformed file {path}: {reason}")]
    Format { path: PathBuf, reason: String },

    #[error("checksum mismatch for {0}")]
    Checksum(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    /// Validation errors are caused by bad inputs rather than by the
    /// computation or the environment.
    pub fn is_validation(&self) -> bool {
        matches!(
            self,
            Error::NonIntegerQuantile { .. }
                | Error::InvalidSpec(_)
                | Error::InvalidRegime(_)
                | Error::IndexOutOfRange { .. }
                | Error::DimensionMismatch(_)
                | Error::NonFinite { .. }
                | Error::ZeroRow(_)
                | Error::WindowTooLarge { .. }
        )
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
