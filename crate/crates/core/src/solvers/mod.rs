//! Randomized Kaczmarz (RK), quantile RK (qRK) and double-quantile RK
//! (dqRK) with full trace capture.

mod diagnostics;
mod engine;
mod run;
mod trace;

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fraction::Fraction;

pub use diagnostics::{quantile_diagnostic, QuantileDiagnostic};
pub use engine::{dqrk_step, project_onto_row, qrk_step, residual_into, rk_step, Selection, Solver, StepInfo};
pub use run::{horizon_estimate, run, GroundTruth, HorizonEstimate, LinearSystem, DEFAULT_HORIZON_WINDOW};
pub use trace::{read_trace_csv, write_trace_csv, RunTrace};

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    Rk,
    Qrk,
    Dqrk,
}

impl Method {
    pub const ALL: [Method; 3] = [Method::Rk, Method::Qrk, Method::Dqrk];

    pub fn name(self) -> &'static str {
        match self {
            Method::Rk => "rk",
            Method::Qrk => "qrk",
            Method::Dqrk => "dqrk",
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "rk" => Ok(Method::Rk),
            "qrk" => Ok(Method::Qrk),
            "dqrk" => Ok(Method::Dqrk),
            _ => Err(Error::InvalidSpec(format!("unknown method {s:?}"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InitPolicy {
    Zero,
    Given(Vec<f64>),
    /// Start from zero and project onto one randomly chosen hyperplane so
    /// that `<x_0, a_i> = b_i` for some `i`.
    ProjectFirst,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ResidualUpdate {
    /// Recompute `b - A x` every iteration, `O(m n)`.
    Full,
    /// Update through the row Gram matrix, `O(m)` per iteration, with a
    /// full recomputation every [`RESYNC_INTERVAL`] steps.
    Incremental,
}

pub const RESYNC_INTERVAL: usize = 1000;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SolverConfig {
    pub method: Method,
    /// Lower quantile, dqRK only.
    pub q0: Option<Fraction>,
    pub q: Fraction,
    pub iterations: usize,
    pub seed: u64,
    pub init: InitPolicy,
    pub record_diagnostics: bool,
    pub residual_update: ResidualUpdate,
}

impl SolverConfig {
    pub fn rk(iterations: usize, seed: u64) -> Self {
        Self {
            method: Method::Rk,
            q0: None,
            q: Fraction::ONE,
            iterations,
            seed,
            init: InitPolicy::Zero,
            record_diagnostics: false,
            residual_update: ResidualUpdate::Full,
        }
    }

    pub fn qrk(q: Fraction, iterations: usize, seed: u64) -> Self {
        Self {
            method: Method::Qrk,
            q,
            ..Self::rk(iterations, seed)
        }
    }

    pub fn dqrk(q0: Fraction, q: Fraction, iterations: usize, seed: u64) -> Self {
        Self {
            method: Method::Dqrk,
            q0: Some(q0),
            q,
            init: InitPolicy::ProjectFirst,
            ..Self::rk(iterations, seed)
        }
    }

    /// Convenience constructor dispatching on `method`.
    pub fn for_method(method: Method, q0: Fraction, q: Fraction, iterations: usize, seed: u64) -> Self {
        match method {
            Method::Rk => Self::rk(iterations, seed),
            Method::Qrk => Self::qrk(q, iterations, seed),
            Method::Dqrk => Self::dqrk(q0, q, iterations, seed),
        }
    }

    pub fn with_init(mut self, init: InitPolicy) -> Self {
        self.init = init;
        self
    }

    pub fn with_diagnostics(mut self, on: bool) -> Self {
        self.record_diagnostics = on;
        self
    }

    pub fn with_residual_update(mut self, mode: ResidualUpdate) -> Self {
        self.residual_update = mode;
        self
    }

    /// Row-selection rule for a system with `m` rows.
    pub fn rule(&self, m: usize) -> Result<SelectionRule> {
        let upper = |q: Fraction| -> Result<usize> {
            if q.is_zero() || q > Fraction::ONE {
                return Err(Error::InvalidSpec(format!("q = {q} must lie in (0, 1]")));
            }
            q.count(m)
        };
        match self.method {
            Method::Rk => Ok(SelectionRule::All),
            Method::Qrk => Ok(SelectionRule::Lower { upper: upper(self.q)? }),
            Method::Dqrk => {
                let q0 = self
                    .q0
                    .ok_or_else(|| Error::InvalidSpec("dqRK needs a lower quantile q0".into()))?;
                let hi = upper(self.q)?;
                if q0.is_zero() || q0 >= self.q {
                    return Err(Error::InvalidSpec(format!("dqRK needs 0 < q0 < q, got q0={q0} q={}", self.q)));
                }
                let lo = q0.count(m)?;
                if hi == lo {
                    return Err(Error::EmptyAdmissibleSet);
                }
                Ok(SelectionRule::Band { lower: lo, upper: hi })
            }
        }
    }
}

/// Which rows are admissible, in counts of the sorted scaled residuals.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SelectionRule {
    All,
    /// The `upper` smallest.
    Lower { upper: usize },
    /// Positions `lower..upper` of the sorted order.
    Band { lower: usize, upper: usize },
}

impl SelectionRule {
    pub fn admissible_size(&self, m: usize) -> usize {
        match *self {
            SelectionRule::All => m,
            SelectionRule::Lower { upper } => upper,
            SelectionRule::Band { lower, upper } => upper - lower,
        }
    }
}
