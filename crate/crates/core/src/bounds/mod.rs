//! Theoretical constants, applicability conditions and error horizons for
//! a concrete matrix and corruption model.

mod constants;
mod report;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fraction::Fraction;
use crate::linalg::{
    sigma_q_min_exact_with_cap, sigma_q_min_sampled, singular_extremes, DenseMatrix, SigmaMode, SigmaQMinResult,
    DEFAULT_ENUMERATION_CAP,
};
use crate::rng::{child_seed, Domain};
use crate::solvers::Method;

pub use constants::{
    compare_dqrk_rates, compare_qrk_rates, dqrk_error_horizon, dqrk_rate_alternative, dqrk_rate_original,
    eh_comparison_condition, qrask_coefficient_comparison, qrk_error_horizon, qrk_general_horizon,
    qrk_rate_alternative, qrk_rate_original, rk_horizon, timevar_constants, ConstantForm, EhComparison,
    HorizonBound, QraskComparison, RateBound, RateComparison, RkHorizon, TimeVarying,
};
pub use report::{build_report, BoundReport, ReportInputs, REPORT_SCHEMA_VERSION};

/// Below this ratio `sigma_min / sigma_max` the matrix is treated as rank
/// deficient.
pub const RANK_TOL: f64 = 1e-12;

/// Sparsity level and quantiles of a robust solver.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct RobustParams {
    pub beta: Fraction,
    pub q: Fraction,
    pub q0: Option<Fraction>,
}

impl RobustParams {
    /// Requires `beta < q < 1 - beta`.
    pub fn qrk(beta: Fraction, q: Fraction) -> Result<Self> {
        let p = Self { beta, q, q0: None };
        p.slack()?;
        if beta >= q {
            return Err(Error::InvalidRegime(format!("need beta < q, got beta={beta} q={q}")));
        }
        Ok(p)
    }

    /// Requires `beta < q0 < q < 1 - beta` and `q - q0 > beta`.
    pub fn dqrk(beta: Fraction, q0: Fraction, q: Fraction) -> Result<Self> {
        let p = Self { beta, q, q0: Some(q0) };
        p.slack()?;
        if !(beta < q0 && q0 < q) {
            return Err(Error::InvalidRegime(format!("need beta < q0 < q, got beta={beta} q0={q0} q={q}")));
        }
        if q.checked_sub(q0).map_or(true, |w| w <= beta) {
            return Err(Error::InvalidRegime(format!("need q - q0 > beta, got q0={q0} q={q} beta={beta}")));
        }
        Ok(p)
    }

    pub fn method(&self) -> Method {
        if self.q0.is_some() {
            Method::Dqrk
        } else {
            Method::Qrk
        }
    }

    /// `1 - q - beta`, which must be positive.
    pub fn slack(&self) -> Result<Fraction> {
        Fraction::ONE
            .checked_sub(self.q)
            .and_then(|v| v.checked_sub(self.beta))
            .filter(|v| !v.is_zero())
            .ok_or_else(|| Error::InvalidRegime(format!("need q + beta < 1, got q={} beta={}", self.q, self.beta)))
    }

    /// Width of the admissible band: `q` or `q - q0`.
    pub fn width(&self) -> Fraction {
        match self.q0 {
            Some(q0) => self.q.checked_sub(q0).expect("validated"),
            None => self.q,
        }
    }

    /// Worst-case uncorrupted share of the admissible set.
    pub fn p(&self) -> Fraction {
        let w = self.width();
        w.checked_sub(self.beta).expect("validated").checked_div(w).expect("nonzero width")
    }

    /// `beta / (1 - q - beta)`.
    pub fn r(&self) -> Fraction {
        self.beta.checked_div(self.slack().expect("validated")).expect("positive slack")
    }

    /// Subset level `q - beta`.
    pub fn q_level(&self) -> Fraction {
        self.q.checked_sub(self.beta).expect("validated")
    }

    /// Subset level `q0 - beta` (dqRK).
    pub fn q0_level(&self) -> Option<Fraction> {
        self.q0.map(|q0| q0.checked_sub(self.beta).expect("validated"))
    }

    /// Checks that every level selects a whole number of rows.
    pub fn check_counts(&self, m: usize) -> Result<()> {
        self.beta.count(m)?;
        self.q.count(m)?;
        if let Some(q0) = self.q0 {
            q0.count(m)?;
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase", tag = "mode")]
pub enum SigmaSetting {
    Exact { cap: u64 },
    Sampled { samples: u64, seed: u64 },
}

impl Default for SigmaSetting {
    fn default() -> Self {
        SigmaSetting::Exact {
            cap: DEFAULT_ENUMERATION_CAP,
        }
    }
}

impl SigmaSetting {
    /// Parses `exact` or `sampled:N`.
    pub fn parse(s: &str, seed: u64) -> Result<Self> {
        match s.split_once(':') {
            None if s == "exact" => Ok(Self::default()),
            Some(("sampled", n)) => {
                let samples = n
                    .parse()
                    .map_err(|_| Error::InvalidSpec(format!("bad sample count in {s:?}")))?;
                if samples == 0 {
                    return Err(Error::InvalidSpec("sample count must be positive".into()));
                }
                Ok(Self::Sampled { samples, seed })
            }
            _ => Err(Error::InvalidSpec(format!("sigma mode must be exact or sampled:N, got {s:?}"))),
        }
    }
}

/// Spectral quantities entering the bounds.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SpectralSummary {
    pub m: usize,
    pub n: usize,
    pub sigma_max: f64,
    pub sigma_min: f64,
    pub frobenius_sq: f64,
    pub sigma_q_beta_min: SigmaQMinResult,
    pub sigma_q0_beta_min: Option<SigmaQMinResult>,
}

impl SpectralSummary {
    pub fn compute(a: &DenseMatrix, params: &RobustParams, setting: SigmaSetting) -> Result<Self> {
        params.check_counts(a.rows())?;
        let (sigma_max, sigma_min) = singular_extremes(a)?;
        let sigma = |level: Fraction, slot: u64| match setting {
            SigmaSetting::Exact { cap } => sigma_q_min_exact_with_cap(a, level, cap),
            SigmaSetting::Sampled { samples, seed } => {
                sigma_q_min_sampled(a, level, samples, child_seed(seed, Domain::SubsetSampling, slot))
            }
        };
        let sigma_q_beta_min = sigma(params.q_level(), 0)?;
        let sigma_q0_beta_min = params.q0_level().map(|l| sigma(l, 1)).transpose()?;
        Ok(Self {
            m: a.rows(),
            n: a.cols(),
            sigma_max,
            sigma_min,
            frobenius_sq: a.frobenius_sq(),
            sigma_q_beta_min,
            sigma_q0_beta_min,
        })
    }

    /// Builds a summary from known values, for parameter studies.
    #[allow(clippy::too_many_arguments)]
    pub fn from_values(
        m: usize,
        n: usize,
        sigma_max: f64,
        sigma_min: f64,
        params: &RobustParams,
        sigma_q_beta: f64,
        sigma_q0_beta: Option<f64>,
        mode: SigmaMode,
    ) -> Self {
        let wrap = |level: Fraction, value: f64| SigmaQMinResult {
            level,
            value,
            mode,
            subsets_examined: 0,
            is_upper_bound_only: mode == SigmaMode::Sampled,
        };
        Self {
            m,
            n,
            sigma_max,
            sigma_min,
            frobenius_sq: m as f64,
            sigma_q_beta_min: wrap(params.q_level(), sigma_q_beta),
            sigma_q0_beta_min: params.q0_level().zip(sigma_q0_beta).map(|(l, v)| wrap(l, v)),
        }
    }

    pub fn mode(&self) -> SigmaMode {
        let sampled = self.sigma_q_beta_min.mode == SigmaMode::Sampled
            || self.sigma_q0_beta_min.as_ref().is_some_and(|s| s.mode == SigmaMode::Sampled);
        if sampled {
            SigmaMode::Sampled
        } else {
            SigmaMode::Exact
        }
    }

    pub(crate) fn require_full_rank(&self) -> Result<()> {
        if !(self.sigma_min > RANK_TOL * self.sigma_max) {
            return Err(Error::FullRankViolation {
                sigma_min: self.sigma_min,
                sigma_max: self.sigma_max,
            });
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Certainty {
    Holds,
    Fails,
    Unknown,
}

/// A condition of the form `lhs < rhs`, where `rhs` grows with the subset
/// singular values.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConditionCheck {
    pub lhs: f64,
    pub rhs: f64,
    pub satisfied: Certainty,
}

impl ConditionCheck {
    /// A sampled subset singular value only bounds the true value from
    /// above, so it overstates `rhs`: failure is conclusive, success is not.
    pub fn evaluate(lhs: f64, rhs: f64, mode: SigmaMode) -> Self {
        let satisfied = match (lhs < rhs, mode) {
            (false, _) => Certainty::Fails,
            (true, SigmaMode::Exact) => Certainty::Holds,
            (true, SigmaMode::Sampled) => Certainty::Unknown,
        };
        Self { lhs, rhs, satisfied }
    }
}

/// Neumaier-compensated sum.
pub fn compensated_sum(terms: &[f64]) -> f64 {
    let mut sum = 0.0;
    let mut c = 0.0;
    for &t in terms {
        let s = sum + t;
        if sum.abs() >= t.abs() {
            c += (sum - s) + t;
        } else {
            c += (t - s) + sum;
        }
        sum = s;
    }
    sum + c
}
