use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fraction::Fraction;
use crate::linalg::{inf_norm, norm, quantile, residual_abs, DenseMatrix, MultisetQuantileSpec};
use crate::solvers::GroundTruth;

/// Observed residual quantile against its a-priori upper bounds at one
/// iterate.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct QuantileDiagnostic {
    pub observed: f64,
    /// `sigma_max |x_k - x*| / (sqrt(m) sqrt(1 - q - beta))`; valid when
    /// `eta = 0`.
    pub sparse_bound: f64,
    /// `sparse_bound + sqrt(1 - q) |eta|_inf / sqrt(1 - q - beta)`.
    pub noisy_bound: f64,
    /// Worst-case rounding in the computed residual entries,
    /// `2 (n + 1) u (|b|_inf + |x_k| + |x*|)` with unit roundoff `u`.
    pub rounding_allowance: f64,
}

impl QuantileDiagnostic {
    pub fn bound(&self) -> f64 {
        self.noisy_bound
    }

    /// Whether the observed quantile respects the bound up to rounding.
    pub fn holds(&self) -> bool {
        self.observed <= self.noisy_bound + self.rounding_allowance
    }
}

pub(crate) struct DiagnosticContext {
    spec: MultisetQuantileSpec,
    sigma_max: f64,
    denom: f64,
    noise_term: f64,
    b_inf: f64,
    x_star_norm: f64,
    n: usize,
}

impl DiagnosticContext {
    pub(crate) fn new(a: &DenseMatrix, b: &[f64], truth: &GroundTruth<'_>, q: Fraction, sigma_max: f64) -> Result<Self> {
        if !a.is_row_normalized() {
            return Err(Error::InvalidSpec("quantile bounds need a row-normalized matrix".into()));
        }
        let m = a.rows();
        let spec = MultisetQuantileSpec::new(q, m)?;
        let slack = Fraction::ONE
            .checked_sub(q)
            .and_then(|v| v.checked_sub(truth.beta))
            .filter(|v| !v.is_zero())
            .ok_or_else(|| Error::InvalidRegime(format!("need q + beta < 1, got q={q} beta={}", truth.beta)))?;
        let denom = (m as f64).sqrt() * slack.to_f64().sqrt();
        let one_minus_q = Fraction::ONE.checked_sub(q).expect("q <= 1").to_f64();
        Ok(Self {
            spec,
            sigma_max,
            denom,
            noise_term: one_minus_q.sqrt() * inf_norm(truth.eta) / slack.to_f64().sqrt(),
            b_inf: inf_norm(b),
            x_star_norm: norm(truth.x_star),
            n: a.cols(),
        })
    }

    /// `abs_residual` holds `|b - A x_k|`.
    pub(crate) fn evaluate(&self, abs_residual: &[f64], x_k: &[f64], x_star: &[f64]) -> Result<QuantileDiagnostic> {
        let observed = quantile(abs_residual, self.spec)?;
        let dist = x_k
            .iter()
            .zip(x_star)
            .map(|(a, b)| (a - b) * (a - b))
            .sum::<f64>()
            .sqrt();
        let sparse_bound = self.sigma_max * dist / self.denom;
        let u = f64::EPSILON / 2.0;
        Ok(QuantileDiagnostic {
            observed,
            sparse_bound,
            noisy_bound: sparse_bound + self.noise_term,
            rounding_allowance: 2.0 * (self.n as f64 + 1.0) * u * (self.b_inf + norm(x_k) + self.x_star_norm),
        })
    }
}

/// Quantile diagnostic for a single iterate `x_k`.
pub fn quantile_diagnostic(
    a: &DenseMatrix,
    b: &[f64],
    x_k: &[f64],
    truth: &GroundTruth<'_>,
    q: Fraction,
    sigma_max: f64,
) -> Result<QuantileDiagnostic> {
    let ctx = DiagnosticContext::new(a, b, truth, q, sigma_max)?;
    let abs = residual_abs(a, b, x_k)?;
    ctx.evaluate(&abs, x_k, truth.x_star)
}
