use serde::{Deserialize, Serialize};

use crate::bounds::{
    compare_dqrk_rates, compare_qrk_rates, dqrk_error_horizon, dqrk_rate_alternative, dqrk_rate_original,
    eh_comparison_condition, qrask_coefficient_comparison, qrk_error_horizon, qrk_general_horizon,
    qrk_rate_alternative, qrk_rate_original, rk_horizon, EhComparison, HorizonBound, QraskComparison, RateBound,
    RateComparison, RkHorizon, RobustParams, SigmaSetting, SpectralSummary, TimeVarying,
};
use crate::error::Result;
use crate::fraction::Fraction;
use crate::linalg::{DenseMatrix, SigmaMode};
use crate::solvers::Method;

pub const REPORT_SCHEMA_VERSION: u32 = 1;

/// Optional data that unlocks the horizon records.
#[derive(Clone, Copy, Debug, Default)]
pub struct ReportInputs<'a> {
    /// Realized corruption `eta + xi`.
    pub epsilon: Option<&'a [f64]>,
    /// `|eta|_inf`.
    pub eta_inf: Option<f64>,
    /// Whether the dqRK start lies on a solution hyperplane.
    pub x0_on_hyperplane: Option<bool>,
}

/// Every constant, condition and horizon for one matrix and parameter set.
/// Each record names the bound it belongs to in its `bound` field.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BoundReport {
    pub schema_version: u32,
    pub method: Method,
    pub params: RobustParams,
    pub p: Fraction,
    pub r: Fraction,
    pub sigma_mode: SigmaMode,
    pub spectral: SpectralSummary,
    pub x0_on_hyperplane: Option<bool>,
    pub notes: Vec<String>,
    pub rk_horizon: Option<RkHorizon>,
    pub rate_original: RateBound,
    pub rate_alternative: RateBound,
    pub rate_comparison: RateComparison,
    pub error_horizon: Option<HorizonBound>,
    pub general_horizon: Option<HorizonBound>,
    pub eh_comparison: Option<EhComparison>,
    pub timevar: Option<TimeVarying>,
    pub qrask: Option<QraskComparison>,
}

pub fn build_report(
    a: &DenseMatrix,
    params: &RobustParams,
    setting: SigmaSetting,
    inputs: ReportInputs<'_>,
) -> Result<BoundReport> {
    let summary = SpectralSummary::compute(a, params, setting)?;
    let method = params.method();
    let mut notes = Vec::new();
    if summary.mode() == SigmaMode::Sampled {
        notes.push("subset singular values are sampled upper estimates: conditions can only be refuted".into());
    }

    let rk = match inputs.epsilon {
        Some(eps) => match rk_horizon(&summary, eps, &a.row_sq_norms()) {
            Ok(h) => Some(h),
            Err(e) => {
                notes.push(format!("rk_horizon: {e}"));
                None
            }
        },
        None => None,
    };

    let (rate_original, rate_alternative, rate_comparison) = match method {
        Method::Dqrk => (
            dqrk_rate_original(&summary, params)?,
            dqrk_rate_alternative(&summary, params)?,
            compare_dqrk_rates(&summary, params)?,
        ),
        _ => (
            qrk_rate_original(&summary, params)?,
            qrk_rate_alternative(&summary, params)?,
            compare_qrk_rates(&summary, params)?,
        ),
    };
    if method == Method::Dqrk && inputs.x0_on_hyperplane == Some(false) {
        notes.push("dqrk_rate_alternative: x0 is not on a solution hyperplane, so its hypothesis fails".into());
    }

    let error_horizon = inputs
        .eta_inf
        .map(|eta| match method {
            Method::Dqrk => dqrk_error_horizon(&summary, params, eta),
            _ => qrk_error_horizon(&summary, params, eta),
        })
        .transpose()?;

    let mut general_horizon = None;
    let mut eh_comparison = None;
    let mut timevar = None;
    let mut qrask = None;
    if method == Method::Qrk {
        if let Some(eps) = inputs.epsilon {
            general_horizon = Some(qrk_general_horizon(&summary, params, eps)?);
            match eh_comparison_condition(&summary, params, eps) {
                Ok(c) => eh_comparison = Some(c),
                Err(e) => notes.push(format!("eh_comparison: {e}")),
            }
        }
        if !params.beta.is_zero() {
            timevar = Some(crate::bounds::timevar_constants(&summary, params)?);
            qrask = Some(qrask_coefficient_comparison(&summary, params)?);
        }
    }

    Ok(BoundReport {
        schema_version: REPORT_SCHEMA_VERSION,
        method,
        params: *params,
        p: params.p(),
        r: params.r(),
        sigma_mode: summary.mode(),
        spectral: summary,
        x0_on_hyperplane: inputs.x0_on_hyperplane,
        notes,
        rk_horizon: rk,
        rate_original,
        rate_alternative,
        rate_comparison,
        error_horizon,
        general_horizon,
        eh_comparison,
        timevar,
        qrask,
    })
}
