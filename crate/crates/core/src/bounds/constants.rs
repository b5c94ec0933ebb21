use serde::{Deserialize, Serialize};

use crate::bounds::{compensated_sum, ConditionCheck, RobustParams, SpectralSummary};
use crate::error::{Error, Result};
use crate::fraction::Fraction;
use crate::linalg::SigmaMode;
use crate::solvers::Method;
use crate::sysgen::ordered_magnitude;

/// `value = gain - penalty`, kept apart so each piece can be compared.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConstantForm {
    pub gain: f64,
    pub penalty: f64,
    pub value: f64,
}

impl ConstantForm {
    fn new(gain: &[f64], penalty: &[f64]) -> Self {
        let gain = compensated_sum(gain);
        let penalty = compensated_sum(penalty);
        Self {
            gain,
            penalty,
            value: gain - penalty,
        }
    }
}

/// A contraction constant `C` (decay factor `1 - C`) with its condition.
/// `raw` works directly with `beta`, `q` and subset singular values;
/// `rewritten` goes through `p`, `r` and the subset condition numbers.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RateBound {
    pub bound: String,
    pub raw: ConstantForm,
    pub rewritten: ConstantForm,
    pub raw_condition: ConditionCheck,
    pub condition: ConditionCheck,
    /// Set when a sampled subset singular value was used; `C` is then an
    /// upper estimate.
    pub upper_bound_only: bool,
}

impl RateBound {
    pub fn constant(&self) -> f64 {
        self.rewritten.value
    }

    pub fn decay_factor(&self) -> f64 {
        1.0 - self.constant()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HorizonBound {
    pub bound: String,
    pub rate: RateBound,
    pub coefficient: f64,
    pub coefficient_exact: Fraction,
    /// `|eta|_inf`, or the `(beta m + 1)`-th largest corruption magnitude.
    pub error_level: f64,
    /// `coefficient * error_level^2 / C`; absent when `C <= 0`.
    pub horizon: Option<f64>,
    pub nonpositive_c: bool,
    pub coefficient_below_two: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RkHorizon {
    pub bound: String,
    pub decay: f64,
    pub horizon: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RateComparison {
    pub bound: String,
    /// Decay factor of the alternative bound.
    pub alpha1: f64,
    /// Decay factor of the original bound.
    pub alpha2: f64,
    /// `alpha2 - alpha1`, computed from the differing terms only.
    pub gap: f64,
    /// `beta m (1-q-beta) / (2 sqrt(beta) sqrt(1-q-beta) - beta)`; absent
    /// when the denominator is not positive.
    pub threshold: Option<f64>,
    pub hypotheses_hold: bool,
    pub alpha1_lt_alpha2: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EhComparison {
    pub bound: String,
    pub lhs_ratio: f64,
    pub rhs: f64,
    pub qrk_beats_rk: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TimeVarying {
    pub bound: String,
    pub phi: f64,
    pub zeta: f64,
    /// `1 + zeta m^2`.
    pub coefficient: f64,
    /// `2 r (1-q) / q + 1`.
    pub ours: f64,
    pub improvement_conditions_hold: bool,
    pub error_horizon_constant: f64,
    pub phi_below_error_horizon_constant: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct QraskComparison {
    pub bound: String,
    pub qrask: f64,
    pub ours: f64,
    /// `4 (r (1-beta)^2 / (q (1-q-beta)) + 1) / 2`.
    pub bound_value: f64,
    pub ratio_bound_holds: bool,
}

/// Shared scalar inputs.
struct Vals {
    m: f64,
    beta: f64,
    q: f64,
    q0: f64,
    /// `q` or `q - q0`, as computed from the raw levels.
    w_raw: f64,
    /// Same width, exact.
    w: f64,
    p: f64,
    r: f64,
    slack: f64,
    smax: f64,
    smax2: f64,
    sq: f64,
    sq0: f64,
    mode: SigmaMode,
}

impl Vals {
    fn new(summary: &SpectralSummary, params: &RobustParams, method: Method) -> Result<Self> {
        if params.method() != method {
            return Err(Error::InvalidSpec(format!("{method} bound called with {} parameters", params.method())));
        }
        let slack = params.slack()?.to_f64();
        let beta = params.beta.to_f64();
        let q = params.q.to_f64();
        let q0 = params.q0.map_or(0.0, Fraction::to_f64);
        let sq0 = match (params.q0, &summary.sigma_q0_beta_min) {
            (Some(_), Some(s)) => s.value,
            (Some(_), None) => return Err(Error::InvalidSpec("summary lacks the lower-level subset value".into())),
            (None, _) => 0.0,
        };
        Ok(Self {
            m: summary.m as f64,
            beta,
            q,
            q0,
            w_raw: if params.q0.is_some() { q - q0 } else { q },
            w: params.width().to_f64(),
            p: params.p().to_f64(),
            r: params.r().to_f64(),
            slack,
            smax: summary.sigma_max,
            smax2: summary.sigma_max * summary.sigma_max,
            sq: summary.sigma_q_beta_min.value,
            sq0,
            mode: summary.mode(),
        })
    }

    /// `kappa_q^{-2}`.
    fn kappa_inv2(&self) -> f64 {
        let k = self.smax / self.sq;
        1.0 / (k * k)
    }

    fn kappa0_inv2(&self) -> f64 {
        let k = self.smax / self.sq0;
        1.0 / (k * k)
    }

    /// `hat kappa_q^{-2}`.
    fn khat_inv2(&self) -> f64 {
        let k = (self.q * self.m).sqrt() / self.sq;
        1.0 / (k * k)
    }

    fn khat0_inv2(&self) -> f64 {
        let k = (self.q0 * self.m).sqrt() / self.sq0;
        1.0 / (k * k)
    }

    /// `2 sqrt(beta)/sqrt(1-q-beta) + beta/(1-q-beta)`.
    fn raw_r_terms(&self) -> [f64; 2] {
        [2.0 * self.beta.sqrt() / self.slack.sqrt(), self.beta / self.slack]
    }

    fn rate(&self, bound: &str, raw: ConstantForm, rewritten: ConstantForm, raw_cond: (f64, f64), cond: (f64, f64)) -> RateBound {
        RateBound {
            bound: bound.to_string(),
            raw,
            rewritten,
            raw_condition: ConditionCheck::evaluate(raw_cond.0, raw_cond.1, self.mode),
            condition: ConditionCheck::evaluate(cond.0, cond.1, self.mode),
            upper_bound_only: self.mode == SigmaMode::Sampled,
        }
    }
}

/// `(1/p)` for qRK and `q/(q-q0-beta)` for dqRK, exact.
fn condition_factor(params: &RobustParams) -> f64 {
    let w = params.width();
    let denom = w.checked_sub(params.beta).expect("validated");
    params.q.checked_div(denom).expect("positive").to_f64()
}

/// `2 r (1-q) / w + 1`.
fn horizon_coefficient(params: &RobustParams) -> Fraction {
    let two = Fraction::new(2, 1).expect("nonzero");
    let one_minus_q = Fraction::ONE.checked_sub(params.q).expect("q <= 1");
    two.checked_mul(params.r())
        .checked_mul(one_minus_q)
        .checked_div(params.width())
        .expect("positive width")
        .checked_add(Fraction::ONE)
}

fn horizon(bound: &str, rate: RateBound, params: &RobustParams, error_level: f64) -> HorizonBound {
    let exact = horizon_coefficient(params);
    let coefficient = exact.to_f64();
    let c = rate.constant();
    HorizonBound {
        bound: bound.to_string(),
        horizon: (c > 0.0).then(|| coefficient * error_level * error_level / c),
        nonpositive_c: c <= 0.0,
        coefficient_below_two: coefficient < 2.0,
        rate,
        coefficient,
        coefficient_exact: exact,
        error_level,
    }
}

/// Plain RK: decay `1 - sigma_min^2/|A|_F^2` and horizon
/// `(|A|_F^2/sigma_min^2) max_j eps_j^2/|a_j|^2`.
pub fn rk_horizon(summary: &SpectralSummary, epsilon: &[f64], row_sq_norms: &[f64]) -> Result<RkHorizon> {
    summary.require_full_rank()?;
    if epsilon.len() != summary.m || row_sq_norms.len() != summary.m {
        return Err(Error::DimensionMismatch("corruption or row norms do not match the summary".into()));
    }
    let ratio = summary.sigma_min * summary.sigma_min / summary.frobenius_sq;
    let worst = epsilon
        .iter()
        .zip(row_sq_norms)
        .map(|(e, w)| e * e / w)
        .fold(0.0, f64::max);
    Ok(RkHorizon {
        bound: "rk_horizon".into(),
        decay: 1.0 - ratio,
        horizon: worst / ratio,
    })
}

pub fn qrk_rate_original(summary: &SpectralSummary, params: &RobustParams) -> Result<RateBound> {
    let v = Vals::new(summary, params, Method::Qrk)?;
    let t = v.smax2 / (v.q * v.m);
    let [a, b] = v.raw_r_terms();
    let raw = ConstantForm::new(&[(v.q - v.beta) * v.sq * v.sq / (v.q * v.q * v.m)], &[t * a, t * b]);
    let raw_cond = (v.q / (v.q - v.beta) * (a + b), v.sq * v.sq / v.smax2);
    let rewritten = ConstantForm::new(&[v.p * v.khat_inv2()], &[t * 2.0 * v.r.sqrt(), t * v.r]);
    let cond = ((2.0 * v.r.sqrt() + v.r) / v.p, v.kappa_inv2());
    Ok(v.rate("qrk_rate_original", raw, rewritten, raw_cond, cond))
}

pub fn qrk_rate_alternative(summary: &SpectralSummary, params: &RobustParams) -> Result<RateBound> {
    let v = Vals::new(summary, params, Method::Qrk)?;
    let raw = ConstantForm::new(
        &[(v.q - v.beta) * v.sq * v.sq / (v.q * v.q * v.m)],
        &[v.beta / v.q, 2.0 * v.smax2 * v.beta / (v.slack * v.m * v.q)],
    );
    let raw_cond = (
        v.q / (v.q - v.beta) * (v.beta * v.m / v.smax2 + 2.0 * v.beta / v.slack),
        v.sq * v.sq / v.smax2,
    );
    let rewritten = ConstantForm::new(&[v.p * v.khat_inv2()], &[v.beta / v.q, 2.0 * v.smax2 * v.r / (v.m * v.q)]);
    let cond = ((v.beta * v.m / v.smax2 + 2.0 * v.r) / v.p, v.kappa_inv2());
    Ok(v.rate("qrk_rate_alternative", raw, rewritten, raw_cond, cond))
}

fn compare_rates(bound: &str, v: &Vals, alt: &RateBound, orig: &RateBound) -> RateComparison {
    let denom = 2.0 * v.beta.sqrt() * v.slack.sqrt() - v.beta;
    let threshold = (v.beta > 0.0 && denom > 0.0).then(|| v.beta * v.m * v.slack / denom);
    let hypotheses_hold = v.beta > 0.0 && v.r < 4.0 && threshold.is_some_and(|t| v.smax2 > t);
    let gap = orig.rewritten.penalty - alt.rewritten.penalty;
    RateComparison {
        bound: bound.to_string(),
        alpha1: 1.0 - alt.constant(),
        alpha2: 1.0 - orig.constant(),
        gap,
        threshold,
        hypotheses_hold,
        alpha1_lt_alpha2: gap > 0.0,
    }
}

/// Decay factors of the alternative (`alpha1`) and original (`alpha2`)
/// qRK bounds. Under the hypotheses the alternative is strictly better.
/// With `beta = 0` both coincide and the hypotheses are reported false.
pub fn compare_qrk_rates(summary: &SpectralSummary, params: &RobustParams) -> Result<RateComparison> {
    let v = Vals::new(summary, params, Method::Qrk)?;
    let alt = qrk_rate_alternative(summary, params)?;
    let orig = qrk_rate_original(summary, params)?;
    Ok(compare_rates("qrk_rate_comparison", &v, &alt, &orig))
}

pub fn compare_dqrk_rates(summary: &SpectralSummary, params: &RobustParams) -> Result<RateComparison> {
    let v = Vals::new(summary, params, Method::Dqrk)?;
    let alt = dqrk_rate_alternative(summary, params)?;
    let orig = dqrk_rate_original(summary, params)?;
    Ok(compare_rates("dqrk_rate_comparison", &v, &alt, &orig))
}

fn qrk_error_rate(summary: &SpectralSummary, params: &RobustParams) -> Result<RateBound> {
    let v = Vals::new(summary, params, Method::Qrk)?;
    let sqrt_m = v.m.sqrt();
    let raw = ConstantForm::new(
        &[(v.q - v.beta) * v.sq * v.sq / (v.q * v.q * v.m)],
        &[
            v.beta / v.q,
            2.0 * v.smax2 * v.beta / (v.slack * v.m * v.q),
            4.0 * v.smax * v.beta / (v.slack.sqrt() * sqrt_m * v.q),
        ],
    );
    let raw_cond = (
        v.q / (v.q - v.beta)
            * compensated_sum(&[
                v.beta * v.m / v.smax2,
                2.0 * v.beta / v.slack,
                4.0 * v.beta * sqrt_m / (v.slack.sqrt() * v.smax),
            ]),
        v.sq * v.sq / v.smax2,
    );
    let rewritten = ConstantForm::new(
        &[v.p * v.khat_inv2()],
        &[
            v.beta / v.q,
            2.0 * v.smax2 * v.r / (v.m * v.q),
            4.0 * v.smax * (v.beta * v.r).sqrt() / (sqrt_m * v.q),
        ],
    );
    let cond = (
        compensated_sum(&[
            v.beta * v.m / v.smax2,
            2.0 * v.r,
            4.0 * (v.beta * v.m).sqrt() * v.r.sqrt() / v.smax,
        ]) / v.p,
        v.kappa_inv2(),
    );
    Ok(v.rate("qrk_error_horizon", raw, rewritten, raw_cond, cond))
}

/// qRK horizon under dense noise bounded by `eta_inf`.
pub fn qrk_error_horizon(summary: &SpectralSummary, params: &RobustParams, eta_inf: f64) -> Result<HorizonBound> {
    check_level(eta_inf)?;
    let rate = qrk_error_rate(summary, params)?;
    Ok(horizon("qrk_error_horizon", rate, params, eta_inf))
}

fn check_level(v: f64) -> Result<()> {
    if !v.is_finite() || v < 0.0 {
        return Err(Error::InvalidSpec(format!("noise level {v} must be finite and nonnegative")));
    }
    Ok(())
}

fn tail_level(summary: &SpectralSummary, params: &RobustParams, epsilon: &[f64]) -> Result<f64> {
    if epsilon.len() != summary.m {
        return Err(Error::DimensionMismatch(format!("corruption has {} entries, expected {}", epsilon.len(), summary.m)));
    }
    let k = params.beta.count(summary.m)? + 1;
    ordered_magnitude(epsilon, k)
}

/// qRK horizon for an arbitrary corruption vector: the `beta m` largest
/// entries are treated as sparse and the rest as noise.
pub fn qrk_general_horizon(summary: &SpectralSummary, params: &RobustParams, epsilon: &[f64]) -> Result<HorizonBound> {
    let level = tail_level(summary, params, epsilon)?;
    let rate = qrk_error_rate(summary, params)?;
    Ok(horizon("qrk_general_horizon", rate, params, level))
}

/// Whether the qRK horizon bound is below the RK one for this corruption.
pub fn eh_comparison_condition(
    summary: &SpectralSummary,
    params: &RobustParams,
    epsilon: &[f64],
) -> Result<EhComparison> {
    summary.require_full_rank()?;
    let level = tail_level(summary, params, epsilon)?;
    let top = ordered_magnitude(epsilon, 1)?;
    if top == 0.0 {
        return Err(Error::ZeroCorruption);
    }
    let c = qrk_error_rate(summary, params)?.constant();
    if c <= 0.0 {
        return Err(Error::NonPositiveC(c));
    }
    let coefficient = horizon_coefficient(params).to_f64();
    let lhs = level / top;
    let rhs = (c * summary.m as f64 / (summary.sigma_min * summary.sigma_min * coefficient)).sqrt();
    Ok(EhComparison {
        bound: "eh_comparison".into(),
        lhs_ratio: lhs,
        rhs,
        qrk_beats_rk: lhs < rhs,
    })
}

/// Constants of the time-varying analysis, for comparison with ours.
pub fn timevar_constants(summary: &SpectralSummary, params: &RobustParams) -> Result<TimeVarying> {
    let v = Vals::new(summary, params, Method::Qrk)?;
    if params.beta.is_zero() {
        return Err(Error::InvalidRegime("time-varying constants need beta > 0".into()));
    }
    let (r, m) = (v.r, v.m);
    let s = ((1.0 - v.beta) / v.beta).sqrt();
    let t = v.smax / (v.q * m) / (v.beta * m).sqrt();
    let cross = t * (r + r * r * s);
    let phi = v.p * v.khat_inv2() - v.smax2 / (v.q * m) * (2.0 * r * s + r * r * s * s) - cross;
    let zeta = cross + r * r / (v.q * v.beta * m * m);
    let ours = horizon_coefficient(params).to_f64();
    let size_ok = m
        < 1.0 / (4.0 * v.beta.sqrt() * v.slack.sqrt())
            + (1.0 - v.beta).sqrt() / (4.0 * v.slack.powf(1.5));
    let denom = v.beta.sqrt() * v.slack.sqrt() - v.beta;
    let spread_ok = r < 1.0 && denom > 0.0 && v.smax2 > v.beta * m / 2.0 * v.slack / denom;
    let c = qrk_error_rate(summary, params)?.constant();
    Ok(TimeVarying {
        bound: "timevar_constants".into(),
        phi,
        zeta,
        coefficient: 1.0 + zeta * m * m,
        ours,
        improvement_conditions_hold: size_ok && spread_ok,
        error_horizon_constant: c,
        phi_below_error_horizon_constant: phi < c,
    })
}

/// Horizon coefficient of quantile randomized sparse Kaczmarz against ours.
pub fn qrask_coefficient_comparison(summary: &SpectralSummary, params: &RobustParams) -> Result<QraskComparison> {
    let v = Vals::new(summary, params, Method::Qrk)?;
    if params.beta.is_zero() {
        return Err(Error::InvalidRegime("the comparison needs beta > 0".into()));
    }
    let (r, beta, q) = (v.r, v.beta, v.q);
    let tail = 0.5 * (r * (1.0 - beta).powi(2) / (q * v.slack) + 1.0);
    let qrask = 2.0 * r * (1.0 - beta) / (q * beta.sqrt())
        * (1.0 + r * ((1.0 - beta) / beta).sqrt())
        * (summary.n as f64 / v.m).sqrt()
        * v.smax
        + tail;
    let ours = horizon_coefficient(params).to_f64();
    let bound_value = 4.0 * tail;
    Ok(QraskComparison {
        bound: "qrask_comparison".into(),
        qrask,
        ours,
        bound_value,
        ratio_bound_holds: ours <= bound_value,
    })
}

pub fn dqrk_rate_original(summary: &SpectralSummary, params: &RobustParams) -> Result<RateBound> {
    let v = Vals::new(summary, params, Method::Dqrk)?;
    let (m, w) = (v.m, v.w_raw);
    let t = v.smax2 / (w * m);
    let [a, b] = v.raw_r_terms();
    let raw = ConstantForm::new(
        &[
            (w - v.beta) * v.sq * v.sq / (w * v.q * m),
            (w - v.beta) * v.sq0 * v.sq0 / (w * v.q0 * v.q * m * m),
        ],
        &[t * a, t * b],
    );
    let raw_cond = (
        v.q / (w - v.beta) * (a + b),
        (v.sq * v.sq + v.sq0 * v.sq0 / (v.q0 * m)) / v.smax2,
    );
    let tw = v.smax2 / (v.w * m);
    let rewritten = ConstantForm::new(
        &[v.p * v.khat_inv2(), v.p * v.khat0_inv2() / (v.q * m)],
        &[tw * 2.0 * v.r.sqrt(), tw * v.r],
    );
    let cond = (
        condition_factor(params) * (2.0 * v.r.sqrt() + v.r),
        v.kappa_inv2() + v.kappa0_inv2() / (v.q0 * m),
    );
    Ok(v.rate("dqrk_rate_original", raw, rewritten, raw_cond, cond))
}

/// Alternative dqRK bound; assumes `x_0` lies on one of the hyperplanes.
pub fn dqrk_rate_alternative(summary: &SpectralSummary, params: &RobustParams) -> Result<RateBound> {
    let v = Vals::new(summary, params, Method::Dqrk)?;
    let (m, w) = (v.m, v.w_raw);
    let raw = ConstantForm::new(
        &[
            (w - v.beta) * v.sq * v.sq / (w * v.q * m),
            (w - v.beta) * v.sq0 * v.sq0 / (w * v.q0 * v.q * m * m),
        ],
        &[v.beta / w, 2.0 * v.smax2 * v.beta / (v.slack * m * w)],
    );
    let raw_cond = (
        v.q / (w - v.beta) * (v.beta * m / v.smax2 + 2.0 * v.beta / v.slack),
        (v.sq * v.sq + v.sq0 * v.sq0 / (v.q0 * m)) / v.smax2,
    );
    let rewritten = ConstantForm::new(
        &[v.p * v.khat_inv2(), v.p * v.khat0_inv2() / (v.q * m)],
        &[v.beta / v.w, 2.0 * v.smax2 * v.r / (m * v.w)],
    );
    let cond = (
        condition_factor(params) * (v.beta * m / v.smax2 + 2.0 * v.r),
        v.kappa_inv2() + v.kappa0_inv2() / (v.q0 * m),
    );
    Ok(v.rate("dqrk_rate_alternative", raw, rewritten, raw_cond, cond))
}

/// dqRK horizon under dense noise bounded by `eta_inf`, as the geometric
/// sum of the one-step recursion.
pub fn dqrk_error_horizon(summary: &SpectralSummary, params: &RobustParams, eta_inf: f64) -> Result<HorizonBound> {
    check_level(eta_inf)?;
    let v = Vals::new(summary, params, Method::Dqrk)?;
    let (m, w) = (v.m, v.w_raw);
    let sqrt_m = m.sqrt();
    let raw = ConstantForm::new(
        &[(w - v.beta) * v.sq * v.sq / (w * v.q * m)],
        &[
            v.beta / w,
            2.0 * v.smax2 * v.beta / (v.slack * m * w),
            4.0 * v.smax * v.beta / (v.slack.sqrt() * sqrt_m * w),
        ],
    );
    let raw_cond = (
        v.q / (w - v.beta)
            * compensated_sum(&[
                v.beta * m / v.smax2,
                2.0 * v.beta / v.slack,
                4.0 * v.beta * sqrt_m / (v.slack.sqrt() * v.smax),
            ]),
        v.sq * v.sq / v.smax2,
    );
    let rewritten = ConstantForm::new(
        &[v.p * v.khat_inv2()],
        &[
            v.beta / v.w,
            2.0 * v.smax2 * v.r / (m * v.w),
            4.0 * v.smax * (v.beta * v.r).sqrt() / (sqrt_m * v.w),
        ],
    );
    let cond = (
        condition_factor(params)
            * compensated_sum(&[
                v.beta * m / v.smax2,
                2.0 * v.r,
                4.0 * (v.beta * m).sqrt() * v.r.sqrt() / v.smax,
            ]),
        v.kappa_inv2(),
    );
    let rate = v.rate("dqrk_error_horizon", raw, rewritten, raw_cond, cond);
    Ok(horizon("dqrk_error_horizon", rate, params, eta_inf))
}
