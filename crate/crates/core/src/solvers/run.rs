use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fraction::Fraction;
use crate::linalg::{dot, singular_extremes, sq_distance, DenseMatrix};
use crate::rng::{stream, Domain};
use crate::solvers::diagnostics::DiagnosticContext;
use crate::solvers::engine::Solver;
use crate::solvers::{InitPolicy, Method, RunTrace, SelectionRule, SolverConfig};
use crate::sysgen::{min_beta, CorruptedProblem};

pub const DEFAULT_HORIZON_WINDOW: usize = 100;

/// Known solution and noise, used for error traces and diagnostics.
#[derive(Clone, Copy, Debug)]
pub struct GroundTruth<'a> {
    pub x_star: &'a [f64],
    pub eta: &'a [f64],
    pub beta: Fraction,
}

impl<'a> From<&'a CorruptedProblem> for GroundTruth<'a> {
    fn from(p: &'a CorruptedProblem) -> Self {
        Self {
            x_star: &p.x_star,
            eta: &p.eta,
            beta: min_beta(&p.xi),
        }
    }
}

#[derive(Clone, Copy, Debug)]
pub struct LinearSystem<'a> {
    pub matrix: &'a DenseMatrix,
    pub rhs: &'a [f64],
    pub truth: Option<GroundTruth<'a>>,
}

impl<'a> LinearSystem<'a> {
    pub fn new(matrix: &'a DenseMatrix, rhs: &'a [f64]) -> Self {
        Self { matrix, rhs, truth: None }
    }
}

impl<'a> From<&'a CorruptedProblem> for LinearSystem<'a> {
    fn from(p: &'a CorruptedProblem) -> Self {
        Self {
            matrix: &p.system,
            rhs: &p.b,
            truth: Some(GroundTruth::from(p)),
        }
    }
}

/// Runs `config.iterations` steps and records the full trace. The solver
/// stream is `(seed, Solver, 0)`; the project-first draw comes first.
pub fn run(system: LinearSystem<'_>, config: &SolverConfig) -> Result<RunTrace> {
    let a = system.matrix;
    let (m, n) = (a.rows(), a.cols());
    let rule = config.rule(m)?;
    if let Some(t) = &system.truth {
        if t.x_star.len() != n || t.eta.len() != m {
            return Err(Error::DimensionMismatch("ground truth does not match the system".into()));
        }
    }
    let mut solver = Solver::new(a, system.rhs, rule, config.residual_update)?;
    let mut rng = stream(config.seed, Domain::Solver, 0);

    let mut x = match &config.init {
        InitPolicy::Zero | InitPolicy::ProjectFirst => vec![0.0; n],
        InitPolicy::Given(v) => {
            if v.len() != n {
                return Err(Error::DimensionMismatch(format!("x0 has length {}, expected {n}", v.len())));
            }
            v.clone()
        }
    };
    solver.sync(&x);
    if config.init == InitPolicy::ProjectFirst {
        let i = draw_any_row(a, &mut rng);
        solver.project(&mut x, i);
    }

    let diagnostics = if config.record_diagnostics {
        let truth = system
            .truth
            .as_ref()
            .ok_or_else(|| Error::InvalidSpec("diagnostics need ground truth".into()))?;
        let (sigma_max, _) = singular_extremes(a)?;
        Some(DiagnosticContext::new(a, system.rhs, truth, config.q, sigma_max)?)
    } else {
        None
    };

    let k_max = config.iterations;
    let mut trace = RunTrace::with_capacity(config.method, n, k_max, system.truth.is_some(), diagnostics.is_some());
    let mut abs = vec![0.0; m];
    for k in 0..=k_max {
        if let (Some(sq), Some(t)) = (trace.sq_errors.as_mut(), &system.truth) {
            sq.push(sq_distance(&x, t.x_star));
        }
        let residual = solver.residual();
        trace.residual_norms.push(dot(residual, residual).sqrt());
        if let (Some(ctx), Some(out), Some(t)) = (&diagnostics, trace.diagnostics.as_mut(), &system.truth) {
            for (o, r) in abs.iter_mut().zip(residual) {
                *o = r.abs();
            }
            out.push(ctx.evaluate(&abs, &x, t.x_star)?);
        }
        let sel = solver.select();
        trace.q0.push(sel.q0);
        trace.q.push(sel.q);
        trace.admissible_sizes.push(sel.admissible);
        if k == k_max {
            break;
        }
        debug_assert!(solver.is_selected());
        let i = solver.sample(&mut rng);
        solver.project(&mut x, i);
        trace.chosen_indices.push(i);
    }
    debug_assert!(rule != SelectionRule::All || config.method == Method::Rk);
    trace.final_x = x;
    Ok(trace)
}

fn draw_any_row<R: Rng + ?Sized>(a: &DenseMatrix, rng: &mut R) -> usize {
    if a.is_row_normalized() {
        return rng.random_range(0..a.rows());
    }
    let w = a.row_sq_norms();
    let total: f64 = w.iter().sum();
    let mut u = rng.random::<f64>() * total;
    for (i, wi) in w.iter().enumerate() {
        if u < *wi {
            return i;
        }
        u -= wi;
    }
    a.rows() - 1
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct HorizonEstimate {
    pub value: f64,
    pub window: usize,
}

/// Largest squared error over the final `window` iterates.
pub fn horizon_estimate(trace: &RunTrace, window: usize) -> Result<HorizonEstimate> {
    let sq = trace
        .sq_errors
        .as_ref()
        .ok_or_else(|| Error::InvalidSpec("trace has no squared errors".into()))?;
    if window == 0 || window > sq.len() {
        return Err(Error::WindowTooLarge { window, len: sq.len() });
    }
    let value = sq[sq.len() - window..].iter().copied().fold(0.0, f64::max);
    Ok(HorizonEstimate { value, window })
}
