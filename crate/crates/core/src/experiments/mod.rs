//! The three numerical experiments: noise only (fig1), noise plus sparse
//! corruption (fig2), and the horizon-versus-corruption scatter (fig3).

mod emit;
mod stats;

use std::fmt;
use std::str::FromStr;
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fraction::Fraction;
use crate::rng::{child_seed, Domain};
use crate::solvers::{horizon_estimate, run, LinearSystem, Method, ResidualUpdate, SolverConfig, DEFAULT_HORIZON_WINDOW};
use crate::sysgen::{generate, ordered_magnitude, CorruptedProblem, Ensemble, GenSpec};

pub use emit::{emit, load_result, render_files, render_svg, RESULT_FILE};
pub use stats::{average_ranks, spearman};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Figure {
    Fig1,
    Fig2,
    Fig3,
}

impl fmt::Display for Figure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Figure::Fig1 => "fig1",
            Figure::Fig2 => "fig2",
            Figure::Fig3 => "fig3",
        })
    }
}

impl FromStr for Figure {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "fig1" => Ok(Figure::Fig1),
            "fig2" => Ok(Figure::Fig2),
            "fig3" => Ok(Figure::Fig3),
            _ => Err(Error::InvalidSpec(format!("unknown figure {s:?}"))),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Profile {
    /// `m = 1000, n = 200`, `2e4` iterations.
    Desk,
    /// `m = 5000, n = 2500`, `5e4` iterations.
    Paper,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExperimentSpec {
    pub figure: Figure,
    pub profile: Option<Profile>,
    pub m: usize,
    pub n: usize,
    pub ensembles: Vec<Ensemble>,
    pub beta: Fraction,
    pub q0: Fraction,
    pub q: Fraction,
    /// Largest corruption magnitude (fig2).
    pub corruption_scale: f64,
    pub noise_stddev: f64,
    pub methods: Vec<Method>,
    pub iterations: usize,
    /// Runs per scale (fig3).
    pub trials: usize,
    /// Corruption scales (fig3).
    pub scales: Vec<f64>,
    pub horizon_window: usize,
    /// Extra seeds for a min/max band around each fig1/fig2 curve; 0 turns
    /// the band off.
    pub band_seeds: usize,
    pub residual_update: ResidualUpdate,
    pub seed: u64,
}

impl ExperimentSpec {
    pub fn new(figure: Figure, profile: Profile) -> Self {
        let (m, n, iterations) = match profile {
            Profile::Desk => (1000, 200, 20_000),
            Profile::Paper => (5000, 2500, 50_000),
        };
        let methods = match figure {
            Figure::Fig3 => vec![Method::Rk, Method::Dqrk],
            _ => Method::ALL.to_vec(),
        };
        Self {
            figure,
            profile: Some(profile),
            m,
            n,
            ensembles: match figure {
                Figure::Fig3 => vec![Ensemble::Gaussian],
                _ => vec![Ensemble::Gaussian, Ensemble::Uniform],
            },
            beta: Fraction::new(1, 20).expect("nonzero"),
            q0: Fraction::new(3, 5).expect("nonzero"),
            q: Fraction::new(4, 5).expect("nonzero"),
            corruption_scale: if figure == Figure::Fig1 { 0.0 } else { 100.0 },
            noise_stddev: 1.0,
            methods,
            iterations,
            trials: 15,
            scales: vec![1.0, 3.0, 10.0, 30.0, 100.0],
            horizon_window: DEFAULT_HORIZON_WINDOW,
            band_seeds: 0,
            residual_update: ResidualUpdate::Incremental,
            seed: 0,
        }
    }

    pub fn desk(figure: Figure) -> Self {
        Self::new(figure, Profile::Desk)
    }

    pub fn paper(figure: Figure) -> Self {
        Self::new(figure, Profile::Paper)
    }

    pub fn validate(&self) -> Result<()> {
        if self.methods.is_empty() {
            return Err(Error::InvalidSpec("no methods selected".into()));
        }
        if self.figure != Figure::Fig3 && self.ensembles.is_empty() {
            return Err(Error::InvalidSpec("no ensembles selected".into()));
        }
        if self.figure == Figure::Fig3 {
            if self.trials == 0 {
                return Err(Error::InvalidSpec("fig3 needs at least one trial".into()));
            }
            if self.scales.is_empty() {
                return Err(Error::InvalidSpec("fig3 needs at least one corruption scale".into()));
            }
            if self.ensembles.len() != 1 {
                return Err(Error::InvalidSpec("fig3 uses exactly one ensemble".into()));
            }
        }
        if self.horizon_window == 0 || self.horizon_window > self.iterations {
            return Err(Error::WindowTooLarge {
                window: self.horizon_window,
                len: self.iterations,
            });
        }
        let tail = Fraction::ONE.checked_sub(self.q).ok_or_else(|| Error::InvalidSpec("q exceeds 1".into()))?;
        tail.count(self.m)?;
        self.gen_spec(self.ensembles[0], self.corruption_scale, 0).validate()?;
        for &method in &self.methods {
            self.solver_config(method, 0).rule(self.m)?;
        }
        Ok(())
    }

    fn gen_spec(&self, ensemble: Ensemble, scale: f64, seed: u64) -> GenSpec {
        GenSpec {
            ensemble,
            corruption_scale: scale,
            noise_stddev: self.noise_stddev,
            ..GenSpec::new(self.m, self.n, self.beta, seed)
        }
    }

    fn solver_config(&self, method: Method, seed: u64) -> SolverConfig {
        SolverConfig::for_method(method, self.q0, self.q, self.iterations, seed)
            .with_residual_update(self.residual_update)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MethodCurve {
    pub method: Method,
    pub solver_seed: u64,
    pub sq_errors: Vec<f64>,
    pub horizon: f64,
    /// Per-iteration minimum and maximum over the band seeds.
    pub band: Option<(Vec<f64>, Vec<f64>)>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CurveSet {
    pub ensemble: Ensemble,
    pub problem_seed: u64,
    pub curves: Vec<MethodCurve>,
}

impl CurveSet {
    pub fn horizon(&self, method: Method) -> Option<f64> {
        self.curves.iter().find(|c| c.method == method).map(|c| c.horizon)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScatterPoint {
    pub scale: f64,
    pub trial: usize,
    pub method: Method,
    /// `eps_(1) / eps_((1-q)m+1)` of the realized corruption.
    pub ratio: f64,
    pub horizon: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Fig3Summary {
    /// Rank correlation of scale against the RK horizon over all points.
    pub rk_spearman: Option<f64>,
    /// Largest over smallest per-scale mean dqRK horizon.
    pub dqrk_spread: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExperimentResult {
    pub spec: ExperimentSpec,
    pub curves: Vec<CurveSet>,
    pub points: Vec<ScatterPoint>,
    pub fig3: Option<Fig3Summary>,
    pub wall_clock_seconds: f64,
}

/// Problem seed of curve set `index` (fig1/fig2) or of `(scale, trial)`
/// (fig3).
fn problem_seed(seed: u64, index: u64) -> u64 {
    child_seed(seed, Domain::Trial, index)
}

fn solver_seed(problem_seed: u64, method: Method) -> u64 {
    child_seed(problem_seed, Domain::Solver, method as u64)
}

fn run_curve(spec: &ExperimentSpec, problem: &CorruptedProblem, method: Method, seed: u64) -> Result<(Vec<f64>, f64)> {
    let trace = run(LinearSystem::from(problem), &spec.solver_config(method, seed))?;
    let h = horizon_estimate(&trace, spec.horizon_window)?.value;
    Ok((trace.sq_errors.expect("ground truth supplied"), h))
}

fn run_curves(spec: &ExperimentSpec, scale: f64) -> Result<Vec<CurveSet>> {
    spec.validate()?;
    let jobs: Vec<(usize, Ensemble)> = spec.ensembles.iter().copied().enumerate().collect();
    jobs.par_iter()
        .map(|&(idx, ensemble)| {
            let pseed = problem_seed(spec.seed, idx as u64);
            let problem = generate(&spec.gen_spec(ensemble, scale, pseed))?;
            let band_problems = (0..spec.band_seeds)
                .map(|b| generate(&spec.gen_spec(ensemble, scale, problem_seed(pseed, 1 + b as u64))))
                .collect::<Result<Vec<_>>>()?;
            let curves = spec
                .methods
                .par_iter()
                .map(|&method| {
                    let sseed = solver_seed(pseed, method);
                    let (sq_errors, horizon) = run_curve(spec, &problem, method, sseed)?;
                    let band = if band_problems.is_empty() {
                        None
                    } else {
                        let mut lo = vec![f64::INFINITY; sq_errors.len()];
                        let mut hi = vec![0.0f64; sq_errors.len()];
                        for (b, p) in band_problems.iter().enumerate() {
                            let (e, _) = run_curve(spec, p, method, child_seed(sseed, Domain::Trial, b as u64))?;
                            for k in 0..e.len() {
                                lo[k] = lo[k].min(e[k]);
                                hi[k] = hi[k].max(e[k]);
                            }
                        }
                        Some((lo, hi))
                    };
                    Ok(MethodCurve {
                        method,
                        solver_seed: sseed,
                        sq_errors,
                        horizon,
                        band,
                    })
                })
                .collect::<Result<Vec<_>>>()?;
            Ok(CurveSet {
                ensemble,
                problem_seed: pseed,
                curves,
            })
        })
        .collect()
}

/// Noise only: `xi = 0`, one shared problem per ensemble.
pub fn run_fig1(spec: &ExperimentSpec) -> Result<ExperimentResult> {
    expect_figure(spec, Figure::Fig1)?;
    let start = Instant::now();
    let curves = run_curves(spec, 0.0)?;
    Ok(finish(spec, curves, Vec::new(), None, start))
}

/// Noise plus `beta m` corruptions drawn from `Uniform[0, scale]`.
pub fn run_fig2(spec: &ExperimentSpec) -> Result<ExperimentResult> {
    expect_figure(spec, Figure::Fig2)?;
    let start = Instant::now();
    let curves = run_curves(spec, spec.corruption_scale)?;
    Ok(finish(spec, curves, Vec::new(), None, start))
}

/// Fresh problem per (scale, trial); one scatter point per method.
pub fn run_fig3(spec: &ExperimentSpec) -> Result<ExperimentResult> {
    expect_figure(spec, Figure::Fig3)?;
    spec.validate()?;
    let start = Instant::now();
    let tail = Fraction::ONE.checked_sub(spec.q).expect("validated").count(spec.m)? + 1;
    let jobs: Vec<(usize, usize)> = (0..spec.scales.len())
        .flat_map(|s| (0..spec.trials).map(move |t| (s, t)))
        .collect();
    let nested = jobs
        .par_iter()
        .map(|&(s, t)| {
            let scale = spec.scales[s];
            let pseed = problem_seed(spec.seed, ((s as u64) << 32) | t as u64);
            let problem = generate(&spec.gen_spec(spec.ensembles[0], scale, pseed))?;
            let eps = problem.epsilon();
            let ratio = ordered_magnitude(&eps, 1)? / ordered_magnitude(&eps, tail)?;
            spec.methods
                .iter()
                .map(|&method| {
                    let (_, horizon) = run_curve(spec, &problem, method, solver_seed(pseed, method))?;
                    Ok(ScatterPoint {
                        scale,
                        trial: t,
                        method,
                        ratio,
                        horizon,
                    })
                })
                .collect::<Result<Vec<_>>>()
        })
        .collect::<Result<Vec<_>>>()?;
    let points: Vec<ScatterPoint> = nested.into_iter().flatten().collect();
    let summary = fig3_summary(spec, &points);
    Ok(finish(spec, Vec::new(), points, Some(summary), start))
}

pub fn run_experiment(spec: &ExperimentSpec) -> Result<ExperimentResult> {
    match spec.figure {
        Figure::Fig1 => run_fig1(spec),
        Figure::Fig2 => run_fig2(spec),
        Figure::Fig3 => run_fig3(spec),
    }
}

fn expect_figure(spec: &ExperimentSpec, figure: Figure) -> Result<()> {
    if spec.figure != figure {
        return Err(Error::InvalidSpec(format!("spec is for {}, not {figure}", spec.figure)));
    }
    Ok(())
}

fn finish(
    spec: &ExperimentSpec,
    curves: Vec<CurveSet>,
    points: Vec<ScatterPoint>,
    fig3: Option<Fig3Summary>,
    start: Instant,
) -> ExperimentResult {
    ExperimentResult {
        spec: spec.clone(),
        curves,
        points,
        fig3,
        wall_clock_seconds: start.elapsed().as_secs_f64(),
    }
}

/// Spearman over every (scale, RK horizon) point, and the spread of the
/// per-scale mean dqRK horizons.
pub fn fig3_summary(spec: &ExperimentSpec, points: &[ScatterPoint]) -> Fig3Summary {
    let rk: Vec<&ScatterPoint> = points.iter().filter(|p| p.method == Method::Rk).collect();
    let rk_spearman = (rk.len() > 1).then(|| {
        let xs: Vec<f64> = rk.iter().map(|p| p.scale).collect();
        let ys: Vec<f64> = rk.iter().map(|p| p.horizon).collect();
        spearman(&xs, &ys)
    });
    let means: Vec<f64> = spec
        .scales
        .iter()
        .filter_map(|&s| {
            let hs: Vec<f64> = points
                .iter()
                .filter(|p| p.method == Method::Dqrk && p.scale == s)
                .map(|p| p.horizon)
                .collect();
            (!hs.is_empty()).then(|| hs.iter().sum::<f64>() / hs.len() as f64)
        })
        .collect();
    let dqrk_spread = (!means.is_empty()).then(|| {
        let max = means.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let min = means.iter().copied().fold(f64::INFINITY, f64::min);
        max / min
    });
    Fig3Summary {
        rk_spearman,
        dqrk_spread,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small(figure: Figure) -> ExperimentSpec {
        ExperimentSpec {
            m: 100,
            n: 10,
            iterations: 3000,
            trials: 3,
            scales: vec![1.0, 100.0],
            seed: 4,
            ..ExperimentSpec::desk(figure)
        }
    }

    #[test]
    fn fig2_at_zero_scale_is_fig1() {
        let f1 = run_fig1(&small(Figure::Fig1)).unwrap();
        let mut s2 = small(Figure::Fig2);
        s2.corruption_scale = 0.0;
        let f2 = run_fig2(&s2).unwrap();
        assert_eq!(f1.curves, f2.curves);
    }

    #[test]
    fn noiseless_fig1_converges() {
        let mut spec = small(Figure::Fig1);
        spec.noise_stddev = 0.0;
        spec.iterations = 6000;
        let r = run_fig1(&spec).unwrap();
        for set in &r.curves {
            for c in &set.curves {
                assert!(*c.sq_errors.last().unwrap() < 1e-16, "{:?} {}", set.ensemble, c.method);
            }
        }
    }

    #[test]
    fn fig3_point_count_and_order() {
        let spec = small(Figure::Fig3);
        let r = run_fig3(&spec).unwrap();
        assert_eq!(r.points.len(), 3 * 2 * 2);
        let keys: Vec<_> = r.points.iter().map(|p| (p.scale as u64, p.trial, p.method)).collect();
        let mut sorted = keys.clone();
        sorted.sort();
        assert_eq!(keys, sorted);
        assert!(r.points.iter().all(|p| p.ratio >= 1.0));
    }

    #[test]
    fn thread_count_does_not_matter() {
        let spec = small(Figure::Fig3);
        let one = rayon::ThreadPoolBuilder::new().num_threads(1).build().unwrap();
        let two = rayon::ThreadPoolBuilder::new().num_threads(2).build().unwrap();
        let a = one.install(|| run_fig3(&spec)).unwrap();
        let b = two.install(|| run_fig3(&spec)).unwrap();
        assert_eq!(a.points, b.points);
    }

    #[test]
    fn validation() {
        let mut spec = small(Figure::Fig2);
        spec.methods.clear();
        assert!(matches!(run_fig2(&spec), Err(Error::InvalidSpec(_))));
        let mut spec = small(Figure::Fig3);
        spec.scales.clear();
        assert!(run_fig3(&spec).is_err());
        let mut spec = small(Figure::Fig1);
        spec.horizon_window = 5000;
        assert!(matches!(run_fig1(&spec), Err(Error::WindowTooLarge { .. })));
        assert!(run_fig1(&small(Figure::Fig2)).is_err());
    }

    #[test]
    fn band_brackets_extra_runs() {
        let mut spec = small(Figure::Fig2);
        spec.band_seeds = 2;
        spec.iterations = 500;
        spec.ensembles = vec![Ensemble::Gaussian];
        let r = run_fig2(&spec).unwrap();
        let c = &r.curves[0].curves[0];
        let (lo, hi) = c.band.as_ref().unwrap();
        assert_eq!(lo.len(), 501);
        assert!(lo.iter().zip(hi).all(|(l, h)| l <= h));
    }
}
