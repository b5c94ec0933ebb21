//! Corrupted linear systems `A x = b_t + eta + xi` and the canonical
//! split of a corruption vector into a sparse and a bounded part.

use rand::seq::index;
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fraction::Fraction;
use crate::linalg::{row_normalize, DenseMatrix};
use crate::rng::{self, Domain};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Ensemble {
    /// Standard normal entries.
    Gaussian,
    /// `Uniform[0, 1]` entries.
    Uniform,
}

impl Ensemble {
    pub fn name(self) -> &'static str {
        match self {
            Ensemble::Gaussian => "gaussian",
            Ensemble::Uniform => "uniform",
        }
    }
}

impl std::str::FromStr for Ensemble {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "gaussian" => Ok(Ensemble::Gaussian),
            "uniform" => Ok(Ensemble::Uniform),
            _ => Err(Error::InvalidSpec(format!("unknown ensemble {s:?}"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GenSpec {
    pub m: usize,
    pub n: usize,
    pub ensemble: Ensemble,
    pub beta: Fraction,
    pub corruption_scale: f64,
    pub noise_stddev: f64,
    pub disjoint_support: bool,
    /// Draw corruption values from `[-scale, scale]` instead of `[0, scale]`.
    #[serde(default)]
    pub signed_corruption: bool,
    pub seed: u64,
}

impl GenSpec {
    pub fn new(m: usize, n: usize, beta: Fraction, seed: u64) -> Self {
        Self {
            m,
            n,
            ensemble: Ensemble::Gaussian,
            beta,
            corruption_scale: 100.0,
            noise_stddev: 1.0,
            disjoint_support: false,
            signed_corruption: false,
            seed,
        }
    }

    pub fn validate(&self) -> Result<usize> {
        if self.n == 0 || self.m < self.n {
            return Err(Error::InvalidSpec(format!("need m >= n >= 1, got m={} n={}", self.m, self.n)));
        }
        if self.beta > Fraction::ONE {
            return Err(Error::InvalidSpec(format!("beta = {} exceeds 1", self.beta)));
        }
        let corrupted = self.beta.count(self.m).map_err(|_| {
            Error::InvalidSpec(format!("beta * m = {} * {} is not an integer", self.beta, self.m))
        })?;
        for (name, v) in [("corruption_scale", self.corruption_scale), ("noise_stddev", self.noise_stddev)] {
            if !v.is_finite() || v < 0.0 {
                return Err(Error::InvalidSpec(format!("{name} = {v} must be finite and nonnegative")));
            }
        }
        Ok(corrupted)
    }
}

/// A row-normalized system with its ground truth and error components.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CorruptedProblem {
    pub system: DenseMatrix,
    pub x_star: Vec<f64>,
    pub b_t: Vec<f64>,
    pub eta: Vec<f64>,
    pub xi: Vec<f64>,
    pub b: Vec<f64>,
}

impl CorruptedProblem {
    pub fn m(&self) -> usize {
        self.system.rows()
    }

    pub fn n(&self) -> usize {
        self.system.cols()
    }

    /// Realized combined corruption `eta + xi`.
    pub fn epsilon(&self) -> Vec<f64> {
        self.eta.iter().zip(&self.xi).map(|(e, x)| e + x).collect()
    }

    /// Smallest `beta` with `|xi|_0 <= beta m`.
    pub fn min_beta(&self) -> Fraction {
        min_beta(&self.xi)
    }

    /// Re-checks every structural invariant; `beta` bounds the support of `xi`.
    pub fn check_invariants(&self, beta: Option<Fraction>, disjoint_support: bool) -> Result<()> {
        let (m, n) = (self.m(), self.n());
        for (name, len, want) in [
            ("x_star", self.x_star.len(), n),
            ("b_t", self.b_t.len(), m),
            ("eta", self.eta.len(), m),
            ("xi", self.xi.len(), m),
            ("b", self.b.len(), m),
        ] {
            if len != want {
                return Err(Error::DimensionMismatch(format!("{name} has length {len}, expected {want}")));
            }
        }
        if !self.system.is_row_normalized() {
            return Err(Error::InvalidSpec("system matrix is not flagged row-normalized".into()));
        }
        let ax = self.system.mul_vec(&self.x_star);
        for (i, (lhs, rhs)) in ax.iter().zip(&self.b_t).enumerate() {
            if (lhs - rhs).abs() > 1e-10 {
                return Err(Error::InvalidSpec(format!("b_t[{i}] differs from (A x*)[{i}] by {}", lhs - rhs)));
            }
        }
        for i in 0..m {
            if compose_rhs(self.b_t[i], self.eta[i], self.xi[i]) != self.b[i] {
                return Err(Error::InvalidSpec(format!("b[{i}] != b_t[{i}] + eta[{i}] + xi[{i}]")));
            }
        }
        if let Some(beta) = beta {
            let allowed = beta.count(m)?;
            let nnz = self.xi.iter().filter(|v| **v != 0.0).count();
            if nnz > allowed {
                return Err(Error::InvalidSpec(format!("xi has {nnz} nonzeros, beta allows {allowed}")));
            }
        }
        if disjoint_support {
            if let Some(i) = (0..m).find(|&i| self.eta[i] != 0.0 && self.xi[i] != 0.0) {
                return Err(Error::InvalidSpec(format!("eta and xi overlap at index {i}")));
            }
        }
        Ok(())
    }
}

/// Fixed evaluation order for the right-hand side.
#[inline]
pub fn compose_rhs(b_t: f64, eta: f64, xi: f64) -> f64 {
    (b_t + eta) + xi
}

pub fn min_beta(xi: &[f64]) -> Fraction {
    let nnz = xi.iter().filter(|v| **v != 0.0).count();
    Fraction::of_count(nnz, xi.len().max(1)).expect("nonzero denominator")
}

pub fn generate(spec: &GenSpec) -> Result<CorruptedProblem> {
    let corrupted = spec.validate()?;
    let (m, n) = (spec.m, spec.n);

    let mut matrix_rng = rng::stream(spec.seed, Domain::Matrix, 0);
    let raw: Vec<f64> = match spec.ensemble {
        Ensemble::Gaussian => (0..m * n).map(|_| StandardNormal.sample(&mut matrix_rng)).collect(),
        Ensemble::Uniform => (0..m * n).map(|_| matrix_rng.random::<f64>()).collect(),
    };
    let (system, _) = row_normalize(&DenseMatrix::new(m, n, raw)?)?;

    let mut solution_rng = rng::stream(spec.seed, Domain::Solution, 0);
    let x_star: Vec<f64> = (0..n).map(|_| StandardNormal.sample(&mut solution_rng)).collect();
    let b_t = system.mul_vec(&x_star);

    let mut support_rng = rng::stream(spec.seed, Domain::Support, 0);
    let mut support = index::sample(&mut support_rng, m, corrupted).into_vec();
    support.sort_unstable();

    let mut value_rng = rng::stream(spec.seed, Domain::CorruptionValues, 0);
    let mut xi = vec![0.0; m];
    for &i in &support {
        let u: f64 = value_rng.random();
        xi[i] = if spec.signed_corruption {
            spec.corruption_scale * (2.0 * u - 1.0)
        } else {
            spec.corruption_scale * u
        };
    }

    let mut noise_rng = rng::stream(spec.seed, Domain::Noise, 0);
    let mut eta: Vec<f64> = (0..m)
        .map(|_| {
            let z: f64 = StandardNormal.sample(&mut noise_rng);
            spec.noise_stddev * z
        })
        .collect();
    if spec.disjoint_support {
        for &i in &support {
            eta[i] = 0.0;
        }
    }

    let b = (0..m).map(|i| compose_rhs(b_t[i], eta[i], xi[i])).collect();
    Ok(CorruptedProblem {
        system,
        x_star,
        b_t,
        eta,
        xi,
        b,
    })
}

/// Indices sorted by decreasing magnitude, lowest index first among ties.
fn magnitude_order(epsilon: &[f64]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..epsilon.len()).collect();
    order.sort_by(|&a, &b| epsilon[b].abs().total_cmp(&epsilon[a].abs()).then(a.cmp(&b)));
    order
}

/// The `j`-th largest entry of `epsilon` in magnitude (1-indexed).
pub fn ordered_magnitude(epsilon: &[f64], j: usize) -> Result<f64> {
    if j == 0 || j > epsilon.len() {
        return Err(Error::IndexOutOfRange { index: j, len: epsilon.len() });
    }
    let mut mags: Vec<f64> = epsilon.iter().map(|v| v.abs()).collect();
    let (_, v, _) = mags.select_nth_unstable_by(j - 1, |a, b| b.total_cmp(a));
    Ok(*v)
}

#[derive(Clone, Debug, PartialEq)]
pub struct Decomposition {
    /// Dense remainder `epsilon - xi`.
    pub eta: Vec<f64>,
    /// The `beta m` largest-magnitude entries of `epsilon`.
    pub xi: Vec<f64>,
}

pub fn canonical_decomposition(epsilon: &[f64], beta: Fraction) -> Result<Decomposition> {
    let k = beta.count(epsilon.len())?;
    let mut xi = vec![0.0; epsilon.len()];
    let mut eta = epsilon.to_vec();
    for &i in magnitude_order(epsilon).iter().take(k) {
        xi[i] = epsilon[i];
        eta[i] = 0.0;
    }
    Ok(Decomposition { eta, xi })
}
