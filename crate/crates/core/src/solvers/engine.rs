use rand::Rng;

use crate::error::{Error, Result};
use crate::linalg::{axpy, dot, DenseMatrix};
use crate::linalg::quantile::value_index_cmp;
use crate::solvers::{ResidualUpdate, SelectionRule, RESYNC_INTERVAL};

/// Quantiles and admissible-set size at the current iterate.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Selection {
    pub q0: Option<f64>,
    pub q: Option<f64>,
    pub admissible: usize,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct StepInfo {
    pub index: usize,
    pub q0: Option<f64>,
    pub q: Option<f64>,
    pub admissible: usize,
}

/// Kaczmarz iteration state for one system: the residual `b - A x` and the
/// scratch buffers reused across steps.
pub struct Solver<'a> {
    a: &'a DenseMatrix,
    b: &'a [f64],
    rule: SelectionRule,
    row_sq: Vec<f64>,
    uniform: bool,
    cumulative: Vec<f64>,
    residual: Vec<f64>,
    scores: Vec<f64>,
    order: Vec<usize>,
    band: Vec<usize>,
    band_cumulative: Vec<f64>,
    gram: Option<Vec<f64>>,
    since_sync: usize,
    selected: bool,
}

impl<'a> Solver<'a> {
    pub fn new(a: &'a DenseMatrix, b: &'a [f64], rule: SelectionRule, update: ResidualUpdate) -> Result<Self> {
        let m = a.rows();
        if b.len() != m {
            return Err(Error::DimensionMismatch(format!("rhs has length {}, matrix has {m} rows", b.len())));
        }
        let row_sq = a.row_sq_norms();
        if let Some(i) = row_sq.iter().position(|v| *v == 0.0) {
            return Err(Error::ZeroRow(i));
        }
        let uniform = a.is_row_normalized();
        let cumulative = if uniform {
            Vec::new()
        } else {
            row_sq
                .iter()
                .scan(0.0, |acc, w| {
                    *acc += w;
                    Some(*acc)
                })
                .collect()
        };
        let gram = match update {
            ResidualUpdate::Full => None,
            ResidualUpdate::Incremental => Some(a.row_gram()),
        };
        Ok(Self {
            a,
            b,
            rule,
            row_sq,
            uniform,
            cumulative,
            residual: vec![0.0; m],
            scores: vec![0.0; m],
            order: (0..m).collect(),
            band: Vec::with_capacity(m),
            band_cumulative: Vec::new(),
            gram,
            since_sync: 0,
            selected: false,
        })
    }

    pub fn residual(&self) -> &[f64] {
        &self.residual
    }

    /// Recomputes the residual from scratch.
    pub fn sync(&mut self, x: &[f64]) {
        residual_into(self.a, self.b, x, &mut self.residual);
        self.since_sync = 0;
        self.selected = false;
    }

    /// Builds the admissible set at the current residual. The set is the
    /// band `[lower, upper)` of the residual order with ties broken by
    /// index, stored in ascending index order.
    pub fn select(&mut self) -> Selection {
        let m = self.residual.len();
        self.selected = true;
        let (lower, upper) = match self.rule {
            SelectionRule::All => {
                return Selection {
                    q0: None,
                    q: None,
                    admissible: m,
                }
            }
            SelectionRule::Lower { upper } => (0, upper),
            SelectionRule::Band { lower, upper } => (lower, upper),
        };
        for j in 0..m {
            let r = self.residual[j].abs();
            self.scores[j] = if self.uniform { r } else { r / self.row_sq[j] };
        }
        let scores = &self.scores;
        let order = &mut self.order;
        order.select_nth_unstable_by(upper - 1, |&x, &y| value_index_cmp(scores, x, y));
        let q = scores[order[upper - 1]];
        let q0 = if lower > 0 {
            let head = &mut order[..upper];
            head.select_nth_unstable_by(lower - 1, |&x, &y| value_index_cmp(scores, x, y));
            Some(scores[head[lower - 1]])
        } else {
            None
        };
        self.band.clear();
        self.band.extend_from_slice(&order[lower..upper]);
        self.band.sort_unstable();
        if !self.uniform {
            self.band_cumulative.clear();
            let mut acc = 0.0;
            for &i in &self.band {
                acc += self.row_sq[i];
                self.band_cumulative.push(acc);
            }
        }
        Selection {
            q0,
            q: Some(q),
            admissible: self.band.len(),
        }
    }

    /// Admissible indices from the last [`Solver::select`], ascending.
    pub fn admissible(&self) -> &[usize] {
        &self.band
    }

    /// Draws a row: uniformly when rows are unit-norm, otherwise with
    /// probability proportional to `|a_i|^2` by cumulative-sum inversion.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> usize {
        match (self.rule, self.uniform) {
            (SelectionRule::All, true) => rng.random_range(0..self.row_sq.len()),
            (SelectionRule::All, false) => invert(&self.cumulative, rng),
            (_, true) => self.band[rng.random_range(0..self.band.len())],
            (_, false) => self.band[invert(&self.band_cumulative, rng)],
        }
    }

    /// Projects `x` onto hyperplane `i` and updates the residual.
    pub fn project(&mut self, x: &mut [f64], i: usize) {
        let step = self.residual[i] / self.row_sq[i];
        axpy(step, self.a.row(i), x);
        self.selected = false;
        match &self.gram {
            Some(g) => {
                self.since_sync += 1;
                if self.since_sync >= RESYNC_INTERVAL {
                    self.sync(x);
                } else {
                    let m = self.residual.len();
                    for (r, gji) in self.residual.iter_mut().zip(g[i * m..(i + 1) * m].iter()) {
                        *r -= step * gji;
                    }
                    // The chosen equation is satisfied after projection.
                    self.residual[i] = self.b[i] - dot(self.a.row(i), x);
                }
            }
            None => self.sync(x),
        }
    }

    /// One full iteration from the current residual.
    pub fn step<R: Rng + ?Sized>(&mut self, x: &mut [f64], rng: &mut R) -> StepInfo {
        let sel = self.select();
        let index = self.sample(rng);
        self.project(x, index);
        StepInfo {
            index,
            q0: sel.q0,
            q: sel.q,
            admissible: sel.admissible,
        }
    }

    pub(crate) fn is_selected(&self) -> bool {
        self.selected
    }
}

fn invert<R: Rng + ?Sized>(cumulative: &[f64], rng: &mut R) -> usize {
    let total = *cumulative.last().expect("nonempty");
    let u = rng.random::<f64>() * total;
    cumulative.partition_point(|c| *c <= u).min(cumulative.len() - 1)
}

/// `out = b - A x`.
pub fn residual_into(a: &DenseMatrix, b: &[f64], x: &[f64], out: &mut [f64]) {
    for (i, o) in out.iter_mut().enumerate() {
        *o = b[i] - dot(a.row(i), x);
    }
}

/// `x <- x + (b_i - <a_i, x>) / |a_i|^2 a_i`; returns the step length
/// coefficient.
pub fn project_onto_row(a: &DenseMatrix, b: &[f64], x: &mut [f64], i: usize) -> f64 {
    let row = a.row(i);
    let sq = if a.is_row_normalized() { 1.0 } else { dot(row, row) };
    let step = (b[i] - dot(row, x)) / sq;
    axpy(step, row, x);
    step
}

/// One RK step: `i` drawn with probability `|a_i|^2 / |A|_F^2`.
pub fn rk_step<R: Rng + ?Sized>(a: &DenseMatrix, b: &[f64], x: &mut [f64], rng: &mut R) -> Result<usize> {
    let mut s = Solver::new(a, b, SelectionRule::All, ResidualUpdate::Full)?;
    s.sync(x);
    Ok(s.step(x, rng).index)
}

/// One qRK step admitting the `upper` smallest scaled residuals.
pub fn qrk_step<R: Rng + ?Sized>(
    a: &DenseMatrix,
    b: &[f64],
    x: &mut [f64],
    upper: usize,
    rng: &mut R,
) -> Result<StepInfo> {
    if upper == 0 || upper > a.rows() {
        return Err(Error::EmptyAdmissibleSet);
    }
    let mut s = Solver::new(a, b, SelectionRule::Lower { upper }, ResidualUpdate::Full)?;
    s.sync(x);
    Ok(s.step(x, rng))
}

/// One dqRK step admitting sorted positions `lower..upper`.
pub fn dqrk_step<R: Rng + ?Sized>(
    a: &DenseMatrix,
    b: &[f64],
    x: &mut [f64],
    lower: usize,
    upper: usize,
    rng: &mut R,
) -> Result<StepInfo> {
    if upper <= lower || upper > a.rows() {
        return Err(Error::EmptyAdmissibleSet);
    }
    let mut s = Solver::new(a, b, SelectionRule::Band { lower, upper }, ResidualUpdate::Full)?;
    s.sync(x);
    Ok(s.step(x, rng))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::{stream, Domain};

    fn identity_system() -> (DenseMatrix, Vec<f64>) {
        (DenseMatrix::identity(2), vec![1.0, 2.0])
    }

    #[test]
    fn axis_projection() {
        let (a, b) = identity_system();
        let mut x = vec![0.0, 0.0];
        project_onto_row(&a, &b, &mut x, 0);
        assert_eq!(x, vec![1.0, 0.0]);
    }

    #[test]
    fn fixed_point_is_kept() {
        let (a, b) = identity_system();
        let mut x = vec![1.0, 5.0];
        project_onto_row(&a, &b, &mut x, 0);
        assert_eq!(x, vec![1.0, 5.0]);
    }

    #[test]
    fn full_quantile_admits_all() {
        let (a, b) = identity_system();
        let mut s = Solver::new(&a, &b, SelectionRule::Lower { upper: 2 }, ResidualUpdate::Full).unwrap();
        s.sync(&[0.0, 0.0]);
        let sel = s.select();
        assert_eq!(sel.q, Some(2.0));
        assert_eq!(s.admissible(), &[0, 1]);
    }

    #[test]
    fn half_quantile_admits_smallest() {
        let (a, b) = identity_system();
        let mut s = Solver::new(&a, &b, SelectionRule::Lower { upper: 1 }, ResidualUpdate::Full).unwrap();
        let mut x = vec![0.0, 0.0];
        s.sync(&x);
        let sel = s.select();
        assert_eq!(sel.q, Some(1.0));
        assert_eq!(s.admissible(), &[0]);
        let i = s.sample(&mut stream(0, Domain::Solver, 0));
        assert_eq!(i, 0);
        s.project(&mut x, i);
        assert_eq!(x, vec![1.0, 0.0]);
    }

    #[test]
    fn band_selection() {
        let (a, b) = identity_system();
        let mut s = Solver::new(&a, &b, SelectionRule::Band { lower: 1, upper: 2 }, ResidualUpdate::Full).unwrap();
        s.sync(&[0.0, 0.0]);
        let sel = s.select();
        assert_eq!((sel.q0, sel.q), (Some(1.0), Some(2.0)));
        assert_eq!(s.admissible(), &[1]);
    }

    #[test]
    fn tied_residuals_use_index_order() {
        let a = DenseMatrix::identity(4);
        let b = vec![3.0; 4];
        let mut s = Solver::new(&a, &b, SelectionRule::Band { lower: 1, upper: 3 }, ResidualUpdate::Full).unwrap();
        let mut x = vec![0.0; 4];
        s.sync(&x);
        let sel = s.select();
        assert_eq!(s.admissible(), &[1, 2]);
        assert_eq!((sel.q0, sel.q, sel.admissible), (Some(3.0), Some(3.0), 2));
        let i = s.sample(&mut stream(1, Domain::Solver, 0));
        s.project(&mut x, i);
        assert_eq!(x[i], 3.0);
    }

    #[test]
    fn weighted_sampling_on_general_rows() {
        let a = DenseMatrix::from_rows(&[[1.0, 0.0], [0.0, 3.0]]).unwrap();
        let b = vec![1.0, 1.0];
        let s = Solver::new(&a, &b, SelectionRule::All, ResidualUpdate::Full).unwrap();
        let mut rng = stream(2, Domain::Solver, 0);
        let hits = (0..10_000).filter(|_| s.sample(&mut rng) == 1).count();
        // Probability 9/10.
        assert!((hits as f64 / 10_000.0 - 0.9).abs() < 0.02);
    }

    #[test]
    fn general_rows_land_on_hyperplane() {
        let a = DenseMatrix::from_rows(&[[2.0, 1.0], [0.0, 3.0], [1.0, 1.0]]).unwrap();
        let b = vec![1.0, -2.0, 4.0];
        let mut x = vec![0.5, 0.5];
        let mut rng = stream(4, Domain::Solver, 0);
        for _ in 0..20 {
            let info = qrk_step(&a, &b, &mut x, 2, &mut rng).unwrap();
            assert!((dot(a.row(info.index), &x) - b[info.index]).abs() < 1e-10);
        }
    }

    #[test]
    fn empty_sets_are_rejected() {
        let (a, b) = identity_system();
        let mut x = vec![0.0; 2];
        let mut rng = stream(0, Domain::Solver, 0);
        assert!(matches!(qrk_step(&a, &b, &mut x, 0, &mut rng), Err(Error::EmptyAdmissibleSet)));
        assert!(matches!(dqrk_step(&a, &b, &mut x, 1, 1, &mut rng), Err(Error::EmptyAdmissibleSet)));
    }
}
