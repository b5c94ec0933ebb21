//! Subset-restricted smallest singular value
//! `sigma_{q,min}(A) = min_{|I| = q m} inf_{|x| = 1} |A_I x|`.

use std::collections::HashMap;

use rand::seq::index;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fraction::Fraction;
use crate::linalg::matrix::DenseMatrix;
use crate::linalg::svd::min_gain;
use crate::rng::{self, Domain};

/// Default cap on the number of distinct subset evaluations.
pub const DEFAULT_ENUMERATION_CAP: u64 = 2_000_000;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SigmaMode {
    Exact,
    Sampled,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SigmaQMinResult {
    pub level: Fraction,
    pub value: f64,
    pub mode: SigmaMode,
    pub subsets_examined: u64,
    /// A sampled minimum covers only some subsets, so it can only
    /// overestimate the true value.
    pub is_upper_bound_only: bool,
}

/// `C(n, k)`, saturating at `u128::MAX`.
pub fn binomial(n: u64, k: u64) -> u128 {
    if k > n {
        return 0;
    }
    let k = k.min(n - k);
    let mut acc: u128 = 1;
    for i in 0..k {
        // acc * (n - i) / (i + 1) stays integral at every step.
        acc = match acc.checked_mul((n - i) as u128) {
            Some(v) => v / (i + 1) as u128,
            None => return u128::MAX,
        };
    }
    acc
}

fn subset_size(a: &DenseMatrix, level: Fraction) -> Result<usize> {
    let k = level.count(a.rows())?;
    if k == 0 || k > a.rows() {
        return Err(Error::InvalidSpec(format!(
            "subset level {level} must select between 1 and {} rows",
            a.rows()
        )));
    }
    Ok(k)
}

/// Exact minimum over every subset of `level * m` rows.
pub fn sigma_q_min_exact(a: &DenseMatrix, level: Fraction) -> Result<SigmaQMinResult> {
    sigma_q_min_exact_with_cap(a, level, DEFAULT_ENUMERATION_CAP)
}

/// Exact minimum with an explicit enumeration cap.
///
/// Rows that are bitwise identical are grouped: `A_I^T A_I` depends only on
/// how many copies of each distinct row `I` contains, so the search runs
/// over multiplicity vectors instead of index sets. With no repeated rows
/// this is plain subset enumeration.
pub fn sigma_q_min_exact_with_cap(a: &DenseMatrix, level: Fraction, cap: u64) -> Result<SigmaQMinResult> {
    let k = subset_size(a, level)?;
    let classes = row_classes(a);
    let mults: Vec<usize> = classes.iter().map(Vec::len).collect();
    let count = count_multiplicity_vectors(&mults, k);
    if count > cap as u128 {
        return Err(Error::TooManySubsets { count, cap });
    }
    let reps: Vec<usize> = classes.iter().map(|c| c[0]).collect();
    let mut suffix = vec![0usize; mults.len() + 1];
    for i in (0..mults.len()).rev() {
        suffix[i] = suffix[i + 1] + mults[i];
    }
    let mut search = ClassSearch {
        a,
        reps: &reps,
        mults: &mults,
        suffix: &suffix,
        counts: vec![0; mults.len()],
        best: f64::INFINITY,
        examined: 0,
    };
    search.descend(0, k)?;
    Ok(SigmaQMinResult {
        level,
        value: search.best,
        mode: SigmaMode::Exact,
        subsets_examined: search.examined,
        is_upper_bound_only: false,
    })
}

/// Minimum of `min_gain(A_I)` over `samples` distinct uniformly drawn
/// subsets. When `samples` covers every subset, all of them are visited.
pub fn sigma_q_min_sampled(a: &DenseMatrix, level: Fraction, samples: u64, seed: u64) -> Result<SigmaQMinResult> {
    let m = a.rows();
    let k = subset_size(a, level)?;
    if samples == 0 {
        return Err(Error::InvalidSpec("sampled sigma_q_min needs at least one sample".into()));
    }
    let total = binomial(m as u64, k as u64);
    let mut best = f64::INFINITY;
    let mut examined = 0u64;
    let mut subset = vec![0usize; k];
    let mut eval = |subset: &[usize]| -> Result<()> {
        best = best.min(min_gain(&a.select_rows(subset))?);
        examined += 1;
        Ok(())
    };
    if total <= samples as u128 {
        for (i, s) in subset.iter_mut().enumerate() {
            *s = i;
        }
        loop {
            eval(&subset)?;
            if !next_combination(&mut subset, m) {
                break;
            }
        }
    } else if total <= usize::MAX as u128 {
        let mut rng = rng::stream(seed, Domain::SubsetSampling, 0);
        for rank in index::sample(&mut rng, total as usize, samples as usize).into_iter() {
            unrank_combination(rank as u128, m, &mut subset);
            eval(&subset)?;
        }
    } else {
        let mut rng = rng::stream(seed, Domain::SubsetSampling, 1);
        for _ in 0..samples {
            let mut drawn = index::sample(&mut rng, m, k).into_vec();
            drawn.sort_unstable();
            eval(&drawn)?;
        }
    }
    Ok(SigmaQMinResult {
        level,
        value: best,
        mode: SigmaMode::Sampled,
        subsets_examined: examined,
        is_upper_bound_only: true,
    })
}

/// Groups of bitwise-identical rows, ordered by first occurrence.
fn row_classes(a: &DenseMatrix) -> Vec<Vec<usize>> {
    let mut lookup: HashMap<Vec<u64>, usize> = HashMap::new();
    let mut classes: Vec<Vec<usize>> = Vec::new();
    for i in 0..a.rows() {
        // Normalize -0.0 so that equal rows share a key.
        let key: Vec<u64> = a.row(i).iter().map(|v| (v + 0.0).to_bits()).collect();
        match lookup.get(&key) {
            Some(&c) => classes[c].push(i),
            None => {
                lookup.insert(key, classes.len());
                classes.push(vec![i]);
            }
        }
    }
    classes
}

/// Number of vectors `c` with `0 <= c_i <= mults[i]` and `sum c = k`.
fn count_multiplicity_vectors(mults: &[usize], k: usize) -> u128 {
    let mut ways = vec![0u128; k + 1];
    ways[0] = 1;
    for &mult in mults {
        let mut next = vec![0u128; k + 1];
        for (total, &w) in ways.iter().enumerate() {
            if w == 0 {
                continue;
            }
            for c in 0..=mult.min(k - total) {
                next[total + c] = next[total + c].saturating_add(w);
            }
        }
        ways = next;
    }
    ways[k]
}

struct ClassSearch<'a> {
    a: &'a DenseMatrix,
    reps: &'a [usize],
    mults: &'a [usize],
    suffix: &'a [usize],
    counts: Vec<usize>,
    best: f64,
    examined: u64,
}

impl ClassSearch<'_> {
    fn descend(&mut self, class: usize, remaining: usize) -> Result<()> {
        if class == self.mults.len() {
            if remaining == 0 {
                self.evaluate()?;
            }
            return Ok(());
        }
        if remaining > self.suffix[class] {
            return Ok(());
        }
        let hi = self.mults[class].min(remaining);
        for c in 0..=hi {
            self.counts[class] = c;
            self.descend(class + 1, remaining - c)?;
        }
        self.counts[class] = 0;
        Ok(())
    }

    fn evaluate(&mut self) -> Result<()> {
        let n = self.a.cols();
        let mut data = Vec::new();
        let mut rows = 0;
        for (class, &c) in self.counts.iter().enumerate() {
            if c == 0 {
                continue;
            }
            let row = self.a.row(self.reps[class]);
            if c == 1 {
                data.extend_from_slice(row);
            } else {
                let w = (c as f64).sqrt();
                data.extend(row.iter().map(|v| w * v));
            }
            rows += 1;
        }
        let sub = DenseMatrix::new(rows, n, data)?;
        self.best = self.best.min(min_gain(&sub)?);
        self.examined += 1;
        Ok(())
    }
}

/// Advances a strictly increasing index vector to the next combination of
/// `0..m` in lexicographic order.
fn next_combination(c: &mut [usize], m: usize) -> bool {
    let k = c.len();
    let mut i = k;
    while i > 0 {
        i -= 1;
        if c[i] < m - k + i {
            c[i] += 1;
            for j in i + 1..k {
                c[j] = c[j - 1] + 1;
            }
            return true;
        }
    }
    false
}

/// Writes the combination of lexicographic rank `rank` into `out`.
fn unrank_combination(mut rank: u128, m: usize, out: &mut [usize]) {
    let k = out.len();
    let mut x = 0usize;
    for (pos, slot) in out.iter_mut().enumerate() {
        loop {
            let after = binomial((m - x - 1) as u64, (k - pos - 1) as u64);
            if rank < after {
                break;
            }
            rank -= after;
            x += 1;
        }
        *slot = x;
        x += 1;
    }
}
