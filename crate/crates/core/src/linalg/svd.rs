//! Singular values by Householder reduction to a square triangle followed
//! by one-sided (Hestenes) Jacobi sweeps.

use crate::error::{Error, Result};
use crate::linalg::matrix::DenseMatrix;

/// Relative off-diagonal tolerance for a Jacobi rotation to be skipped.
pub const SVD_TOL: f64 = 1e-12;

/// Sweep cap as a multiple of `max(m, n)`.
pub const SWEEPS_PER_DIM: usize = 100;

/// All `min(m, n)` singular values in descending order.
pub fn singular_values(a: &DenseMatrix) -> Result<Vec<f64>> {
    let (m, n) = (a.rows(), a.cols());
    let max_sweeps = SWEEPS_PER_DIM * m.max(n);
    // Column-major working copy with at least as many rows as columns.
    let (rows, cols, mut work) = if m >= n {
        (m, n, column_major(a))
    } else {
        (n, m, column_major(&a.transpose()))
    };
    if rows > cols {
        work = householder_triangle(rows, cols, &mut work);
    }
    let mut sv = jacobi_column_norms(cols, cols, &mut work, max_sweeps)?;
    sv.sort_by(|x, y| y.total_cmp(x));
    Ok(sv)
}

/// `(sigma_max, sigma_min)` where `sigma_min` is the `min(m, n)`-th
/// singular value (the `n`-th for a tall matrix).
pub fn singular_extremes(a: &DenseMatrix) -> Result<(f64, f64)> {
    let sv = singular_values(a)?;
    Ok((sv[0], *sv.last().expect("nonempty matrix")))
}

/// `inf_{|x| = 1} |A x|`, zero when `A` has fewer rows than columns.
pub fn min_gain(a: &DenseMatrix) -> Result<f64> {
    if a.rows() < a.cols() {
        return Ok(0.0);
    }
    Ok(*singular_values(a)?.last().expect("nonempty matrix"))
}

fn column_major(a: &DenseMatrix) -> Vec<f64> {
    let (m, n) = (a.rows(), a.cols());
    let mut out = vec![0.0; m * n];
    for i in 0..m {
        for (j, v) in a.row(i).iter().enumerate() {
            out[j * m + i] = *v;
        }
    }
    out
}

/// Reduces the column-major `rows x cols` matrix to its `cols x cols`
/// triangular factor `R` (column-major). Singular values are preserved.
fn householder_triangle(rows: usize, cols: usize, w: &mut [f64]) -> Vec<f64> {
    let mut v = vec![0.0; rows];
    for k in 0..cols {
        let x = &w[k * rows + k..(k + 1) * rows];
        let norm = x.iter().map(|t| t * t).sum::<f64>().sqrt();
        if norm == 0.0 {
            continue;
        }
        let alpha = if x[0] > 0.0 { -norm } else { norm };
        let len = rows - k;
        v[..len].copy_from_slice(x);
        v[0] -= alpha;
        let vnorm_sq: f64 = v[..len].iter().map(|t| t * t).sum();
        if vnorm_sq == 0.0 {
            continue;
        }
        for j in k..cols {
            let col = &mut w[j * rows + k..(j + 1) * rows];
            let proj: f64 = col.iter().zip(&v[..len]).map(|(c, vi)| c * vi).sum();
            let scale = 2.0 * proj / vnorm_sq;
            for (c, vi) in col.iter_mut().zip(&v[..len]) {
                *c -= scale * vi;
            }
        }
    }
    let mut r = vec![0.0; cols * cols];
    for j in 0..cols {
        for i in 0..=j {
            r[j * cols + i] = w[j * rows + i];
        }
    }
    r
}

fn jacobi_column_norms(rows: usize, cols: usize, w: &mut [f64], max_sweeps: usize) -> Result<Vec<f64>> {
    for _ in 0..max_sweeps {
        let mut rotated = false;
        for i in 0..cols {
            for j in i + 1..cols {
                let (head, tail) = w.split_at_mut(j * rows);
                let ci = &mut head[i * rows..(i + 1) * rows];
                let cj = &mut tail[..rows];
                let mut alpha = 0.0;
                let mut beta = 0.0;
                let mut gamma = 0.0;
                for (a, b) in ci.iter().zip(cj.iter()) {
                    alpha += a * a;
                    beta += b * b;
                    gamma += a * b;
                }
                if gamma == 0.0 || gamma.abs() <= SVD_TOL * (alpha * beta).sqrt() {
                    continue;
                }
                rotated = true;
                let zeta = (beta - alpha) / (2.0 * gamma);
                let t = zeta.signum() / (zeta.abs() + (1.0 + zeta * zeta).sqrt());
                let c = 1.0 / (1.0 + t * t).sqrt();
                let s = c * t;
                for (a, b) in ci.iter_mut().zip(cj.iter_mut()) {
                    let (x, y) = (*a, *b);
                    *a = c * x - s * y;
                    *b = s * x + c * y;
                }
            }
        }
        if !rotated {
            return Ok((0..cols)
                .map(|j| w[j * rows..(j + 1) * rows].iter().map(|t| t * t).sum::<f64>().sqrt())
                .collect());
        }
    }
    Err(Error::ConvergenceFailure { sweeps: max_sweeps })
}
