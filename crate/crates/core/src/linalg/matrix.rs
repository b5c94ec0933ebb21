use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Tolerance on `| ||a_i|| - 1 |` for a matrix flagged as row-normalized.
pub const ROW_NORM_TOL: f64 = 1e-12;

/// Dense row-major matrix.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DenseMatrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
    row_normalized: bool,
}

impl DenseMatrix {
    pub fn new(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if rows == 0 || cols == 0 {
            return Err(Error::DimensionMismatch(format!("empty {rows}x{cols} matrix")));
        }
        if data.len() != rows * cols {
            return Err(Error::DimensionMismatch(format!(
                "{} entries for a {rows}x{cols} matrix",
                data.len()
            )));
        }
        if let Some((index, &value)) = data.iter().enumerate().find(|(_, v)| !v.is_finite()) {
            return Err(Error::NonFinite { index, value });
        }
        Ok(Self {
            rows,
            cols,
            data,
            row_normalized: false,
        })
    }

    pub fn from_rows<R: AsRef<[f64]>>(rows: &[R]) -> Result<Self> {
        let cols = rows.first().map_or(0, |r| r.as_ref().len());
        let mut data = Vec::with_capacity(rows.len() * cols);
        for (i, r) in rows.iter().enumerate() {
            let r = r.as_ref();
            if r.len() != cols {
                return Err(Error::DimensionMismatch(format!("row {i} has {} entries, expected {cols}", r.len())));
            }
            data.extend_from_slice(r);
        }
        Self::new(rows.len(), cols, data)
    }

    pub fn identity(n: usize) -> Self {
        let mut data = vec![0.0; n * n];
        for i in 0..n {
            data[i * n + i] = 1.0;
        }
        Self {
            rows: n,
            cols: n,
            data,
            row_normalized: true,
        }
    }

    pub fn from_diagonal(diag: &[f64]) -> Result<Self> {
        let n = diag.len();
        let mut data = vec![0.0; n * n];
        for (i, d) in diag.iter().enumerate() {
            data[i * n + i] = *d;
        }
        Self::new(n, n, data)
    }

    #[inline]
    pub fn rows(&self) -> usize {
        self.rows
    }

    #[inline]
    pub fn cols(&self) -> usize {
        self.cols
    }

    #[inline]
    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn is_row_normalized(&self) -> bool {
        self.row_normalized
    }

    /// Sets the row-normalized flag after checking every row norm.
    pub fn with_row_normalized_flag(mut self, flag: bool) -> Result<Self> {
        if flag {
            for i in 0..self.rows {
                let norm = dot(self.row(i), self.row(i)).sqrt();
                if (norm - 1.0).abs() > ROW_NORM_TOL {
                    return Err(Error::InvalidSpec(format!("row {i} has norm {norm}, not unit")));
                }
            }
        }
        self.row_normalized = flag;
        Ok(self)
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.cols + j]
    }

    /// `out = A x`.
    pub fn mul_vec_into(&self, x: &[f64], out: &mut [f64]) {
        debug_assert_eq!(x.len(), self.cols);
        debug_assert_eq!(out.len(), self.rows);
        for (i, o) in out.iter_mut().enumerate() {
            *o = dot(self.row(i), x);
        }
    }

    pub fn mul_vec(&self, x: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.rows];
        self.mul_vec_into(x, &mut out);
        out
    }

    pub fn row_sq_norms(&self) -> Vec<f64> {
        if self.row_normalized {
            return vec![1.0; self.rows];
        }
        (0..self.rows).map(|i| dot(self.row(i), self.row(i))).collect()
    }

    pub fn frobenius_sq(&self) -> f64 {
        self.data.iter().map(|v| v * v).sum()
    }

    /// Submatrix with the given rows, in the given order.
    pub fn select_rows(&self, indices: &[usize]) -> DenseMatrix {
        let mut data = Vec::with_capacity(indices.len() * self.cols);
        for &i in indices {
            data.extend_from_slice(self.row(i));
        }
        DenseMatrix {
            rows: indices.len(),
            cols: self.cols,
            data,
            row_normalized: self.row_normalized,
        }
    }

    pub fn transpose(&self) -> DenseMatrix {
        let mut data = vec![0.0; self.data.len()];
        for i in 0..self.rows {
            for j in 0..self.cols {
                data[j * self.rows + i] = self.data[i * self.cols + j];
            }
        }
        DenseMatrix {
            rows: self.cols,
            cols: self.rows,
            data,
            row_normalized: false,
        }
    }

    /// Row Gram matrix `A A^T`, row-major `m x m`.
    pub fn row_gram(&self) -> Vec<f64> {
        let m = self.rows;
        let mut g = vec![0.0; m * m];
        for i in 0..m {
            for j in 0..=i {
                let v = dot(self.row(i), self.row(j));
                g[i * m + j] = v;
                g[j * m + i] = v;
            }
        }
        g
    }
}

/// Scales every row to unit Euclidean norm, returning the original norms.
pub fn row_normalize(a: &DenseMatrix) -> Result<(DenseMatrix, Vec<f64>)> {
    let mut data = a.data.clone();
    let mut norms = Vec::with_capacity(a.rows);
    for (i, row) in data.chunks_exact_mut(a.cols).enumerate() {
        let norm = dot(row, row).sqrt();
        if norm == 0.0 {
            return Err(Error::ZeroRow(i));
        }
        row.iter_mut().for_each(|v| *v /= norm);
        norms.push(norm);
    }
    let out = DenseMatrix {
        rows: a.rows,
        cols: a.cols,
        data,
        row_normalized: false,
    }
    .with_row_normalized_flag(true)?;
    Ok((out, norms))
}

/// Dot product with four independent accumulators.
#[inline]
pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    let mut acc = [0.0f64; 4];
    let chunks = a.len() / 4;
    for c in 0..chunks {
        let k = 4 * c;
        acc[0] += a[k] * b[k];
        acc[1] += a[k + 1] * b[k + 1];
        acc[2] += a[k + 2] * b[k + 2];
        acc[3] += a[k + 3] * b[k + 3];
    }
    let mut tail = 0.0;
    for k in 4 * chunks..a.len() {
        tail += a[k] * b[k];
    }
    (acc[0] + acc[1]) + (acc[2] + acc[3]) + tail
}

#[inline]
pub fn axpy(alpha: f64, x: &[f64], y: &mut [f64]) {
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += alpha * xi;
    }
}

pub fn sq_distance(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

pub fn norm(v: &[f64]) -> f64 {
    dot(v, v).sqrt()
}

pub fn inf_norm(v: &[f64]) -> f64 {
    v.iter().fold(0.0, |m, x| m.max(x.abs()))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn normalizes_three_four_five() {
        let a = DenseMatrix::from_rows(&[[3.0, 4.0]]).unwrap();
        let (n, norms) = row_normalize(&a).unwrap();
        assert_eq!(n.row(0), &[0.6, 0.8]);
        assert_eq!(norms, vec![5.0]);
        assert!(n.is_row_normalized());
    }

    #[test]
    fn identity_is_unchanged() {
        let (n, norms) = row_normalize(&DenseMatrix::identity(2)).unwrap();
        assert_eq!(n.as_slice(), DenseMatrix::identity(2).as_slice());
        assert_eq!(norms, vec![1.0, 1.0]);
    }

    #[test]
    fn zero_row_is_rejected() {
        let a = DenseMatrix::from_rows(&[[1.0, 0.0], [0.0, 0.0]]).unwrap();
        assert!(matches!(row_normalize(&a), Err(Error::ZeroRow(1))));
    }

    #[test]
    fn random_rows_reconstruct() {
        use rand::Rng;
        let mut rng = crate::rng::stream(3, crate::rng::Domain::Matrix, 0);
        let data: Vec<f64> = (0..24).map(|_| rng.random_range(-2.0..2.0)).collect();
        let a = DenseMatrix::new(8, 3, data).unwrap();
        let (n, norms) = row_normalize(&a).unwrap();
        for i in 0..8 {
            assert!((norm(n.row(i)) - 1.0).abs() < 1e-12);
            for j in 0..3 {
                assert!((norms[i] * n.get(i, j) - a.get(i, j)).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn rejects_non_finite_and_bad_flag() {
        assert!(matches!(
            DenseMatrix::new(1, 2, vec![1.0, f64::NAN]),
            Err(Error::NonFinite { index: 1, .. })
        ));
        let a = DenseMatrix::from_rows(&[[2.0, 0.0]]).unwrap();
        assert!(a.with_row_normalized_flag(true).is_err());
    }
}

/// `|b - A x|` entrywise.
pub fn residual_abs(a: &DenseMatrix, b: &[f64], x: &[f64]) -> Result<Vec<f64>> {
    if b.len() != a.rows() || x.len() != a.cols() {
        return Err(Error::DimensionMismatch(format!(
            "system is {}x{}, rhs {} and iterate {}",
            a.rows(),
            a.cols(),
            b.len(),
            x.len()
        )));
    }
    Ok((0..a.rows()).map(|i| (b[i] - dot(a.row(i), x)).abs()).collect())
}
