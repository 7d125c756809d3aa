//! Dense row-major matrices and a one-sided Jacobi SVD.

use std::ops::{Index, IndexMut};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct Matrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl Matrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Matrix {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Matrix::zeros(n, n);
        for i in 0..n {
            m[(i, i)] = 1.0;
        }
        m
    }

    pub fn from_vec(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(Error::DimensionMismatch {
                expected: rows * cols,
                found: data.len(),
            });
        }
        Ok(Matrix { rows, cols, data })
    }

    pub fn from_rows<R: AsRef<[f64]>>(rows: &[R]) -> Result<Self> {
        let cols = rows.first().map_or(0, |r| r.as_ref().len());
        let mut data = Vec::with_capacity(rows.len() * cols);
        for r in rows {
            let r = r.as_ref();
            if r.len() != cols {
                return Err(Error::DimensionMismatch {
                    expected: cols,
                    found: r.len(),
                });
            }
            data.extend_from_slice(r);
        }
        Ok(Matrix {
            rows: rows.len(),
            cols,
            data,
        })
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn row_mut(&mut self, i: usize) -> &mut [f64] {
        &mut self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn transpose(&self) -> Matrix {
        let mut t = Matrix::zeros(self.cols, self.rows);
        for i in 0..self.rows {
            for j in 0..self.cols {
                t[(j, i)] = self[(i, j)];
            }
        }
        t
    }

    pub fn matmul(&self, other: &Matrix) -> Result<Matrix> {
        if self.cols != other.rows {
            return Err(Error::DimensionMismatch {
                expected: self.cols,
                found: other.rows,
            });
        }
        let mut out = Matrix::zeros(self.rows, other.cols);
        for i in 0..self.rows {
            let out_row = &mut out.data[i * other.cols..(i + 1) * other.cols];
            for (k, &a) in self.row(i).iter().enumerate() {
                if a == 0.0 {
                    continue;
                }
                for (o, &b) in out_row.iter_mut().zip(other.row(k)) {
                    *o += a * b;
                }
            }
        }
        Ok(out)
    }

    /// `selfᵀ · other` without materialising the transpose.
    pub fn transpose_matmul(&self, other: &Matrix) -> Result<Matrix> {
        if self.rows != other.rows {
            return Err(Error::DimensionMismatch {
                expected: self.rows,
                found: other.rows,
            });
        }
        let mut out = Matrix::zeros(self.cols, other.cols);
        for r in 0..self.rows {
            let b_row = other.row(r);
            for (i, &a) in self.row(r).iter().enumerate() {
                if a == 0.0 {
                    continue;
                }
                let out_row = &mut out.data[i * other.cols..(i + 1) * other.cols];
                for (o, &b) in out_row.iter_mut().zip(b_row) {
                    *o += a * b;
                }
            }
        }
        Ok(out)
    }

    pub fn sub(&self, other: &Matrix) -> Result<Matrix> {
        if self.rows != other.rows || self.cols != other.cols {
            return Err(Error::DimensionMismatch {
                expected: self.data.len(),
                found: other.data.len(),
            });
        }
        Ok(Matrix {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().zip(&other.data).map(|(a, b)| a - b).collect(),
        })
    }

    pub fn frobenius_norm(&self) -> f64 {
        self.data.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    pub fn is_identity(&self) -> bool {
        self.rows == self.cols
            && (0..self.rows).all(|i| {
                self.row(i)
                    .iter()
                    .enumerate()
                    .all(|(j, &v)| v == if i == j { 1.0 } else { 0.0 })
            })
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }
}

impl Index<(usize, usize)> for Matrix {
    type Output = f64;

    fn index(&self, (i, j): (usize, usize)) -> &f64 {
        &self.data[i * self.cols + j]
    }
}

impl IndexMut<(usize, usize)> for Matrix {
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut f64 {
        &mut self.data[i * self.cols + j]
    }
}

/// `A = U · diag(singular_values) · Vᵀ` with singular values non-increasing.
#[derive(Debug, Clone)]
pub struct Svd {
    /// m×n, orthonormal columns.
    pub u: Matrix,
    pub singular_values: Vec<f64>,
    /// n×n orthogonal.
    pub v: Matrix,
}

impl Svd {
    pub fn reconstruct(&self) -> Matrix {
        let mut us = self.u.clone();
        for i in 0..us.rows() {
            for (x, s) in us.row_mut(i).iter_mut().zip(&self.singular_values) {
                *x *= s;
            }
        }
        us.matmul(&self.v.transpose()).expect("shapes agree")
    }
}

const MAX_SWEEPS: usize = 80;

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn rotate_rows(m: &mut Matrix, p: usize, q: usize, c: f64, s: f64) {
    let cols = m.cols;
    let (head, tail) = m.data.split_at_mut(q * cols);
    let rp = &mut head[p * cols..(p + 1) * cols];
    let rq = &mut tail[..cols];
    for (x, y) in rp.iter_mut().zip(rq.iter_mut()) {
        let (a, b) = (*x, *y);
        *x = c * a - s * b;
        *y = s * a + c * b;
    }
}

/// Singular value decomposition of an m×n matrix with m ≥ n by one-sided
/// (Hestenes) Jacobi rotations.
///
/// Columns belonging to zero singular values are completed to an
/// orthonormal set so that `U` always has orthonormal columns.
pub fn svd(a: &Matrix) -> Result<Svd> {
    if !a.is_finite() {
        return Err(Error::InvalidInput("SVD input has non-finite entries".into()));
    }
    let (m, n) = (a.rows(), a.cols());
    if m < n {
        return Err(Error::InvalidInput(format!("SVD needs rows >= cols, got {m}x{n}")));
    }
    // Rows of `g` are the columns of A; rows of `vt` the columns of V.
    let mut g = a.transpose();
    let mut vt = Matrix::identity(n);
    let tol = f64::EPSILON * (m as f64).sqrt();

    let mut converged = n < 2;
    let mut sweeps = 0;
    while !converged {
        if sweeps == MAX_SWEEPS {
            return Err(Error::SvdNotConverged { sweeps });
        }
        sweeps += 1;
        let mut rotated = false;
        for p in 0..n - 1 {
            for q in p + 1..n {
                let alpha = dot(g.row(p), g.row(p));
                let beta = dot(g.row(q), g.row(q));
                let gamma = dot(g.row(p), g.row(q));
                if alpha == 0.0 || beta == 0.0 || gamma.abs() <= tol * (alpha * beta).sqrt() {
                    continue;
                }
                rotated = true;
                let zeta = (beta - alpha) / (2.0 * gamma);
                let t = zeta.signum() / (zeta.abs() + (1.0 + zeta * zeta).sqrt());
                let c = 1.0 / (1.0 + t * t).sqrt();
                let s = c * t;
                rotate_rows(&mut g, p, q, c, s);
                rotate_rows(&mut vt, p, q, c, s);
            }
        }
        converged = !rotated;
    }

    let norms: Vec<f64> = (0..n).map(|j| dot(g.row(j), g.row(j)).sqrt()).collect();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| norms[j].total_cmp(&norms[i]).then(i.cmp(&j)));

    let max = norms.iter().copied().fold(0.0, f64::max);
    let cutoff = max * f64::EPSILON * n as f64;
    let mut u_cols: Vec<Vec<f64>> = Vec::with_capacity(n);
    let mut deficient = Vec::new();
    for (slot, &j) in order.iter().enumerate() {
        if norms[j] > cutoff && norms[j] > 0.0 {
            u_cols.push(g.row(j).iter().map(|x| x / norms[j]).collect());
        } else {
            u_cols.push(vec![0.0; m]);
            deficient.push(slot);
        }
    }
    complete_orthonormal(&mut u_cols, &deficient);

    let mut u = Matrix::zeros(m, n);
    let mut v = Matrix::zeros(n, n);
    for (slot, &j) in order.iter().enumerate() {
        for i in 0..m {
            u[(i, slot)] = u_cols[slot][i];
        }
        for i in 0..n {
            v[(i, slot)] = vt[(j, i)];
        }
    }
    Ok(Svd {
        u,
        singular_values: order.iter().map(|&j| norms[j]).collect(),
        v,
    })
}

/// Fills the `missing` columns with unit vectors orthogonal to all others.
fn complete_orthonormal(cols: &mut [Vec<f64>], missing: &[usize]) {
    if missing.is_empty() {
        return;
    }
    let m = cols[0].len();
    let mut candidate = 0;
    for &slot in missing {
        while candidate < m {
            let mut e = vec![0.0; m];
            e[candidate] = 1.0;
            candidate += 1;
            for _ in 0..2 {
                for (k, col) in cols.iter().enumerate() {
                    if k == slot || (missing.contains(&k) && col.iter().all(|x| *x == 0.0)) {
                        continue;
                    }
                    let proj = dot(&e, col);
                    for (x, c) in e.iter_mut().zip(col) {
                        *x -= proj * c;
                    }
                }
            }
            let len = dot(&e, &e).sqrt();
            if len > 0.5 {
                cols[slot] = e.into_iter().map(|x| x / len).collect();
                break;
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn orthonormality_error(m: &Matrix) -> f64 {
        m.transpose()
            .matmul(m)
            .unwrap()
            .sub(&Matrix::identity(m.cols()))
            .unwrap()
            .frobenius_norm()
    }

    #[test]
    fn identity_has_unit_singular_values() {
        let s = svd(&Matrix::identity(4)).unwrap();
        assert_eq!(s.singular_values, vec![1.0; 4]);
    }

    #[test]
    fn diagonal_values_sorted() {
        let a = Matrix::from_rows(&[[2.0, 0.0], [0.0, 3.0]]).unwrap();
        let s = svd(&a).unwrap();
        assert_eq!(s.singular_values, vec![3.0, 2.0]);
    }

    #[test]
    fn random_reconstruction() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for (m, n) in [(5, 5), (12, 7), (40, 40)] {
            let data = (0..m * n).map(|_| rng.random_range(-1.0..1.0)).collect();
            let a = Matrix::from_vec(m, n, data).unwrap();
            let s = svd(&a).unwrap();
            let err = s.reconstruct().sub(&a).unwrap().frobenius_norm();
            assert!(err <= 1e-10 * a.frobenius_norm(), "{m}x{n}: {err}");
            assert!(orthonormality_error(&s.u) < 1e-10);
            assert!(orthonormality_error(&s.v) < 1e-10);
            assert!(s.singular_values.windows(2).all(|w| w[0] >= w[1]));
        }
    }

    #[test]
    fn rank_deficient_gets_orthonormal_u() {
        let a = Matrix::from_rows(&[[1.0, 2.0, 3.0], [2.0, 4.0, 6.0], [0.0, 0.0, 0.0]]).unwrap();
        let s = svd(&a).unwrap();
        assert!(orthonormality_error(&s.u) < 1e-12);
        assert!(s.reconstruct().sub(&a).unwrap().frobenius_norm() < 1e-12);
        assert!(s.singular_values[1] < 1e-12);
        let z = svd(&Matrix::zeros(3, 3)).unwrap();
        assert!(orthonormality_error(&z.u) < 1e-12);
    }

    #[test]
    fn rejects_non_finite() {
        let a = Matrix::from_rows(&[[f64::NAN, 0.0], [0.0, 1.0]]).unwrap();
        assert!(svd(&a).is_err());
    }
}
