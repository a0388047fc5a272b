//! Small dense linear algebra: a row-major matrix, Householder least squares,
//! Cholesky solves and a cyclic Jacobi eigensolver for symmetric matrices.
//!
//! Everything here is sized for the problems the balance tests produce
//! (hundreds to thousands of rows, a handful of columns).

use serde::{Deserialize, Serialize};

use crate::error::{BalanceError, Result};
use crate::scalar::Scalar;

/// Dense row-major matrix.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Matrix<T> {
    rows: usize,
    cols: usize,
    data: Vec<T>,
}

impl<T: Scalar> Matrix<T> {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            data: vec![T::zero(); rows * cols],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m[(i, i)] = T::one();
        }
        m
    }

    /// Builds a matrix from row-major data.
    pub fn from_row_major(rows: usize, cols: usize, data: Vec<T>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(BalanceError::ShapeMismatch(format!(
                "{} values cannot fill a {rows}x{cols} matrix",
                data.len()
            )));
        }
        Ok(Self { rows, cols, data })
    }

    pub fn from_rows(rows: &[Vec<T>]) -> Result<Self> {
        let cols = rows.first().map_or(0, Vec::len);
        let mut data = Vec::with_capacity(rows.len() * cols);
        for (i, r) in rows.iter().enumerate() {
            if r.len() != cols {
                return Err(BalanceError::ShapeMismatch(format!(
                    "row {i} has {} entries, expected {cols}",
                    r.len()
                )));
            }
            data.extend_from_slice(r);
        }
        Ok(Self {
            rows: rows.len(),
            cols,
            data,
        })
    }

    pub fn from_columns(columns: &[Vec<T>]) -> Result<Self> {
        let rows = columns.first().map_or(0, Vec::len);
        if let Some(bad) = columns.iter().position(|c| c.len() != rows) {
            return Err(BalanceError::ShapeMismatch(format!(
                "column {bad} has {} entries, expected {rows}",
                columns[bad].len()
            )));
        }
        Ok(Self::from_fn(rows, columns.len(), |i, j| columns[j][i]))
    }

    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> T) -> Self {
        let mut data = Vec::with_capacity(rows * cols);
        for i in 0..rows {
            for j in 0..cols {
                data.push(f(i, j));
            }
        }
        Self { rows, cols, data }
    }

    #[inline]
    pub fn nrows(&self) -> usize {
        self.rows
    }

    #[inline]
    pub fn ncols(&self) -> usize {
        self.cols
    }

    #[inline]
    pub fn row(&self, i: usize) -> &[T] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn column(&self, j: usize) -> Vec<T> {
        (0..self.rows).map(|i| self[(i, j)]).collect()
    }

    pub fn columns(&self) -> Vec<Vec<T>> {
        (0..self.cols).map(|j| self.column(j)).collect()
    }

    pub fn as_slice(&self) -> &[T] {
        &self.data
    }

    pub fn select_rows(&self, idx: &[usize]) -> Self {
        let mut data = Vec::with_capacity(idx.len() * self.cols);
        for &i in idx {
            data.extend_from_slice(self.row(i));
        }
        Self {
            rows: idx.len(),
            cols: self.cols,
            data,
        }
    }

    pub fn select_columns(&self, idx: &[usize]) -> Self {
        Self::from_fn(self.rows, idx.len(), |i, j| self[(i, idx[j])])
    }

    /// Returns a copy with `column` appended on the right.
    pub fn with_column(&self, column: &[T]) -> Result<Self> {
        if column.len() != self.rows {
            return Err(BalanceError::ShapeMismatch(format!(
                "appended column has {} entries, matrix has {} rows",
                column.len(),
                self.rows
            )));
        }
        Ok(Self::from_fn(self.rows, self.cols + 1, |i, j| {
            if j < self.cols {
                self[(i, j)]
            } else {
                column[i]
            }
        }))
    }

    pub fn transpose(&self) -> Self {
        Self::from_fn(self.cols, self.rows, |i, j| self[(j, i)])
    }

    pub fn mul_vec(&self, v: &[T]) -> Vec<T> {
        debug_assert_eq!(v.len(), self.cols);
        (0..self.rows).map(|i| dot(self.row(i), v)).collect()
    }

    pub fn matmul(&self, other: &Self) -> Self {
        debug_assert_eq!(self.cols, other.rows);
        Self::from_fn(self.rows, other.cols, |i, j| {
            (0..self.cols).map(|k| self[(i, k)] * other[(k, j)]).sum()
        })
    }

    /// Quadratic form `v' A v`.
    pub fn quadratic_form(&self, v: &[T]) -> T {
        dot(v, &self.mul_vec(v))
    }

    pub fn is_symmetric(&self, tol: T) -> bool {
        self.rows == self.cols
            && (0..self.rows).all(|i| (0..i).all(|j| (self[(i, j)] - self[(j, i)]).abs() <= tol))
    }
}

impl<T> std::ops::Index<(usize, usize)> for Matrix<T> {
    type Output = T;
    #[inline]
    fn index(&self, (i, j): (usize, usize)) -> &T {
        &self.data[i * self.cols + j]
    }
}

impl<T> std::ops::IndexMut<(usize, usize)> for Matrix<T> {
    #[inline]
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut T {
        &mut self.data[i * self.cols + j]
    }
}

#[inline]
pub fn dot<T: Scalar>(a: &[T], b: &[T]) -> T {
    a.iter().zip(b).fold(T::zero(), |acc, (&x, &y)| acc + x * y)
}

pub fn norm<T: Scalar>(a: &[T]) -> T {
    // scaled to avoid overflow on large inputs
    let scale = a.iter().fold(T::zero(), |m, v| m.max(v.abs()));
    if scale == T::zero() {
        return T::zero();
    }
    let s: T = a.iter().map(|&v| (v / scale) * (v / scale)).sum();
    scale * s.sqrt()
}

/// Least-squares solution of `A b ≈ y` by Householder QR.
///
/// A column `k` is declared collinear when the diagonal `|R_kk|` falls below
/// `T::rank_tolerance()` times the norm of the original column `k`. All
/// offending columns are reported together.
pub fn least_squares<T: Scalar>(a: &Matrix<T>, y: &[T]) -> Result<Vec<T>> {
    let (m, n) = (a.nrows(), a.ncols());
    if y.len() != m {
        return Err(BalanceError::ShapeMismatch(format!(
            "response has {} entries, design has {m} rows",
            y.len()
        )));
    }
    if m < n {
        return Err(BalanceError::InsufficientRows {
            rows: m,
            required: n.saturating_sub(1),
        });
    }
    let tol = T::rank_tolerance();
    let mut cols = a.columns();
    let col_norms: Vec<T> = cols.iter().map(|c| norm(c)).collect();
    let mut qty = y.to_vec();
    let mut diag = vec![T::zero(); n];
    let mut collinear = Vec::new();

    for k in 0..n {
        let alpha = norm(&cols[k][k..]);
        if col_norms[k] == T::zero() || alpha <= tol * col_norms[k] {
            collinear.push(k);
            continue;
        }
        let x0 = cols[k][k];
        let sign = if x0 >= T::zero() { T::one() } else { -T::one() };
        let mut v: Vec<T> = cols[k][k..].to_vec();
        v[0] = v[0] + sign * alpha;
        let vnorm2 = dot(&v, &v);
        let two = T::lit(2.0);
        for c in cols.iter_mut().skip(k + 1) {
            let s = two * dot(&v, &c[k..]) / vnorm2;
            for (ci, &vi) in c[k..].iter_mut().zip(&v) {
                *ci = *ci - s * vi;
            }
        }
        let s = two * dot(&v, &qty[k..]) / vnorm2;
        for (qi, &vi) in qty[k..].iter_mut().zip(&v) {
            *qi = *qi - s * vi;
        }
        diag[k] = -sign * alpha;
    }
    if !collinear.is_empty() {
        return Err(BalanceError::RankDeficient { columns: collinear });
    }

    let mut beta = vec![T::zero(); n];
    for k in (0..n).rev() {
        let mut acc = qty[k];
        for (j, bj) in beta.iter().enumerate().skip(k + 1) {
            acc = acc - cols[j][k] * *bj;
        }
        beta[k] = acc / diag[k];
    }
    Ok(beta)
}

/// Cholesky factor `L` (lower triangular) of a symmetric positive definite
/// matrix, or `None` if a pivot is not safely positive.
pub fn cholesky<T: Scalar>(a: &Matrix<T>) -> Option<Matrix<T>> {
    let n = a.nrows();
    let max_diag = (0..n).fold(T::zero(), |m, i| m.max(a[(i, i)].abs()));
    let floor = max_diag * T::rank_tolerance();
    let mut l = Matrix::zeros(n, n);
    for j in 0..n {
        let mut d = a[(j, j)];
        for k in 0..j {
            d = d - l[(j, k)] * l[(j, k)];
        }
        if !(d > floor) {
            return None;
        }
        let djj = d.sqrt();
        l[(j, j)] = djj;
        for i in j + 1..n {
            let mut s = a[(i, j)];
            for k in 0..j {
                s = s - l[(i, k)] * l[(j, k)];
            }
            l[(i, j)] = s / djj;
        }
    }
    Some(l)
}

/// Solves `L L' x = b` given the Cholesky factor.
pub fn cholesky_solve<T: Scalar>(l: &Matrix<T>, b: &[T]) -> Vec<T> {
    let n = l.nrows();
    let mut w = b.to_vec();
    for i in 0..n {
        let mut s = w[i];
        for k in 0..i {
            s = s - l[(i, k)] * w[k];
        }
        w[i] = s / l[(i, i)];
    }
    for i in (0..n).rev() {
        let mut s = w[i];
        for k in i + 1..n {
            s = s - l[(k, i)] * w[k];
        }
        w[i] = s / l[(i, i)];
    }
    w
}

/// Eigen-decomposition of a symmetric matrix by cyclic Jacobi rotations.
///
/// Returns eigenvalues (unsorted) and the matrix whose columns are the
/// corresponding eigenvectors.
pub fn symmetric_eigen<T: Scalar>(a: &Matrix<T>) -> (Vec<T>, Matrix<T>) {
    let n = a.nrows();
    let mut m = a.clone();
    let mut v = Matrix::identity(n);
    for _sweep in 0..100 {
        let off: T = (0..n)
            .flat_map(|i| (0..n).filter(move |&j| j != i).map(move |j| (i, j)))
            .map(|(i, j)| m[(i, j)] * m[(i, j)])
            .sum();
        if off <= T::epsilon() * T::epsilon() {
            break;
        }
        for p in 0..n {
            for q in p + 1..n {
                let apq = m[(p, q)];
                if apq == T::zero() {
                    continue;
                }
                let theta = (m[(q, q)] - m[(p, p)]) / (T::lit(2.0) * apq);
                let t = theta.signum() / (theta.abs() + (theta * theta + T::one()).sqrt());
                let c = T::one() / (t * t + T::one()).sqrt();
                let s = t * c;
                for k in 0..n {
                    let mkp = m[(k, p)];
                    let mkq = m[(k, q)];
                    m[(k, p)] = c * mkp - s * mkq;
                    m[(k, q)] = s * mkp + c * mkq;
                }
                for k in 0..n {
                    let mpk = m[(p, k)];
                    let mqk = m[(q, k)];
                    m[(p, k)] = c * mpk - s * mqk;
                    m[(q, k)] = s * mpk + c * mqk;
                }
                for k in 0..n {
                    let vkp = v[(k, p)];
                    let vkq = v[(k, q)];
                    v[(k, p)] = c * vkp - s * vkq;
                    v[(k, q)] = s * vkp + c * vkq;
                }
            }
        }
    }
    ((0..n).map(|i| m[(i, i)]).collect(), v)
}

/// Moore–Penrose pseudo-inverse of a symmetric matrix.
pub fn symmetric_pinv<T: Scalar>(a: &Matrix<T>) -> Matrix<T> {
    let n = a.nrows();
    let (vals, vecs) = symmetric_eigen(a);
    let max_abs = vals.iter().fold(T::zero(), |m, v| m.max(v.abs()));
    let cutoff = max_abs * T::rank_tolerance();
    let mut out = Matrix::zeros(n, n);
    for (k, &lambda) in vals.iter().enumerate() {
        if lambda.abs() <= cutoff {
            continue;
        }
        let inv = T::one() / lambda;
        for i in 0..n {
            for j in 0..n {
                out[(i, j)] = out[(i, j)] + vecs[(i, k)] * vecs[(j, k)] * inv;
            }
        }
    }
    out
}
