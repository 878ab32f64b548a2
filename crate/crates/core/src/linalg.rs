//! Small dense linear algebra: just what the Jacobian norms and the sampler
//! proposal need. Matrices here are tall and thin (n x p with p <= ~12).

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Row-major dense matrix.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Matrix<T> {
    rows: usize,
    cols: usize,
    data: Vec<T>,
}

impl<T: Scalar> Matrix<T> {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Matrix {
            rows,
            cols,
            data: vec![T::zero(); rows * cols],
        }
    }

    pub fn from_row_major(rows: usize, cols: usize, data: Vec<T>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(Error::DimensionMismatch(format!(
                "{} entries for a {rows}x{cols} matrix",
                data.len()
            )));
        }
        Ok(Matrix { rows, cols, data })
    }

    pub fn from_rows<R: AsRef<[T]>>(rows: &[R]) -> Result<Self> {
        let cols = rows.first().map_or(0, |r| r.as_ref().len());
        let mut data = Vec::with_capacity(rows.len() * cols);
        for r in rows {
            let r = r.as_ref();
            if r.len() != cols {
                return Err(Error::DimensionMismatch("ragged rows".into()));
            }
            data.extend_from_slice(r);
        }
        Ok(Matrix {
            rows: rows.len(),
            cols,
            data,
        })
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m[(i, i)] = T::one();
        }
        m
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
    pub fn row(&self, i: usize) -> &[T] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    #[inline]
    pub fn row_mut(&mut self, i: usize) -> &mut [T] {
        let c = self.cols;
        &mut self.data[i * c..(i + 1) * c]
    }

    pub fn as_slice(&self) -> &[T] {
        &self.data
    }

    pub fn iter_rows(&self) -> impl Iterator<Item = &[T]> {
        self.data.chunks(self.cols.max(1)).take(self.rows)
    }

    pub fn scaled(&self, c: T) -> Self {
        Matrix {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().map(|&v| v * c).collect(),
        }
    }

    /// Copy with rows reordered so that row `i` of the result is row `perm[i]`.
    pub fn permute_rows(&self, perm: &[usize]) -> Self {
        let mut out = Self::zeros(self.rows, self.cols);
        for (i, &src) in perm.iter().enumerate() {
            out.row_mut(i).copy_from_slice(self.row(src));
        }
        out
    }

    /// Singular values in decreasing order for a matrix with `rows >= cols`.
    ///
    /// Householder QR reduces the problem to the p x p factor R (no AᵀA
    /// product, so the condition number is not squared); one-sided Jacobi
    /// then orthogonalizes the columns of R.
    pub fn singular_values(&self) -> Result<Vec<T>> {
        let (n, p) = (self.rows, self.cols);
        if n < p {
            return Err(Error::UnderdeterminedJacobian { rows: n, cols: p });
        }
        let mut cols: Vec<Vec<T>> = (0..p)
            .map(|j| (0..n).map(|i| self.data[i * p + j]).collect())
            .collect();
        householder_triangularize(&mut cols);
        let mut r: Vec<Vec<T>> = cols
            .iter()
            .enumerate()
            .map(|(j, c)| (0..p).map(|i| if i <= j { c[i] } else { T::zero() }).collect())
            .collect();
        jacobi_orthogonalize(&mut r);
        let mut sv: Vec<T> = r
            .iter()
            .map(|c| norm2(c))
            .collect();
        sv.sort_by(|a, b| b.partial_cmp(a).unwrap_or(std::cmp::Ordering::Equal));
        Ok(sv)
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

/// In-place Householder reduction of column-stored `cols` to upper
/// triangular form; entries below the diagonal are left unspecified.
/// Euclidean norm; rescales only when the plain sum of squares over- or
/// underflows.
fn norm2<T: Scalar>(x: &[T]) -> T {
    let s: T = x.iter().map(|&v| v * v).sum();
    if s.is_finite() && s > T::min_positive_value() / T::epsilon() {
        return s.sqrt();
    }
    let m = x.iter().fold(T::zero(), |acc, &v| acc.max(v.abs()));
    if m == T::zero() || !m.is_finite() {
        return m;
    }
    m * x.iter().map(|&v| (v / m) * (v / m)).sum::<T>().sqrt()
}

fn householder_triangularize<T: Scalar>(cols: &mut [Vec<T>]) {
    let p = cols.len();
    let two = T::lit(2.0);
    for k in 0..p {
        let (head, tail) = cols.split_at_mut(k + 1);
        let x = &mut head[k];
        let norm = norm2(&x[k..]);
        if norm == T::zero() {
            continue;
        }
        let alpha = if x[k] > T::zero() { -norm } else { norm };
        let mut v: Vec<T> = x[k..].to_vec();
        v[0] -= alpha;
        let vnorm2: T = v.iter().map(|&a| a * a).sum();
        if vnorm2 == T::zero() {
            continue;
        }
        for c in tail.iter_mut() {
            let s: T = v.iter().zip(&c[k..]).map(|(&a, &b)| a * b).sum();
            let f = two * s / vnorm2;
            for (ci, &vi) in c[k..].iter_mut().zip(&v) {
                *ci -= f * vi;
            }
        }
        x[k] = alpha;
    }
}

/// One-sided Jacobi rotations until all column pairs are orthogonal.
fn jacobi_orthogonalize<T: Scalar>(cols: &mut [Vec<T>]) {
    let p = cols.len();
    let tol = T::epsilon();
    for _sweep in 0..100 {
        let mut rotated = false;
        for i in 0..p {
            for j in (i + 1)..p {
                let (a, b, c) = {
                    let (ci, cj) = (&cols[i], &cols[j]);
                    let a: T = ci.iter().map(|&v| v * v).sum();
                    let b: T = cj.iter().map(|&v| v * v).sum();
                    let c: T = ci.iter().zip(cj).map(|(&u, &v)| u * v).sum();
                    (a, b, c)
                };
                if c == T::zero() || c.abs() <= tol * (a * b).sqrt() {
                    continue;
                }
                rotated = true;
                let zeta = (b - a) / (T::lit(2.0) * c);
                let t = zeta.signum() / (zeta.abs() + (T::one() + zeta * zeta).sqrt());
                let cs = T::one() / (T::one() + t * t).sqrt();
                let sn = cs * t;
                let (lo, hi) = cols.split_at_mut(j);
                for (u, v) in lo[i].iter_mut().zip(hi[0].iter_mut()) {
                    let (x, y) = (*u, *v);
                    *u = cs * x - sn * y;
                    *v = sn * x + cs * y;
                }
            }
        }
        if !rotated {
            break;
        }
    }
}

/// Determinant of a square row-major matrix by partially pivoted LU.
pub fn determinant<T: Scalar>(a: &[T], n: usize) -> T {
    debug_assert_eq!(a.len(), n * n);
    let mut m = a.to_vec();
    let mut det = T::one();
    for k in 0..n {
        let mut piv = k;
        let mut best = m[k * n + k].abs();
        for i in (k + 1)..n {
            let v = m[i * n + k].abs();
            if v > best {
                best = v;
                piv = i;
            }
        }
        if best == T::zero() {
            return T::zero();
        }
        if piv != k {
            for j in 0..n {
                m.swap(k * n + j, piv * n + j);
            }
            det = -det;
        }
        let d = m[k * n + k];
        det *= d;
        for i in (k + 1)..n {
            let f = m[i * n + k] / d;
            if f != T::zero() {
                for j in (k + 1)..n {
                    let u = m[k * n + j];
                    m[i * n + j] -= f * u;
                }
            }
        }
    }
    det
}

/// Lower Cholesky factor of a symmetric positive definite matrix, `None`
/// if a pivot is not strictly positive.
pub fn cholesky<T: Scalar>(a: &Matrix<T>) -> Option<Matrix<T>> {
    let n = a.rows();
    let mut l = Matrix::zeros(n, n);
    for i in 0..n {
        for j in 0..=i {
            let mut s = a[(i, j)];
            for k in 0..j {
                s -= l[(i, k)] * l[(j, k)];
            }
            if i == j {
                if !(s > T::zero()) || !s.is_finite() {
                    return None;
                }
                l[(i, i)] = s.sqrt();
            } else {
                l[(i, j)] = s / l[(j, j)];
            }
        }
    }
    Some(l)
}

/// Inverse of an SPD matrix through its Cholesky factor.
pub fn spd_inverse<T: Scalar>(a: &Matrix<T>) -> Option<Matrix<T>> {
    let n = a.rows();
    let l = cholesky(a)?;
    let mut inv = Matrix::zeros(n, n);
    for col in 0..n {
        // forward: L y = e_col
        let mut y = vec![T::zero(); n];
        for i in 0..n {
            let mut s = if i == col { T::one() } else { T::zero() };
            for k in 0..i {
                s -= l[(i, k)] * y[k];
            }
            y[i] = s / l[(i, i)];
        }
        // backward: Lᵀ x = y
        let mut x = vec![T::zero(); n];
        for i in (0..n).rev() {
            let mut s = y[i];
            for k in (i + 1)..n {
                s -= l[(k, i)] * x[k];
            }
            x[i] = s / l[(i, i)];
        }
        for i in 0..n {
            inv[(i, col)] = x[i];
        }
    }
    Some(inv)
}
