//! Dense matrices and LU factorization with partial pivoting over real or
//! complex scalars.

use num_complex::Complex64;
use std::fmt::Debug;
use std::ops::{Add, AddAssign, Div, Mul, MulAssign, Neg, Sub, SubAssign};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum LinalgError {
    #[error("matrix is {rows}x{cols}, expected square")]
    NotSquare { rows: usize, cols: usize },
    #[error("matrix is singular (pivot {pivot:e} at step {step})")]
    Singular { step: usize, pivot: f64 },
    #[error("dimension mismatch: expected {expected}, got {got}")]
    Dimension { expected: usize, got: usize },
}

/// Field scalar usable by [`DenseMatrix`] and [`LuFactorization`].
pub trait Scalar:
    Copy
    + Debug
    + PartialEq
    + Send
    + Sync
    + Add<Output = Self>
    + Sub<Output = Self>
    + Mul<Output = Self>
    + Div<Output = Self>
    + Neg<Output = Self>
    + AddAssign
    + SubAssign
    + MulAssign
{
    fn zero() -> Self;
    fn one() -> Self;
    fn from_f64(x: f64) -> Self;
    fn modulus(self) -> f64;
    fn conj(self) -> Self;
}

impl Scalar for f64 {
    fn zero() -> Self {
        0.0
    }
    fn one() -> Self {
        1.0
    }
    fn from_f64(x: f64) -> Self {
        x
    }
    fn modulus(self) -> f64 {
        self.abs()
    }
    fn conj(self) -> Self {
        self
    }
}

impl Scalar for Complex64 {
    fn zero() -> Self {
        Complex64::new(0.0, 0.0)
    }
    fn one() -> Self {
        Complex64::new(1.0, 0.0)
    }
    fn from_f64(x: f64) -> Self {
        Complex64::new(x, 0.0)
    }
    fn modulus(self) -> f64 {
        self.norm()
    }
    fn conj(self) -> Self {
        Complex64::conj(&self)
    }
}

/// Row-major dense matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct DenseMatrix<T> {
    rows: usize,
    cols: usize,
    data: Vec<T>,
}

impl<T: Scalar> DenseMatrix<T> {
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

    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> T) -> Self {
        let mut data = Vec::with_capacity(rows * cols);
        for i in 0..rows {
            for j in 0..cols {
                data.push(f(i, j));
            }
        }
        Self { rows, cols, data }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn row(&self, i: usize) -> &[T] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn map(&self, f: impl Fn(T) -> T) -> Self {
        Self {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().map(|&x| f(x)).collect(),
        }
    }

    pub fn mul(&self, other: &Self) -> Result<Self, LinalgError> {
        if self.cols != other.rows {
            return Err(LinalgError::Dimension {
                expected: self.cols,
                got: other.rows,
            });
        }
        let mut out = Self::zeros(self.rows, other.cols);
        for i in 0..self.rows {
            for k in 0..self.cols {
                let a = self[(i, k)];
                if a == T::zero() {
                    continue;
                }
                let src = other.row(k);
                let dst = &mut out.data[i * other.cols..(i + 1) * other.cols];
                for (d, &s) in dst.iter_mut().zip(src) {
                    *d += a * s;
                }
            }
        }
        Ok(out)
    }

    pub fn mul_vec(&self, x: &[T]) -> Result<Vec<T>, LinalgError> {
        if x.len() != self.cols {
            return Err(LinalgError::Dimension {
                expected: self.cols,
                got: x.len(),
            });
        }
        Ok((0..self.rows)
            .map(|i| {
                self.row(i)
                    .iter()
                    .zip(x)
                    .fold(T::zero(), |acc, (&a, &b)| acc + a * b)
            })
            .collect())
    }

    /// Largest entry modulus.
    pub fn max_modulus(&self) -> f64 {
        self.data.iter().fold(0.0, |m, x| m.max(x.modulus()))
    }
}

impl<T> std::ops::Index<(usize, usize)> for DenseMatrix<T> {
    type Output = T;
    fn index(&self, (i, j): (usize, usize)) -> &T {
        &self.data[i * self.cols + j]
    }
}

impl<T> std::ops::IndexMut<(usize, usize)> for DenseMatrix<T> {
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut T {
        &mut self.data[i * self.cols + j]
    }
}

/// `P A = L U` with unit lower-triangular `L`, stored in place.
#[derive(Debug, Clone)]
pub struct LuFactorization<T> {
    lu: DenseMatrix<T>,
    perm: Vec<usize>,
    perm_sign: f64,
    singular_at: Option<(usize, f64)>,
}

impl<T: Scalar> LuFactorization<T> {
    /// Factor `a`. A zero (or numerically negligible) pivot is recorded, not
    /// reported as an error, so that the determinant of a singular matrix
    /// can still be queried.
    pub fn new(a: &DenseMatrix<T>) -> Result<Self, LinalgError> {
        if a.rows != a.cols {
            return Err(LinalgError::NotSquare {
                rows: a.rows,
                cols: a.cols,
            });
        }
        let n = a.rows;
        let mut lu = a.clone();
        let mut perm: Vec<usize> = (0..n).collect();
        let mut perm_sign = 1.0;
        let mut singular_at = None;
        let threshold = a.max_modulus() * f64::EPSILON * (n.max(1) as f64);
        for k in 0..n {
            let (p, pmax) = (k..n)
                .map(|i| (i, lu[(i, k)].modulus()))
                .fold((k, -1.0), |best, cur| if cur.1 > best.1 { cur } else { best });
            if p != k {
                for j in 0..n {
                    lu.data.swap(k * n + j, p * n + j);
                }
                perm.swap(k, p);
                perm_sign = -perm_sign;
            }
            if pmax <= threshold {
                if singular_at.is_none() {
                    singular_at = Some((k, pmax));
                }
                continue;
            }
            let pivot = lu[(k, k)];
            let (head, tail) = lu.data.split_at_mut((k + 1) * n);
            let row_k = &head[k * n..(k + 1) * n];
            for row in tail.chunks_mut(n) {
                let factor = row[k] / pivot;
                row[k] = factor;
                if factor == T::zero() {
                    continue;
                }
                for j in k + 1..n {
                    row[j] -= factor * row_k[j];
                }
            }
        }
        Ok(Self {
            lu,
            perm,
            perm_sign,
            singular_at,
        })
    }

    pub fn dim(&self) -> usize {
        self.lu.rows
    }

    pub fn is_singular(&self) -> bool {
        self.singular_at.is_some()
    }

    /// `log |det A|`; `-inf` for a singular matrix.
    pub fn log_abs_det(&self) -> f64 {
        if self.is_singular() {
            return f64::NEG_INFINITY;
        }
        (0..self.dim()).map(|i| self.lu[(i, i)].modulus().ln()).sum()
    }

    /// `det A / |det A|`, or zero for a singular matrix.
    pub fn det_phase(&self) -> T {
        if self.is_singular() {
            return T::zero();
        }
        let mut phase = T::from_f64(self.perm_sign);
        for i in 0..self.dim() {
            let d = self.lu[(i, i)];
            phase *= d / T::from_f64(d.modulus());
        }
        phase
    }

    pub fn det(&self) -> T {
        if self.is_singular() {
            return T::zero();
        }
        let mut d = T::from_f64(self.perm_sign);
        for i in 0..self.dim() {
            d *= self.lu[(i, i)];
        }
        d
    }

    /// Solve `A x = b`.
    pub fn solve(&self, b: &[T]) -> Result<Vec<T>, LinalgError> {
        let n = self.dim();
        if b.len() != n {
            return Err(LinalgError::Dimension {
                expected: n,
                got: b.len(),
            });
        }
        if let Some((step, pivot)) = self.singular_at {
            return Err(LinalgError::Singular { step, pivot });
        }
        let mut x: Vec<T> = self.perm.iter().map(|&p| b[p]).collect();
        for i in 0..n {
            let row = self.lu.row(i);
            let mut s = x[i];
            for j in 0..i {
                s -= row[j] * x[j];
            }
            x[i] = s;
        }
        for i in (0..n).rev() {
            let row = self.lu.row(i);
            let mut s = x[i];
            for j in i + 1..n {
                s -= row[j] * x[j];
            }
            x[i] = s / row[i];
        }
        Ok(x)
    }

    pub fn inverse(&self) -> Result<DenseMatrix<T>, LinalgError> {
        let n = self.dim();
        let mut inv = DenseMatrix::zeros(n, n);
        let mut e = vec![T::zero(); n];
        for j in 0..n {
            e[j] = T::one();
            let col = self.solve(&e)?;
            e[j] = T::zero();
            for i in 0..n {
                inv[(i, j)] = col[i];
            }
        }
        Ok(inv)
    }
}

/// Determinant of a small square matrix.
pub fn det<T: Scalar>(a: &DenseMatrix<T>) -> Result<T, LinalgError> {
    match a.rows() {
        0 if a.cols() == 0 => Ok(T::one()),
        1 if a.cols() == 1 => Ok(a[(0, 0)]),
        2 if a.cols() == 2 => Ok(a[(0, 0)] * a[(1, 1)] - a[(0, 1)] * a[(1, 0)]),
        _ => Ok(LuFactorization::new(a)?.det()),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    #[test]
    fn real_determinant_and_solve() {
        let a = DenseMatrix::from_fn(3, 3, |i, j| [[2.0, 1.0, 1.0], [4.0, -6.0, 0.0], [-2.0, 7.0, 2.0]][i][j]);
        let lu = LuFactorization::new(&a).unwrap();
        assert_abs_diff_eq!(lu.det(), -16.0, epsilon = 1e-12);
        let x = lu.solve(&[5.0, -2.0, 9.0]).unwrap();
        for (xi, e) in x.iter().zip([1.0, 1.0, 2.0]) {
            assert_abs_diff_eq!(*xi, e, epsilon = 1e-12);
        }
    }

    #[test]
    fn complex_inverse_round_trip() {
        let a = DenseMatrix::from_fn(4, 4, |i, j| {
            c(((i * 7 + j * 3) % 5) as f64 - 2.0, ((i + 2 * j) % 3) as f64 - 1.0)
        });
        let lu = LuFactorization::new(&a).unwrap();
        let inv = lu.inverse().unwrap();
        let prod = a.mul(&inv).unwrap();
        for i in 0..4 {
            for j in 0..4 {
                let e = if i == j { 1.0 } else { 0.0 };
                assert!((prod[(i, j)] - c(e, 0.0)).norm() < 1e-12);
            }
        }
        let d = lu.det();
        let from_log = lu.log_abs_det().exp() * lu.det_phase();
        assert!((d - from_log).norm() < 1e-10 * d.norm());
    }

    #[test]
    fn singular_matrix_has_zero_determinant() {
        let a = DenseMatrix::from_fn(2, 2, |i, j| c((i + 1) as f64 * (j + 1) as f64, 0.0));
        let lu = LuFactorization::new(&a).unwrap();
        assert!(lu.is_singular());
        assert_eq!(lu.det(), c(0.0, 0.0));
        assert!(matches!(lu.solve(&[c(1.0, 0.0); 2]), Err(LinalgError::Singular { .. })));
    }

    #[test]
    fn rectangular_is_rejected() {
        let a: DenseMatrix<f64> = DenseMatrix::zeros(2, 3);
        assert!(matches!(
            LuFactorization::new(&a),
            Err(LinalgError::NotSquare { rows: 2, cols: 3 })
        ));
    }

    #[test]
    fn small_det_matches_lu() {
        let a = DenseMatrix::from_fn(3, 3, |i, j| c((i as f64) - (j as f64) * 0.5, (i * j) as f64));
        let d = det(&a).unwrap();
        let lu = LuFactorization::new(&a).unwrap().det();
        assert!((d - lu).norm() < 1e-12);
    }
}
