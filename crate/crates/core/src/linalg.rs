//! Small dense linear algebra: Hermitian Cholesky factorization and solves.
//!
//! Matrices are row-major `n x n` slices. Only the lower triangle of the input
//! is read.

use alloc::vec;
use alloc::vec::Vec;
use core::ops::{Add, Div, Mul, Sub};

use num_complex::Complex64;

use crate::{Error, Result};

/// Field element usable by [`Cholesky`].
pub trait Scalar:
    Copy
    + Add<Output = Self>
    + Sub<Output = Self>
    + Mul<Output = Self>
    + Div<Output = Self>
    + PartialEq
{
    fn zero() -> Self;
    fn from_real(x: f64) -> Self;
    fn conj(self) -> Self;
    fn real(self) -> f64;
}

impl Scalar for f64 {
    fn zero() -> Self {
        0.0
    }
    fn from_real(x: f64) -> Self {
        x
    }
    fn conj(self) -> Self {
        self
    }
    fn real(self) -> f64 {
        self
    }
}

impl Scalar for Complex64 {
    fn zero() -> Self {
        Complex64::new(0.0, 0.0)
    }
    fn from_real(x: f64) -> Self {
        Complex64::new(x, 0.0)
    }
    fn conj(self) -> Self {
        Complex64::conj(&self)
    }
    fn real(self) -> f64 {
        self.re
    }
}

/// Lower-triangular factor `L` with `A = L L^H`.
#[derive(Debug, Clone)]
pub struct Cholesky<T> {
    n: usize,
    lower: Vec<T>,
}

impl<T: Scalar> Cholesky<T> {
    pub fn factor(a: &[T], n: usize) -> Result<Self> {
        if a.len() != n * n {
            return Err(crate::error::shape(alloc::format!("{n}x{n}"), alloc::format!("{} entries", a.len())));
        }
        let mut l = vec![T::zero(); n * n];
        for j in 0..n {
            let mut diag = a[j * n + j].real();
            for k in 0..j {
                let v = l[j * n + k];
                diag -= (v * v.conj()).real();
            }
            if !(diag > 0.0) || !diag.is_finite() {
                return Err(Error::NotPositiveDefinite { pivot: j });
            }
            let d = libm::sqrt(diag);
            l[j * n + j] = T::from_real(d);
            for i in j + 1..n {
                let mut s = a[i * n + j];
                for k in 0..j {
                    s = s - l[i * n + k] * l[j * n + k].conj();
                }
                l[i * n + j] = s / T::from_real(d);
            }
        }
        Ok(Self { n, lower: l })
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    /// Solves `A x = b` in place.
    pub fn solve_in_place(&self, b: &mut [T]) {
        let n = self.n;
        assert_eq!(b.len(), n);
        let l = &self.lower;
        for i in 0..n {
            let mut s = b[i];
            for k in 0..i {
                s = s - l[i * n + k] * b[k];
            }
            b[i] = s / l[i * n + i];
        }
        for i in (0..n).rev() {
            let mut s = b[i];
            for k in i + 1..n {
                s = s - l[k * n + i].conj() * b[k];
            }
            b[i] = s / l[i * n + i];
        }
    }

    pub fn solve(&self, b: &[T]) -> Vec<T> {
        let mut x = b.to_vec();
        self.solve_in_place(&mut x);
        x
    }
}

/// Row-major matrix-vector product.
pub fn matvec<T: Scalar>(a: &[T], rows: usize, cols: usize, x: &[T]) -> Vec<T> {
    assert_eq!(a.len(), rows * cols);
    assert_eq!(x.len(), cols);
    (0..rows)
        .map(|i| {
            a[i * cols..(i + 1) * cols]
                .iter()
                .zip(x)
                .fold(T::zero(), |acc, (&u, &v)| acc + u * v)
        })
        .collect()
}
