//! Least-squares and LMMSE channel estimators.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use num_complex::Complex64;

use crate::error::{invalid, shape};
use crate::linalg::{matvec, Cholesky};
use crate::observation::MeasurementOperator;
use crate::{Error, Result};

/// `(B^H B)^{-1} B^H y`, which for the diagonal operator is `y[k] / s[m]`.
pub fn ls_estimate(y: &[Complex64], op: &MeasurementOperator) -> Result<Vec<Complex64>> {
    if y.len() != op.dim() {
        return Err(shape(format!("{}", op.dim()), format!("{}", y.len())));
    }
    if let Some(m) = op.symbols().iter().position(|s| s.norm_sqr() == 0.0) {
        return Err(Error::Singular(format!("B^H B singular: pilot {m} is zero")));
    }
    let n = op.num_antennas();
    Ok(y.iter().enumerate().map(|(k, v)| v / op.symbols()[k / n]).collect())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CovarianceMode {
    /// Full sample covariance plus ridge.
    Sample,
    /// Diagonal of the sample covariance plus ridge.
    DiagonalRegularized,
    /// `sigma^2 I`.
    Scalar,
}

/// Hermitian PSD channel covariance `R_hh`, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct CovarianceModel {
    pub mode: CovarianceMode,
    pub regularization: f64,
    dim: usize,
    matrix: Vec<Complex64>,
}

impl CovarianceModel {
    pub fn scalar(dim: usize, variance: f64) -> Result<Self> {
        if !(variance > 0.0) {
            return Err(invalid("variance must be positive"));
        }
        let mut matrix = vec![Complex64::new(0.0, 0.0); dim * dim];
        (0..dim).for_each(|i| matrix[i * dim + i] = Complex64::new(variance, 0.0));
        Ok(Self { mode: CovarianceMode::Scalar, regularization: 0.0, dim, matrix })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn matrix(&self) -> &[Complex64] {
        &self.matrix
    }

    pub fn entry(&self, i: usize, j: usize) -> Complex64 {
        self.matrix[i * self.dim + j]
    }
}

/// `R = (1/K) sum_k h_k h_k^H + eps I` over `vec(H)` samples.
pub fn sample_covariance<'a, I>(samples: I, eps: f64, mode: CovarianceMode) -> Result<CovarianceModel>
where
    I: IntoIterator<Item = &'a [Complex64]>,
{
    if !(eps >= 0.0) {
        return Err(invalid("regularization must be non-negative"));
    }
    if mode == CovarianceMode::Scalar {
        return Err(invalid("scalar covariance is built with CovarianceModel::scalar"));
    }
    let mut it = samples.into_iter().peekable();
    let dim = it.peek().map(|h| h.len()).ok_or(Error::EmptyDataset)?;
    let mut acc = vec![Complex64::new(0.0, 0.0); dim * dim];
    let mut count = 0usize;
    for h in it {
        if h.len() != dim {
            return Err(shape(format!("{dim}"), format!("{}", h.len())));
        }
        count += 1;
        for i in 0..dim {
            let hi = h[i];
            let row = &mut acc[i * dim..i * dim + i + 1];
            for (a, hj) in row.iter_mut().zip(&h[..=i]) {
                *a += hi * hj.conj();
            }
        }
    }
    if count < 2 {
        return Err(invalid("sample covariance needs at least two samples"));
    }
    let inv = 1.0 / count as f64;
    let mut matrix = vec![Complex64::new(0.0, 0.0); dim * dim];
    for i in 0..dim {
        for j in 0..=i {
            let v = acc[i * dim + j] * inv;
            match mode {
                CovarianceMode::DiagonalRegularized if i != j => {}
                _ => {
                    matrix[i * dim + j] = v;
                    matrix[j * dim + i] = v.conj();
                }
            }
        }
        matrix[i * dim + i] = Complex64::new(matrix[i * dim + i].re + eps, 0.0);
    }
    Ok(CovarianceModel { mode, regularization: eps, dim, matrix })
}

/// Factorized `R (R + (sigma_n^2 / P_t) I)^{-1}` for repeated use at one SNR.
#[derive(Debug, Clone)]
pub struct LmmseFilter {
    covariance: CovarianceModel,
    /// `None` when `sigma_n^2 = 0` and the filter is the identity.
    factor: Option<Cholesky<Complex64>>,
}

impl LmmseFilter {
    pub fn new(cov: &CovarianceModel, noise_power: f64, pilot_power: f64) -> Result<Self> {
        if !(pilot_power > 0.0) || !(noise_power >= 0.0) {
            return Err(invalid("need P_t > 0 and sigma_n^2 >= 0"));
        }
        if noise_power == 0.0 {
            return Ok(Self { covariance: cov.clone(), factor: None });
        }
        let ratio = noise_power / pilot_power;
        let dim = cov.dim;
        let mut a = cov.matrix.clone();
        (0..dim).for_each(|i| a[i * dim + i] += ratio);
        Ok(Self { covariance: cov.clone(), factor: Some(Cholesky::factor(&a, dim)?) })
    }

    pub fn apply(&self, h_ls: &[Complex64]) -> Result<Vec<Complex64>> {
        let dim = self.covariance.dim;
        if h_ls.len() != dim {
            return Err(shape(format!("{dim}"), format!("{}", h_ls.len())));
        }
        match &self.factor {
            None => Ok(h_ls.to_vec()),
            Some(chol) => {
                let x = chol.solve(h_ls);
                Ok(matvec(&self.covariance.matrix, dim, dim, &x))
            }
        }
    }
}

/// `R (R + (sigma_n^2 / P_t) I)^{-1} h_LS` through one Hermitian solve.
pub fn lmmse_estimate(h_ls: &[Complex64], cov: &CovarianceModel, noise_power: f64, pilot_power: f64) -> Result<Vec<Complex64>> {
    LmmseFilter::new(cov, noise_power, pilot_power)?.apply(h_ls)
}
