//! Pilot observation model `Y = H S + N`, equivalently `y = B h + n` with
//! `B = S^T (x) I_N`.
//!
//! # Index maps
//!
//! Complex vectors are `vec(H)`: entry `(n, m)` sits at `n + N m`. The real
//! representation used by the network and the diffusion sampler is the plane
//! tensor `2 x N x M` in row-major order: entry `(n, m)` has its real part at
//! `n M + m` and its imaginary part at `N M + n M + m`. [`complex_to_planes`]
//! and [`planes_to_complex`] are the only conversions between the two.
//!
//! In the real representation `B` acts on each `(re, im)` pair as the 2x2 block
//! `[[Re s, -Im s], [Im s, Re s]]`, so `B B^T = |s[m]|^2 I` entrywise.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use num_complex::Complex64;
use rand::Rng;

use crate::channel::ChannelMatrix;
use crate::error::{invalid, shape};
use crate::linalg::Cholesky;
use crate::rng::{self, complex_gaussian};
use crate::{Error, Result};

pub fn complex_to_planes(vec_h: &[Complex64], num_antennas: usize, num_subcarriers: usize) -> Vec<f64> {
    let nm = num_antennas * num_subcarriers;
    assert_eq!(vec_h.len(), nm);
    let mut planes = vec![0.0; 2 * nm];
    for m in 0..num_subcarriers {
        for n in 0..num_antennas {
            let z = vec_h[n + num_antennas * m];
            planes[n * num_subcarriers + m] = z.re;
            planes[nm + n * num_subcarriers + m] = z.im;
        }
    }
    planes
}

pub fn planes_to_complex(planes: &[f64], num_antennas: usize, num_subcarriers: usize) -> Vec<Complex64> {
    let nm = num_antennas * num_subcarriers;
    assert_eq!(planes.len(), 2 * nm);
    let mut out = vec![Complex64::new(0.0, 0.0); nm];
    for m in 0..num_subcarriers {
        for n in 0..num_antennas {
            let k = n * num_subcarriers + m;
            out[n + num_antennas * m] = Complex64::new(planes[k], planes[nm + k]);
        }
    }
    out
}

/// `sigma_n^2 = P_t / 10^(snr_db / 10)`, i.e. SNR is `P_t / sigma_n^2` for a
/// channel with unit per-entry power.
pub fn snr_to_noise_power(snr_db: f64, pilot_power: f64) -> Result<f64> {
    if !(pilot_power > 0.0) {
        return Err(invalid("pilot power must be positive"));
    }
    Ok(pilot_power / libm::pow(10.0, snr_db / 10.0))
}

/// Pilot symbols with `|s[m]|^2 = P_t` and the receiver noise power.
#[derive(Debug, Clone, PartialEq)]
pub struct PilotConfig {
    pub power: f64,
    pub symbols: Vec<Complex64>,
    pub noise_power: f64,
}

impl PilotConfig {
    /// Real pilots `s[m] = sqrt(P_t)`.
    pub fn constant(num_subcarriers: usize, power: f64, noise_power: f64) -> Result<Self> {
        if !(power > 0.0) {
            return Err(invalid("pilot power must be positive"));
        }
        if !(noise_power >= 0.0) {
            return Err(invalid("noise power must be non-negative"));
        }
        Ok(Self {
            power,
            symbols: vec![Complex64::new(libm::sqrt(power), 0.0); num_subcarriers],
            noise_power,
        })
    }

    /// Unit-power real pilots at the given SNR.
    pub fn from_snr_db(num_subcarriers: usize, snr_db: f64) -> Result<Self> {
        Self::constant(num_subcarriers, 1.0, snr_to_noise_power(snr_db, 1.0)?)
    }

    /// Arbitrary constant-modulus symbols; `P_t` is taken from their modulus.
    pub fn with_symbols(symbols: Vec<Complex64>, noise_power: f64) -> Result<Self> {
        let power = symbols.first().map(Complex64::norm_sqr).ok_or_else(|| invalid("no pilot symbols"))?;
        if !(power > 0.0) {
            return Err(invalid("pilot power must be positive"));
        }
        if symbols.iter().any(|s| (s.norm_sqr() - power).abs() > 1e-12 * power) {
            return Err(invalid("pilot symbols must have constant modulus"));
        }
        if !(noise_power >= 0.0) {
            return Err(invalid("noise power must be non-negative"));
        }
        Ok(Self { power, symbols, noise_power })
    }

    pub fn operator(&self, num_antennas: usize) -> MeasurementOperator {
        MeasurementOperator::new(num_antennas, self.symbols.clone())
    }
}

/// `Y[:, m] = s[m] h[m] + n[m]` with `n ~ CN(0, sigma_n^2 I)`.
pub fn observe(h: &ChannelMatrix, pc: &PilotConfig, seed: u64) -> Result<ChannelMatrix> {
    observe_with(h, pc, &mut rng::stream(seed, &[]))
}

pub fn observe_with<R: Rng + ?Sized>(h: &ChannelMatrix, pc: &PilotConfig, rng: &mut R) -> Result<ChannelMatrix> {
    if pc.symbols.len() != h.num_subcarriers() {
        return Err(shape(format!("{} pilots", h.num_subcarriers()), format!("{}", pc.symbols.len())));
    }
    let mut y = ChannelMatrix::zeros(h.num_antennas(), h.num_subcarriers());
    for (m, s) in pc.symbols.iter().enumerate() {
        for (out, hv) in y.column_mut(m).iter_mut().zip(h.column(m)) {
            *out = hv * s;
            if pc.noise_power > 0.0 {
                *out += complex_gaussian(rng, pc.noise_power);
            }
        }
    }
    Ok(y)
}

/// `B = S^T (x) I_N`, applied through its diagonal structure in `O(N M)`.
#[derive(Debug, Clone, PartialEq)]
pub struct MeasurementOperator {
    num_antennas: usize,
    symbols: Vec<Complex64>,
}

impl MeasurementOperator {
    pub fn new(num_antennas: usize, symbols: Vec<Complex64>) -> Self {
        Self { num_antennas, symbols }
    }

    pub fn num_antennas(&self) -> usize {
        self.num_antennas
    }

    pub fn num_subcarriers(&self) -> usize {
        self.symbols.len()
    }

    pub fn symbols(&self) -> &[Complex64] {
        &self.symbols
    }

    /// Complex dimension `N M`.
    pub fn dim(&self) -> usize {
        self.num_antennas * self.symbols.len()
    }

    /// `Some(P)` when every `|s[m]|^2` equals `P`.
    pub fn constant_modulus(&self) -> Option<f64> {
        let p = self.symbols.first()?.norm_sqr();
        self.symbols
            .iter()
            .all(|s| (s.norm_sqr() - p).abs() <= 1e-12 * p.max(f64::MIN_POSITIVE))
            .then_some(p)
    }

    fn check_len(&self, len: usize, per_entry: usize) -> Result<()> {
        if len != per_entry * self.dim() {
            return Err(shape(format!("{}", per_entry * self.dim()), format!("{len}")));
        }
        Ok(())
    }

    pub fn apply(&self, h: &[Complex64]) -> Result<Vec<Complex64>> {
        self.check_len(h.len(), 1)?;
        let n = self.num_antennas;
        Ok(h.iter().enumerate().map(|(k, v)| v * self.symbols[k / n]).collect())
    }

    pub fn apply_adjoint(&self, y: &[Complex64]) -> Result<Vec<Complex64>> {
        self.check_len(y.len(), 1)?;
        let n = self.num_antennas;
        Ok(y.iter().enumerate().map(|(k, v)| v * self.symbols[k / n].conj()).collect())
    }

    fn gram_divisors(&self, alpha: f64, sigma2: f64) -> Result<Vec<f64>> {
        self.symbols
            .iter()
            .enumerate()
            .map(|(m, s)| {
                let d = alpha * s.norm_sqr() + sigma2;
                if d > 0.0 && d.is_finite() {
                    Ok(d)
                } else {
                    Err(Error::Singular(format!("Gram matrix singular at subcarrier {m}")))
                }
            })
            .collect()
    }

    /// Solves `(alpha B B^H + sigma2 I) x = v`. Constant-modulus pilots reduce
    /// this to one scalar division; other diagonal pilots to one per subcarrier.
    pub fn solve_gram(&self, alpha: f64, sigma2: f64, v: &[Complex64]) -> Result<Vec<Complex64>> {
        self.check_len(v.len(), 1)?;
        let n = self.num_antennas;
        if let Some(p) = self.constant_modulus() {
            let d = self.gram_divisors(alpha, sigma2)?;
            debug_assert!(d.iter().all(|&x| (x - (alpha * p + sigma2)).abs() <= 1e-12 * x));
            let inv = 1.0 / d[0];
            return Ok(v.iter().map(|x| x * inv).collect());
        }
        let d = self.gram_divisors(alpha, sigma2)?;
        Ok(v.iter().enumerate().map(|(k, x)| x / d[k / n]).collect())
    }

    /// Explicit `N M x N M` matrix, row-major.
    pub fn dense(&self) -> Vec<Complex64> {
        let dim = self.dim();
        let mut b = vec![Complex64::new(0.0, 0.0); dim * dim];
        for k in 0..dim {
            b[k * dim + k] = self.symbols[k / self.num_antennas];
        }
        b
    }

    /// Reference solve of `(alpha B B^H + sigma2 I) x = v` through the
    /// explicit matrix and a Cholesky factorization.
    pub fn solve_gram_dense(&self, alpha: f64, sigma2: f64, v: &[Complex64]) -> Result<Vec<Complex64>> {
        self.check_len(v.len(), 1)?;
        let dim = self.dim();
        let b = self.dense();
        let mut a = vec![Complex64::new(0.0, 0.0); dim * dim];
        for i in 0..dim {
            for j in 0..dim {
                let mut s = Complex64::new(0.0, 0.0);
                for k in 0..dim {
                    s += b[i * dim + k] * b[j * dim + k].conj();
                }
                a[i * dim + j] = s * alpha;
            }
            a[i * dim + i] += sigma2;
        }
        let chol = Cholesky::factor(&a, dim).map_err(|_| Error::Singular("dense Gram matrix".into()))?;
        Ok(chol.solve(v))
    }

    /// `B` acting on the plane representation.
    pub fn apply_real(&self, planes: &[f64]) -> Result<Vec<f64>> {
        self.real_map(planes, false)
    }

    /// `B^T` acting on the plane representation.
    pub fn apply_real_transpose(&self, planes: &[f64]) -> Result<Vec<f64>> {
        self.real_map(planes, true)
    }

    fn real_map(&self, planes: &[f64], transpose: bool) -> Result<Vec<f64>> {
        self.check_len(planes.len(), 2)?;
        let nm = self.dim();
        let m_total = self.symbols.len();
        let mut out = vec![0.0; 2 * nm];
        for k in 0..nm {
            let s = self.symbols[k % m_total];
            let s = if transpose { s.conj() } else { s };
            let (a, b) = (planes[k], planes[nm + k]);
            out[k] = s.re * a - s.im * b;
            out[nm + k] = s.im * a + s.re * b;
        }
        Ok(out)
    }

    /// Explicit real `2NM x 2NM` matrix in plane layout, row-major.
    pub fn dense_real(&self) -> Vec<f64> {
        let nm = self.dim();
        let dim = 2 * nm;
        let m_total = self.symbols.len();
        let mut b = vec![0.0; dim * dim];
        for k in 0..nm {
            let s = self.symbols[k % m_total];
            b[k * dim + k] = s.re;
            b[k * dim + nm + k] = -s.im;
            b[(nm + k) * dim + k] = s.im;
            b[(nm + k) * dim + nm + k] = s.re;
        }
        b
    }

    /// Solves `(alpha B B^T + sigma2 I) x = v` in the plane representation.
    pub fn solve_gram_real(&self, alpha: f64, sigma2: f64, v: &[f64]) -> Result<Vec<f64>> {
        self.check_len(v.len(), 2)?;
        let m_total = self.symbols.len();
        let d = self.gram_divisors(alpha, sigma2)?;
        if self.constant_modulus().is_some() {
            let inv = 1.0 / d[0];
            return Ok(v.iter().map(|x| x * inv).collect());
        }
        let nm = self.dim();
        Ok(v.iter().enumerate().map(|(k, x)| x / d[(k % nm) % m_total]).collect())
    }

    pub fn solve_gram_real_dense(&self, alpha: f64, sigma2: f64, v: &[f64]) -> Result<Vec<f64>> {
        self.check_len(v.len(), 2)?;
        let dim = 2 * self.dim();
        let b = self.dense_real();
        let mut a = vec![0.0; dim * dim];
        for i in 0..dim {
            for j in 0..dim {
                let s: f64 = (0..dim).map(|k| b[i * dim + k] * b[j * dim + k]).sum();
                a[i * dim + j] = alpha * s;
            }
            a[i * dim + i] += sigma2;
        }
        let chol = Cholesky::factor(&a, dim).map_err(|_| Error::Singular("dense Gram matrix".into()))?;
        Ok(chol.solve(v))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::channel::{generate_channel, SystemConfig};
    use crate::linalg::matvec;
    use core::f64::consts::TAU;
    use rand::Rng;

    fn random_unimodular_pilots(m: usize, power: f64, seed: u64) -> Vec<Complex64> {
        let mut r = rng::stream(seed, &[]);
        (0..m).map(|_| Complex64::from_polar(power.sqrt(), TAU * r.random::<f64>())).collect()
    }

    #[test]
    fn snr_conversion() {
        assert_eq!(snr_to_noise_power(0.0, 1.0).unwrap(), 1.0);
        assert!((snr_to_noise_power(10.0, 1.0).unwrap() - 0.1).abs() < 1e-15);
        assert!((snr_to_noise_power(-3.0103, 1.0).unwrap() - 2.0).abs() < 1e-4);
        assert!(snr_to_noise_power(0.0, 0.0).is_err());
    }

    #[test]
    fn noiseless_observation_scales_channel() {
        let cfg = SystemConfig::new(8, 4, 60e9, 2e9);
        let h = generate_channel(&cfg, 1, 0, false).unwrap();
        let pc = PilotConfig::constant(4, 2.0, 0.0).unwrap();
        let y = observe(&h, &pc, 9).unwrap();
        for (a, b) in y.as_vec().iter().zip(h.as_vec()) {
            assert_eq!(*a, b * 2f64.sqrt());
        }
    }

    #[test]
    fn noise_only_observation_has_requested_variance() {
        let h = ChannelMatrix::zeros(10, 10);
        let pc = PilotConfig::constant(10, 1.0, 0.3).unwrap();
        let mut r = rng::stream(4, &[]);
        let mut acc = 0.0;
        let draws = 1000;
        for _ in 0..draws {
            acc += observe_with(&h, &pc, &mut r).unwrap().energy();
        }
        let var = acc / (draws * 100) as f64;
        assert!((var - 0.3).abs() < 0.02 * 0.3, "{var}");
    }

    #[test]
    fn observation_is_seeded() {
        let cfg = SystemConfig::new(8, 4, 60e9, 2e9);
        let h = generate_channel(&cfg, 1, 0, false).unwrap();
        let pc = PilotConfig::constant(4, 1.0, 0.5).unwrap();
        assert_eq!(observe(&h, &pc, 3).unwrap(), observe(&h, &pc, 3).unwrap());
        assert_ne!(observe(&h, &pc, 3).unwrap(), observe(&h, &pc, 4).unwrap());
    }

    #[test]
    fn constant_pilots_scale_and_scalar_gram() {
        let op = MeasurementOperator::new(3, vec![Complex64::new(2.0, 0.0); 2]);
        let h: Vec<_> = (0..6).map(|k| Complex64::new(k as f64, -1.0)).collect();
        let bh = op.apply(&h).unwrap();
        for (a, b) in bh.iter().zip(&h) {
            assert_eq!(*a, b * 2.0);
        }
        let x = op.solve_gram(0.5, 0.25, &h).unwrap();
        for (a, b) in x.iter().zip(&h) {
            assert!((a - b / (0.5 * 4.0 + 0.25)).norm() < 1e-15);
        }
    }

    #[test]
    fn fast_paths_match_dense_construction() {
        let (n, m) = (8, 4);
        let op = MeasurementOperator::new(n, random_unimodular_pilots(m, 1.7, 2));
        let mut r = rng::stream(5, &[]);
        let v: Vec<_> = (0..n * m).map(|_| complex_gaussian(&mut r, 1.0)).collect();
        let dense = op.dense();
        let bh = matvec(&dense, n * m, n * m, &v);
        for (a, b) in bh.iter().zip(op.apply(&v).unwrap()) {
            assert!((a - b).norm() < 1e-12);
        }
        let fast = op.solve_gram(0.7, 0.3, &v).unwrap();
        let slow = op.solve_gram_dense(0.7, 0.3, &v).unwrap();
        for (a, b) in fast.iter().zip(&slow) {
            assert!((a - b).norm() < 1e-10);
        }
        let vr = complex_to_planes(&v, n, m);
        let fast = op.solve_gram_real(0.7, 0.3, &vr).unwrap();
        let slow = op.solve_gram_real_dense(0.7, 0.3, &vr).unwrap();
        for (a, b) in fast.iter().zip(&slow) {
            assert!((a - b).abs() < 1e-10);
        }
    }

    #[test]
    fn non_constant_diagonal_pilots_use_per_subcarrier_divisor() {
        let op = MeasurementOperator::new(2, vec![Complex64::new(1.0, 0.0), Complex64::new(0.0, 3.0)]);
        assert!(op.constant_modulus().is_none());
        let v = vec![Complex64::new(1.0, 1.0); 4];
        let fast = op.solve_gram(1.0, 0.5, &v).unwrap();
        let slow = op.solve_gram_dense(1.0, 0.5, &v).unwrap();
        for (a, b) in fast.iter().zip(&slow) {
            assert!((a - b).norm() < 1e-12);
        }
    }

    #[test]
    fn real_block_form_matches_complex() {
        let (n, m) = (5, 3);
        let op = MeasurementOperator::new(n, random_unimodular_pilots(m, 1.0, 8));
        let mut r = rng::stream(6, &[]);
        let v: Vec<_> = (0..n * m).map(|_| complex_gaussian(&mut r, 1.0)).collect();
        let planes = complex_to_planes(&v, n, m);
        let via_real = planes_to_complex(&op.apply_real(&planes).unwrap(), n, m);
        for (a, b) in via_real.iter().zip(op.apply(&v).unwrap()) {
            assert!((a - b).norm() < 1e-14);
        }
        let via_real_t = planes_to_complex(&op.apply_real_transpose(&planes).unwrap(), n, m);
        for (a, b) in via_real_t.iter().zip(op.apply_adjoint(&v).unwrap()) {
            assert!((a - b).norm() < 1e-14);
        }
        let dense = op.dense_real();
        let d = 2 * n * m;
        for (a, b) in matvec(&dense, d, d, &planes).iter().zip(op.apply_real(&planes).unwrap()) {
            assert!((a - b).abs() < 1e-14);
        }
    }

    #[test]
    fn zero_pilot_gram_is_singular() {
        let op = MeasurementOperator::new(2, vec![Complex64::new(1.0, 0.0), Complex64::new(0.0, 0.0)]);
        let v = vec![Complex64::new(1.0, 0.0); 4];
        assert!(matches!(op.solve_gram(1.0, 0.0, &v), Err(Error::Singular(_))));
    }
}
