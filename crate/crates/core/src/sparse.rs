//! Polar-domain dictionaries and greedy sparse estimators (OMP per
//! subcarrier, SOMP with a support shared across subcarriers).
//!
//! Angles are sampled uniformly in `theta = sin(phi)`. For each angle the
//! dictionary holds a far-field (plane-wave) atom followed by distance rings
//! `r_s = N^2 d^2 (1 - theta^2) / (2 beta^2 lambda_c s)`, `s = 1..num_rings`; rings
//! closer than the Fresnel-model minimum distance are skipped.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use num_complex::Complex64;

use crate::channel::{steering_vector_at, ChannelMatrix, Range, SystemConfig};
use crate::error::{invalid, shape};
use crate::linalg::Cholesky;
use crate::Result;

/// Stop once the residual falls below this fraction of the observation norm.
pub const RESIDUAL_TOLERANCE: f64 = 1e-6;
/// A new atom whose component orthogonal to the current support is shorter
/// than this is treated as linearly dependent.
const RANK_TOLERANCE: f64 = 1e-10;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GridPoint {
    pub theta: f64,
    pub range: Range,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PolarGridSpec {
    pub num_angles: usize,
    pub num_rings: usize,
    pub beta: f64,
}

impl Default for PolarGridSpec {
    fn default() -> Self {
        Self { num_angles: 64, num_rings: 3, beta: 1.2 }
    }
}

/// `N x Q` matrix of unit-norm steering atoms built at one frequency.
#[derive(Debug, Clone, PartialEq)]
pub struct PolarDictionary {
    pub num_antennas: usize,
    pub frequency: f64,
    pub spec: PolarGridSpec,
    pub grid: Vec<GridPoint>,
    atoms: Vec<Complex64>,
}

impl PolarDictionary {
    pub fn len(&self) -> usize {
        self.grid.len()
    }

    pub fn is_empty(&self) -> bool {
        self.grid.is_empty()
    }

    pub fn atom(&self, q: usize) -> &[Complex64] {
        &self.atoms[q * self.num_antennas..(q + 1) * self.num_antennas]
    }

    /// Atoms stacked column after column.
    pub fn atoms(&self) -> &[Complex64] {
        &self.atoms
    }

    pub fn from_atoms(num_antennas: usize, frequency: f64, spec: PolarGridSpec, grid: Vec<GridPoint>, atoms: Vec<Complex64>) -> Result<Self> {
        if atoms.len() != grid.len() * num_antennas {
            return Err(shape(format!("{} atom entries", grid.len() * num_antennas), format!("{}", atoms.len())));
        }
        Ok(Self { num_antennas, frequency, spec, grid, atoms })
    }

    /// Largest `|a_i^H a_j|` over distinct atoms.
    pub fn coherence(&self) -> f64 {
        let mut worst = 0.0f64;
        for i in 0..self.len() {
            for j in i + 1..self.len() {
                worst = worst.max(inner(self.atom(i), self.atom(j)).norm());
            }
        }
        worst
    }
}

/// Grid of `(theta, range)` pairs in dictionary order.
pub fn polar_grid(cfg: &SystemConfig, spec: &PolarGridSpec) -> Result<Vec<GridPoint>> {
    if spec.num_angles == 0 {
        return Err(invalid("num_angles must be >= 1"));
    }
    if !(spec.beta > 0.0) {
        return Err(invalid("beta must be positive"));
    }
    let n = cfg.num_antennas as f64;
    let d = cfg.antenna_spacing;
    let lambda = cfg.carrier_wavelength();
    let mut grid = Vec::with_capacity(spec.num_angles * (spec.num_rings + 1));
    for q in 0..spec.num_angles {
        let theta = -1.0 + (2 * q + 1) as f64 / spec.num_angles as f64;
        grid.push(GridPoint { theta, range: Range::FarField });
        for s in 1..=spec.num_rings {
            let r = n * n * d * d * (1.0 - theta * theta) / (2.0 * spec.beta * spec.beta * lambda * s as f64);
            if r >= cfg.min_distance() {
                grid.push(GridPoint { theta, range: Range::Finite(r) });
            }
        }
    }
    Ok(grid)
}

pub fn build_polar_dictionary(cfg: &SystemConfig, frequency: f64, spec: &PolarGridSpec) -> Result<PolarDictionary> {
    cfg.validate()?;
    let grid = polar_grid(cfg, spec)?;
    let mut atoms = Vec::with_capacity(grid.len() * cfg.num_antennas);
    for g in &grid {
        let mut a = steering_vector_at(g.theta, g.range, frequency, cfg)?;
        let norm = libm::sqrt(a.iter().map(Complex64::norm_sqr).sum::<f64>());
        a.iter_mut().for_each(|z| *z /= norm);
        atoms.extend(a);
    }
    Ok(PolarDictionary { num_antennas: cfg.num_antennas, frequency, spec: *spec, grid, atoms })
}

/// One dictionary per subcarrier, built at `f_m` or, with
/// `frequency_dependent = false`, all at the carrier frequency.
pub fn build_dictionary_set(cfg: &SystemConfig, spec: &PolarGridSpec, frequency_dependent: bool) -> Result<Vec<PolarDictionary>> {
    if frequency_dependent {
        cfg.subcarrier_frequencies().iter().map(|&f| build_polar_dictionary(cfg, f, spec)).collect()
    } else {
        let d = build_polar_dictionary(cfg, cfg.carrier_freq, spec)?;
        Ok(vec![d; cfg.num_subcarriers])
    }
}

/// `a^H b`.
#[inline]
fn inner(a: &[Complex64], b: &[Complex64]) -> Complex64 {
    a.iter().zip(b).fold(Complex64::new(0.0, 0.0), |acc, (x, y)| acc + x.conj() * y)
}

fn norm(v: &[Complex64]) -> f64 {
    libm::sqrt(v.iter().map(Complex64::norm_sqr).sum())
}

/// Incremental QR least-squares fit of one measurement vector on a growing
/// set of atoms (classical Gram-Schmidt with one reorthogonalization pass).
#[derive(Debug, Clone)]
struct GreedyFit {
    y: Vec<Complex64>,
    basis: Vec<Vec<Complex64>>,
    /// Column `k` holds the first `k + 1` entries of the triangular factor.
    r_cols: Vec<Vec<Complex64>>,
    /// `Q^H y`.
    proj: Vec<Complex64>,
    residual: Vec<Complex64>,
}

impl GreedyFit {
    fn new(y: &[Complex64]) -> Self {
        Self { y: y.to_vec(), basis: Vec::new(), r_cols: Vec::new(), proj: Vec::new(), residual: y.to_vec() }
    }

    fn residual_norm(&self) -> f64 {
        norm(&self.residual)
    }

    /// Adds `atom`; returns false if it is numerically dependent on the basis.
    fn push(&mut self, atom: &[Complex64]) -> bool {
        let mut w = atom.to_vec();
        let mut coeffs = vec![Complex64::new(0.0, 0.0); self.basis.len()];
        for _ in 0..2 {
            for (c, q) in coeffs.iter_mut().zip(&self.basis) {
                let p = inner(q, &w);
                *c += p;
                w.iter_mut().zip(q).for_each(|(wi, qi)| *wi -= qi * p);
            }
        }
        let len = norm(&w);
        if len < RANK_TOLERANCE * norm(atom).max(f64::MIN_POSITIVE) {
            return false;
        }
        w.iter_mut().for_each(|z| *z /= len);
        let z = inner(&w, &self.y);
        let rz = inner(&w, &self.residual);
        self.residual.iter_mut().zip(&w).for_each(|(r, q)| *r -= q * rz);
        coeffs.push(Complex64::new(len, 0.0));
        self.r_cols.push(coeffs);
        self.proj.push(z);
        self.basis.push(w);
        true
    }

    /// Coefficients `x` with `A_S x = Q Q^H y`.
    fn coefficients(&self) -> Vec<Complex64> {
        let k = self.basis.len();
        let mut x = self.proj.clone();
        for i in (0..k).rev() {
            let mut s = x[i];
            for j in i + 1..k {
                s -= self.r_cols[j][i] * x[j];
            }
            x[i] = s / self.r_cols[i][i];
        }
        x
    }
}

/// Exact-recovery constant `max_{q not in S} ||A_S^+ a_q||_1`. Below one,
/// greedy pursuit recovers every signal supported on `support`.
pub fn exact_recovery_constant(dict: &PolarDictionary, support: &[usize]) -> Result<f64> {
    let k = support.len();
    if k == 0 {
        return Ok(0.0);
    }
    if support.iter().any(|&q| q >= dict.len()) {
        return Err(invalid("support index outside the dictionary"));
    }
    let mut gram = vec![Complex64::new(0.0, 0.0); k * k];
    for i in 0..k {
        for j in 0..k {
            gram[i * k + j] = inner(dict.atom(support[i]), dict.atom(support[j]));
        }
    }
    let chol = Cholesky::factor(&gram, k).map_err(|_| invalid("support atoms are linearly dependent"))?;
    let mut worst = 0.0f64;
    for q in (0..dict.len()).filter(|q| !support.contains(q)) {
        let rhs: Vec<Complex64> = support.iter().map(|&s| inner(dict.atom(s), dict.atom(q))).collect();
        let x = chol.solve(&rhs);
        worst = worst.max(x.iter().map(|z| z.norm()).sum());
    }
    Ok(worst)
}

#[derive(Debug, Clone, PartialEq)]
pub struct SparseSupport {
    /// Selected atom indices in selection order.
    pub indices: Vec<usize>,
    /// `coefficients[m][k]` multiplies atom `indices[k]` on subcarrier `m`.
    pub coefficients: Vec<Vec<Complex64>>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct OmpResult {
    /// Channel column estimate `D_S x / s[m]`.
    pub estimate: Vec<Complex64>,
    pub support: Vec<usize>,
    pub coefficients: Vec<Complex64>,
    /// Residual norm before the first and after every selection.
    pub residual_norms: Vec<f64>,
}

/// Orthogonal matching pursuit on one subcarrier with pilot `symbol`.
pub fn omp_estimate(y: &[Complex64], dict: &PolarDictionary, symbol: Complex64, sparsity: usize) -> Result<OmpResult> {
    if y.len() != dict.num_antennas {
        return Err(shape(format!("{}", dict.num_antennas), format!("{}", y.len())));
    }
    if sparsity > dict.len() {
        return Err(invalid(format!("sparsity {sparsity} exceeds dictionary size {}", dict.len())));
    }
    if symbol.norm_sqr() == 0.0 {
        return Err(invalid("pilot symbol is zero"));
    }
    let y_norm = norm(y);
    let mut fit = GreedyFit::new(y);
    let mut support = Vec::new();
    let mut residual_norms = vec![y_norm];
    while support.len() < sparsity && fit.residual_norm() > RESIDUAL_TOLERANCE * y_norm {
        let mut best = None;
        let mut best_val = -1.0;
        for q in 0..dict.len() {
            if support.contains(&q) {
                continue;
            }
            let v = inner(dict.atom(q), &fit.residual).norm_sqr();
            if v > best_val {
                best_val = v;
                best = Some(q);
            }
        }
        let Some(q) = best else { break };
        if !fit.push(dict.atom(q)) {
            break;
        }
        support.push(q);
        residual_norms.push(fit.residual_norm());
    }
    let coefficients = fit.coefficients();
    let mut estimate = vec![Complex64::new(0.0, 0.0); dict.num_antennas];
    for (&q, c) in support.iter().zip(&coefficients) {
        let c = c / symbol;
        estimate.iter_mut().zip(dict.atom(q)).for_each(|(e, a)| *e += a * c);
    }
    Ok(OmpResult { estimate, support, coefficients, residual_norms })
}

#[derive(Debug, Clone, PartialEq)]
pub struct MultiCarrierResult {
    pub estimate: ChannelMatrix,
    /// Shared support for SOMP; the support of subcarrier 0 for per-subcarrier OMP.
    pub support: SparseSupport,
    /// Final residual norm per subcarrier.
    pub residuals: Vec<f64>,
    /// Frobenius residual before the first and after every joint selection
    /// (SOMP only).
    pub residual_norms: Vec<f64>,
}

fn check_multi(y: &ChannelMatrix, dicts: &[PolarDictionary], symbols: &[Complex64]) -> Result<()> {
    let m = y.num_subcarriers();
    if dicts.len() != m || symbols.len() != m {
        return Err(shape(format!("{m} dictionaries and pilots"), format!("{} and {}", dicts.len(), symbols.len())));
    }
    let q = dicts[0].len();
    if dicts.iter().any(|d| d.len() != q || d.num_antennas != y.num_antennas()) {
        return Err(invalid("dictionaries must share the grid and array size"));
    }
    Ok(())
}

/// OMP run independently on every subcarrier.
pub fn pomp_estimate(y: &ChannelMatrix, dicts: &[PolarDictionary], symbols: &[Complex64], sparsity: usize) -> Result<MultiCarrierResult> {
    check_multi(y, dicts, symbols)?;
    let mut estimate = ChannelMatrix::zeros(y.num_antennas(), y.num_subcarriers());
    let mut residuals = Vec::with_capacity(y.num_subcarriers());
    let mut support = SparseSupport { indices: Vec::new(), coefficients: Vec::new() };
    for m in 0..y.num_subcarriers() {
        let r = omp_estimate(y.column(m), &dicts[m], symbols[m], sparsity)?;
        estimate.column_mut(m).copy_from_slice(&r.estimate);
        residuals.push(*r.residual_norms.last().unwrap());
        if m == 0 {
            support.indices = r.support.clone();
        }
        support.coefficients.push(r.coefficients);
    }
    Ok(MultiCarrierResult { estimate, support, residuals, residual_norms: Vec::new() })
}

/// Simultaneous OMP: one support shared by all subcarriers, selected by the
/// summed squared correlation `sum_m |a_{m,q}^H r_m|^2`, with a least-squares
/// refit per subcarrier.
pub fn somp_estimate(y: &ChannelMatrix, dicts: &[PolarDictionary], symbols: &[Complex64], sparsity: usize) -> Result<MultiCarrierResult> {
    check_multi(y, dicts, symbols)?;
    let q_total = dicts[0].len();
    if sparsity > q_total {
        return Err(invalid(format!("sparsity {sparsity} exceeds dictionary size {q_total}")));
    }
    if symbols.iter().any(|s| s.norm_sqr() == 0.0) {
        return Err(invalid("pilot symbol is zero"));
    }
    let m_total = y.num_subcarriers();
    let mut fits: Vec<GreedyFit> = (0..m_total).map(|m| GreedyFit::new(y.column(m))).collect();
    let frob = |fits: &[GreedyFit]| libm::sqrt(fits.iter().map(|f| { let r = f.residual_norm(); r * r }).sum::<f64>());
    let y_norm = libm::sqrt(y.energy());
    let mut support = Vec::new();
    let mut residual_norms = vec![y_norm];
    'outer: while support.len() < sparsity && frob(&fits) > RESIDUAL_TOLERANCE * y_norm {
        let mut best = None;
        let mut best_val = -1.0;
        for q in 0..q_total {
            if support.contains(&q) {
                continue;
            }
            let v: f64 = fits.iter().zip(dicts).map(|(f, d)| inner(d.atom(q), &f.residual).norm_sqr()).sum();
            if v > best_val {
                best_val = v;
                best = Some(q);
            }
        }
        let Some(q) = best else { break };
        let mut trial = fits.clone();
        for (f, d) in trial.iter_mut().zip(dicts) {
            if !f.push(d.atom(q)) {
                break 'outer;
            }
        }
        fits = trial;
        support.push(q);
        residual_norms.push(frob(&fits));
    }
    let mut estimate = ChannelMatrix::zeros(y.num_antennas(), m_total);
    let mut coefficients = Vec::with_capacity(m_total);
    for m in 0..m_total {
        let x = fits[m].coefficients();
        let col = estimate.column_mut(m);
        for (&q, c) in support.iter().zip(&x) {
            let c = c / symbols[m];
            col.iter_mut().zip(dicts[m].atom(q)).for_each(|(e, a)| *e += a * c);
        }
        coefficients.push(x);
    }
    let residuals = fits.iter().map(GreedyFit::residual_norm).collect();
    Ok(MultiCarrierResult {
        estimate,
        support: SparseSupport { indices: support, coefficients },
        residuals,
        residual_norms,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::channel::steering_vector;
    use crate::rng::{self, complex_gaussian};
    use rand::Rng;

    fn cfg(n: usize, m: usize) -> SystemConfig {
        SystemConfig::new(n, m, 60e9, 6e9)
    }

    #[test]
    fn far_field_only_dictionary() {
        let c = cfg(16, 1);
        let spec = PolarGridSpec { num_angles: 32, num_rings: 0, beta: 1.2 };
        let d = build_polar_dictionary(&c, 60e9, &spec).unwrap();
        assert_eq!(d.len(), 32);
        for q in 0..d.len() {
            assert!((norm(d.atom(q)) - 1.0).abs() < 1e-12);
            assert_eq!(d.grid[q].range, Range::FarField);
        }
        assert!((d.grid[0].theta + 1.0 - 1.0 / 32.0).abs() < 1e-15);
    }

    #[test]
    fn atom_matches_steering_vector() {
        let c = cfg(32, 1);
        let d = build_polar_dictionary(&c, 61e9, &PolarGridSpec { num_angles: 16, num_rings: 2, beta: 1.2 }).unwrap();
        for (q, g) in d.grid.iter().enumerate() {
            if let Range::Finite(r) = g.range {
                let a = steering_vector(g.theta, r, 61e9, &c).unwrap();
                assert!((inner(&a, d.atom(q)).norm() - 1.0).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn far_ring_coherence_below_one() {
        let c = cfg(64, 1);
        let spec = PolarGridSpec { num_angles: 128, num_rings: 0, beta: 1.2 };
        let coh = build_polar_dictionary(&c, 60e9, &spec).unwrap().coherence();
        assert!(coh.is_finite() && coh < 1.0, "{coh}");
    }

    #[test]
    fn omp_recovers_two_atoms() {
        let c = cfg(32, 1);
        let d = build_polar_dictionary(&c, 60e9, &PolarGridSpec::default()).unwrap();
        let s = Complex64::new(0.6, 0.8);
        let (i, j) = (17, 140);
        let mut y = vec![Complex64::new(0.0, 0.0); 32];
        for k in 0..32 {
            y[k] = s * (d.atom(i)[k] + d.atom(j)[k] * 0.5);
        }
        let r = omp_estimate(&y, &d, s, 2).unwrap();
        let mut sup = r.support.clone();
        sup.sort();
        assert_eq!(sup, vec![i, j]);
        assert!(*r.residual_norms.last().unwrap() < 1e-8 * norm(&y));
        for k in 0..32 {
            assert!((r.estimate[k] - (d.atom(i)[k] + d.atom(j)[k] * 0.5)).norm() < 1e-10);
        }
    }

    #[test]
    fn omp_trivial_inputs() {
        let c = cfg(8, 1);
        let d = build_polar_dictionary(&c, 60e9, &PolarGridSpec { num_angles: 8, num_rings: 1, beta: 1.2 }).unwrap();
        let zero = vec![Complex64::new(0.0, 0.0); 8];
        let r = omp_estimate(&zero, &d, Complex64::new(1.0, 0.0), 3).unwrap();
        assert!(r.support.is_empty() && r.estimate.iter().all(|z| z.norm() == 0.0));
        let y: Vec<_> = (0..8).map(|k| Complex64::new(k as f64, 1.0)).collect();
        let r = omp_estimate(&y, &d, Complex64::new(1.0, 0.0), 0).unwrap();
        assert!(r.support.is_empty() && r.estimate.iter().all(|z| z.norm() == 0.0));
        assert!(omp_estimate(&y, &d, Complex64::new(1.0, 0.0), d.len() + 1).is_err());
    }

    #[test]
    fn omp_residuals_non_increasing_and_indices_unique() {
        let c = cfg(16, 1);
        let d = build_polar_dictionary(&c, 60e9, &PolarGridSpec { num_angles: 32, num_rings: 2, beta: 1.2 }).unwrap();
        let mut rng = rng::stream(1, &[]);
        for _ in 0..20 {
            let y: Vec<_> = (0..16).map(|_| complex_gaussian(&mut rng, 1.0)).collect();
            let r = omp_estimate(&y, &d, Complex64::new(1.0, 0.0), 10).unwrap();
            assert!(r.residual_norms.windows(2).all(|w| w[1] <= w[0] * (1.0 + 1e-12)));
            let mut s = r.support.clone();
            s.sort();
            s.dedup();
            assert_eq!(s.len(), r.support.len());
        }
    }

    #[test]
    fn recovery_constant_of_orthogonal_atoms_is_zero() {
        // A far-field grid with N angles at spacing 2/N is an orthonormal DFT basis.
        let c = cfg(8, 1);
        let d = build_polar_dictionary(&c, 60e9, &PolarGridSpec { num_angles: 8, num_rings: 0, beta: 1.2 }).unwrap();
        assert!(d.coherence() < 1e-12);
        assert!(exact_recovery_constant(&d, &[1, 4]).unwrap() < 1e-12);
        assert_eq!(exact_recovery_constant(&d, &[]).unwrap(), 0.0);
    }

    #[test]
    fn somp_reduces_to_omp_for_narrowband() {
        let mut c = cfg(32, 4);
        c.bandwidth = 0.0;
        let dicts = build_dictionary_set(&c, &PolarGridSpec::default(), true).unwrap();
        let target = 77;
        let mut rng = rng::stream(2, &[]);
        let mut y = ChannelMatrix::zeros(32, 4);
        for m in 0..4 {
            let g = complex_gaussian(&mut rng, 1.0);
            for (out, a) in y.column_mut(m).iter_mut().zip(dicts[m].atom(target)) {
                *out = a * g;
            }
        }
        let pilots = vec![Complex64::new(1.0, 0.0); 4];
        let r = somp_estimate(&y, &dicts, &pilots, 1).unwrap();
        assert_eq!(r.support.indices, vec![target]);
        let p = pomp_estimate(&y, &dicts, &pilots, 1).unwrap();
        for m in 0..4 {
            assert!((r.residuals[m] - p.residuals[m]).abs() < 1e-12);
        }
    }

    #[test]
    fn somp_zero_observation() {
        let c = cfg(8, 3);
        let dicts = build_dictionary_set(&c, &PolarGridSpec { num_angles: 8, num_rings: 0, beta: 1.2 }, false).unwrap();
        let y = ChannelMatrix::zeros(8, 3);
        let r = somp_estimate(&y, &dicts, &[Complex64::new(1.0, 0.0); 3], 2).unwrap();
        assert!(r.support.indices.is_empty());
        assert_eq!(r.estimate.energy(), 0.0);
    }

    #[test]
    fn somp_residuals_non_increasing() {
        let c = cfg(16, 4);
        let dicts = build_dictionary_set(&c, &PolarGridSpec { num_angles: 32, num_rings: 1, beta: 1.2 }, true).unwrap();
        let mut rng = rng::stream(4, &[]);
        let mut y = ChannelMatrix::zeros(16, 4);
        for m in 0..4 {
            for z in y.column_mut(m) {
                *z = complex_gaussian(&mut rng, 1.0) * rng.random::<f64>();
            }
        }
        let r = somp_estimate(&y, &dicts, &[Complex64::new(1.0, 0.0); 4], 8).unwrap();
        assert!(r.residual_norms.windows(2).all(|w| w[1] <= w[0] * (1.0 + 1e-12)));
    }
}
