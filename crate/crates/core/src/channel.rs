//! Near-field wideband channel model.
//!
//! A ULA of `N` elements observes `L` paths over `M` OFDM subcarriers. Path
//! `l` has complex gain `alpha_l`, spatial angle `theta_l = sin(phi_l)` and
//! distance `r_l`; its steering vector at frequency `f` uses the Fresnel
//! distance `r^(n) = r + n^2 d^2 xi - n d theta` with `xi = (1 - theta^2) / (2 r)`.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;
use core::f64::consts::{PI, TAU};

use num_complex::Complex64;
use rand::Rng;

use crate::error::{invalid, shape};
use crate::observation::{complex_to_planes, planes_to_complex};
use crate::rng::{self, complex_gaussian};
use crate::{Error, Result};

pub const SPEED_OF_LIGHT: f64 = 3.0e8;

/// Array and OFDM geometry.
#[derive(Debug, Clone, PartialEq)]
pub struct SystemConfig {
    pub num_antennas: usize,
    pub num_subcarriers: usize,
    /// Hz.
    pub carrier_freq: f64,
    /// Hz.
    pub bandwidth: f64,
    /// Meters.
    pub antenna_spacing: f64,
    pub num_paths: usize,
    /// Physical angle range in radians.
    pub angle_range: (f64, f64),
    /// Meters.
    pub distance_range: (f64, f64),
    pub speed_of_light: f64,
}

impl SystemConfig {
    /// Half-wavelength array at `carrier_freq`, four paths, angles in
    /// `[-pi/3, pi/3]` and distances in `[5, 40]` m.
    pub fn new(num_antennas: usize, num_subcarriers: usize, carrier_freq: f64, bandwidth: f64) -> Self {
        Self {
            num_antennas,
            num_subcarriers,
            carrier_freq,
            bandwidth,
            antenna_spacing: SPEED_OF_LIGHT / carrier_freq / 2.0,
            num_paths: 4,
            angle_range: (-PI / 3.0, PI / 3.0),
            distance_range: (5.0, 40.0),
            speed_of_light: SPEED_OF_LIGHT,
        }
    }

    /// Full-size setup: 128 antennas, 64 subcarriers at 60 GHz.
    pub fn full_scale() -> Self {
        Self::new(128, 64, 60e9, 6.4e9)
    }

    /// Laptop-sized default used by the harness.
    pub fn desk_scale() -> Self {
        Self::new(32, 16, 60e9, 6.4e9)
    }

    pub fn carrier_wavelength(&self) -> f64 {
        self.speed_of_light / self.carrier_freq
    }

    /// Smallest distance accepted by the Fresnel-region steering model.
    pub fn min_distance(&self) -> f64 {
        10.0 * self.antenna_spacing
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidConfig(m.into()));
        if self.num_antennas == 0 {
            return bad("num_antennas must be >= 1");
        }
        if self.num_subcarriers == 0 {
            return bad("num_subcarriers must be >= 1");
        }
        if self.num_paths == 0 {
            return bad("num_paths must be >= 1");
        }
        if !(self.carrier_freq > 0.0) || !self.carrier_freq.is_finite() {
            return bad("carrier_freq must be positive");
        }
        if !(self.bandwidth >= 0.0) || self.bandwidth >= 2.0 * self.carrier_freq {
            return bad("bandwidth must satisfy 0 <= B < 2 f_c");
        }
        if !(self.antenna_spacing > 0.0) {
            return bad("antenna_spacing must be positive");
        }
        if !(self.speed_of_light > 0.0) {
            return bad("speed_of_light must be positive");
        }
        let (a0, a1) = self.angle_range;
        if !(a0 <= a1) || a0 < -PI / 2.0 || a1 > PI / 2.0 {
            return bad("angle_range must be ordered within [-pi/2, pi/2]");
        }
        let (r0, r1) = self.distance_range;
        if !(r0 > 0.0) || !(r0 <= r1) || !r1.is_finite() {
            return bad("distance_range must be ordered with positive minimum");
        }
        Ok(())
    }

    pub fn subcarrier_spacing(&self) -> f64 {
        self.bandwidth / self.num_subcarriers as f64
    }

    /// `f_m = f_c + (B/M)(m - 1 - (M-1)/2)` for `m = 1..M`.
    pub fn subcarrier_frequencies(&self) -> Vec<f64> {
        let m_total = self.num_subcarriers as f64;
        let fs = self.subcarrier_spacing();
        (0..self.num_subcarriers)
            .map(|m| self.carrier_freq + fs * (m as f64 - (m_total - 1.0) / 2.0))
            .collect()
    }

    /// `2 D^2 / lambda_c` with aperture `D = (N - 1) d`.
    pub fn rayleigh_distance(&self) -> f64 {
        let aperture = (self.num_antennas as f64 - 1.0) * self.antenna_spacing;
        2.0 * aperture * aperture / self.carrier_wavelength()
    }
}

/// Distance argument of a steering vector.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Range {
    Finite(f64),
    /// Plane-wave limit (`xi = 0`).
    FarField,
}

impl Range {
    /// Curvature term `xi = (1 - theta^2) / (2 r)`.
    pub fn curvature(self, theta: f64) -> f64 {
        match self {
            Range::Finite(r) => (1.0 - theta * theta) / (2.0 * r),
            Range::FarField => 0.0,
        }
    }
}

fn check_angle(theta: f64) -> Result<()> {
    if !(theta.abs() <= 1.0) {
        return Err(invalid(format!("spatial angle {theta} outside [-1, 1]")));
    }
    Ok(())
}

fn check_range(r: Range, cfg: &SystemConfig) -> Result<()> {
    if let Range::Finite(r) = r {
        if !(r > 0.0) {
            return Err(invalid(format!("distance {r} must be positive")));
        }
        if r < cfg.min_distance() {
            return Err(invalid(format!(
                "distance {r} m below Fresnel-model minimum {} m",
                cfg.min_distance()
            )));
        }
    }
    Ok(())
}

/// Normalized near-field steering vector `a(theta, r, f)`.
pub fn steering_vector(theta: f64, r: f64, f: f64, cfg: &SystemConfig) -> Result<Vec<Complex64>> {
    steering_vector_at(theta, Range::Finite(r), f, cfg)
}

pub fn steering_vector_at(theta: f64, range: Range, f: f64, cfg: &SystemConfig) -> Result<Vec<Complex64>> {
    check_angle(theta)?;
    check_range(range, cfg)?;
    if !(f > 0.0) {
        return Err(invalid("frequency must be positive"));
    }
    let xi = range.curvature(theta);
    let k = TAU * f / cfg.speed_of_light;
    let d = cfg.antenna_spacing;
    let amp = 1.0 / libm::sqrt(cfg.num_antennas as f64);
    Ok((0..cfg.num_antennas)
        .map(|n| {
            let nd = n as f64 * d;
            // r - r^(n) = n d theta - n^2 d^2 xi
            let phase = k * (nd * theta - nd * nd * xi);
            Complex64::from_polar(amp, phase)
        })
        .collect())
}

/// Path parameters of one channel realization.
#[derive(Debug, Clone, PartialEq)]
pub struct PathSet {
    pub gains: Vec<Complex64>,
    /// `theta_l = sin(phi_l)`.
    pub spatial_angles: Vec<f64>,
    pub distances: Vec<f64>,
}

impl PathSet {
    pub fn new(gains: Vec<Complex64>, spatial_angles: Vec<f64>, distances: Vec<f64>) -> Result<Self> {
        if gains.len() != spatial_angles.len() || gains.len() != distances.len() {
            return Err(shape(
                format!("{} angles and distances", gains.len()),
                format!("{} angles, {} distances", spatial_angles.len(), distances.len()),
            ));
        }
        if let Some(t) = spatial_angles.iter().find(|t| !(t.abs() <= 1.0)) {
            return Err(invalid(format!("spatial angle {t} outside [-1, 1]")));
        }
        if let Some(r) = distances.iter().find(|r| !(**r > 0.0)) {
            return Err(invalid(format!("distance {r} must be positive")));
        }
        Ok(Self { gains, spatial_angles, distances })
    }

    pub fn len(&self) -> usize {
        self.gains.len()
    }

    pub fn is_empty(&self) -> bool {
        self.gains.is_empty()
    }

    pub fn curvatures(&self) -> Vec<f64> {
        self.spatial_angles
            .iter()
            .zip(&self.distances)
            .map(|(&t, &r)| (1.0 - t * t) / (2.0 * r))
            .collect()
    }
}

/// Complex `N x M` channel, stored column-major so the storage is `vec(H)`.
#[derive(Debug, Clone, PartialEq)]
pub struct ChannelMatrix {
    num_antennas: usize,
    num_subcarriers: usize,
    entries: Vec<Complex64>,
    pub paths: Option<PathSet>,
}

impl ChannelMatrix {
    pub fn zeros(num_antennas: usize, num_subcarriers: usize) -> Self {
        Self {
            num_antennas,
            num_subcarriers,
            entries: vec![Complex64::new(0.0, 0.0); num_antennas * num_subcarriers],
            paths: None,
        }
    }

    /// Builds from `vec(H)` (columns stacked).
    pub fn from_vec(num_antennas: usize, num_subcarriers: usize, entries: Vec<Complex64>) -> Result<Self> {
        if entries.len() != num_antennas * num_subcarriers {
            return Err(shape(
                format!("{} entries", num_antennas * num_subcarriers),
                format!("{}", entries.len()),
            ));
        }
        if entries.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
            return Err(invalid("channel entries must be finite"));
        }
        Ok(Self { num_antennas, num_subcarriers, entries, paths: None })
    }

    pub fn num_antennas(&self) -> usize {
        self.num_antennas
    }

    pub fn num_subcarriers(&self) -> usize {
        self.num_subcarriers
    }

    #[inline]
    pub fn get(&self, n: usize, m: usize) -> Complex64 {
        self.entries[n + self.num_antennas * m]
    }

    #[inline]
    pub fn set(&mut self, n: usize, m: usize, v: Complex64) {
        self.entries[n + self.num_antennas * m] = v;
    }

    /// `h[m]`.
    pub fn column(&self, m: usize) -> &[Complex64] {
        &self.entries[m * self.num_antennas..(m + 1) * self.num_antennas]
    }

    pub fn column_mut(&mut self, m: usize) -> &mut [Complex64] {
        let n = self.num_antennas;
        &mut self.entries[m * n..(m + 1) * n]
    }

    /// `vec(H)`.
    pub fn as_vec(&self) -> &[Complex64] {
        &self.entries
    }

    pub fn into_vec(self) -> Vec<Complex64> {
        self.entries
    }

    pub fn energy(&self) -> f64 {
        self.entries.iter().map(Complex64::norm_sqr).sum()
    }

    /// Rescales so that `||H||_F^2 = N M` (unit mean per-entry power).
    pub fn normalize_power(&mut self) -> Result<()> {
        let e = self.energy();
        if !(e > 0.0) {
            return Err(Error::ZeroChannel);
        }
        let g = libm::sqrt(self.entries.len() as f64 / e);
        self.entries.iter_mut().for_each(|z| *z *= g);
        Ok(())
    }

    pub fn check_shape(&self, cfg: &SystemConfig) -> Result<()> {
        if self.num_antennas != cfg.num_antennas || self.num_subcarriers != cfg.num_subcarriers {
            return Err(shape(
                format!("{}x{}", cfg.num_antennas, cfg.num_subcarriers),
                format!("{}x{}", self.num_antennas, self.num_subcarriers),
            ));
        }
        Ok(())
    }
}

/// `h[m] = sqrt(N/L) sum_l alpha_l exp(-j 2 pi f_m r_l / c) a(theta_l, r_l, f_m)`.
pub fn channel_matrix(paths: &PathSet, cfg: &SystemConfig) -> Result<ChannelMatrix> {
    cfg.validate()?;
    if paths.len() != cfg.num_paths {
        return Err(shape(format!("{} paths", cfg.num_paths), format!("{}", paths.len())));
    }
    let n_ant = cfg.num_antennas;
    let mut h = ChannelMatrix::zeros(n_ant, cfg.num_subcarriers);
    let amp = libm::sqrt(n_ant as f64 / paths.len() as f64);
    for (m, &f) in cfg.subcarrier_frequencies().iter().enumerate() {
        let col = h.column_mut(m);
        for l in 0..paths.len() {
            let r = paths.distances[l];
            let a = steering_vector(paths.spatial_angles[l], r, f, cfg)?;
            let coef = paths.gains[l] * Complex64::from_polar(amp, -TAU * f * r / cfg.speed_of_light);
            col.iter_mut().zip(&a).for_each(|(c, ai)| *c += coef * ai);
        }
    }
    h.paths = Some(paths.clone());
    Ok(h)
}

/// Uniform angles and distances over the configured ranges, unit-variance
/// circularly-symmetric complex Gaussian gains.
pub fn sample_paths_with<R: Rng + ?Sized>(cfg: &SystemConfig, rng: &mut R) -> PathSet {
    let (a0, a1) = cfg.angle_range;
    let (r0, r1) = cfg.distance_range;
    let mut gains = Vec::with_capacity(cfg.num_paths);
    let mut angles = Vec::with_capacity(cfg.num_paths);
    let mut dists = Vec::with_capacity(cfg.num_paths);
    for _ in 0..cfg.num_paths {
        let phi = a0 + (a1 - a0) * rng.random::<f64>();
        angles.push(libm::sin(phi));
        dists.push(r0 + (r1 - r0) * rng.random::<f64>());
        gains.push(complex_gaussian(rng, 1.0));
    }
    PathSet { gains, spatial_angles: angles, distances: dists }
}

pub fn sample_paths(cfg: &SystemConfig, seed: u64) -> Result<PathSet> {
    cfg.validate()?;
    Ok(sample_paths_with(cfg, &mut rng::stream(seed, &[])))
}

/// Realization `index` of the stream rooted at `seed`, optionally normalized to
/// unit per-entry power.
pub fn generate_channel(cfg: &SystemConfig, seed: u64, index: u64, normalize: bool) -> Result<ChannelMatrix> {
    let paths = sample_paths(cfg, rng::derive_seed(seed, &[index]))?;
    let mut h = channel_matrix(&paths, cfg)?;
    if normalize {
        h.normalize_power()?;
    }
    Ok(h)
}

/// Real `2 x N x M` view: plane 0 holds real parts, plane 1 imaginary parts,
/// both divided by `scale`.
#[derive(Debug, Clone, PartialEq)]
pub struct RealChannelTensor {
    pub num_antennas: usize,
    pub num_subcarriers: usize,
    pub planes: Vec<f64>,
    pub scale: f64,
}

impl RealChannelTensor {
    pub fn from_planes(num_antennas: usize, num_subcarriers: usize, planes: Vec<f64>, scale: f64) -> Result<Self> {
        if planes.len() != 2 * num_antennas * num_subcarriers {
            return Err(shape(
                format!("{} plane entries", 2 * num_antennas * num_subcarriers),
                format!("{}", planes.len()),
            ));
        }
        check_scale(scale)?;
        Ok(Self { num_antennas, num_subcarriers, planes, scale })
    }
}

fn check_scale(scale: f64) -> Result<()> {
    if !(scale > 0.0) || !scale.is_finite() {
        return Err(invalid(format!("scale {scale} must be positive and finite")));
    }
    Ok(())
}

pub fn to_real_tensor(h: &ChannelMatrix, scale: f64) -> Result<RealChannelTensor> {
    check_scale(scale)?;
    let mut planes = complex_to_planes(h.as_vec(), h.num_antennas, h.num_subcarriers);
    planes.iter_mut().for_each(|x| *x /= scale);
    Ok(RealChannelTensor {
        num_antennas: h.num_antennas,
        num_subcarriers: h.num_subcarriers,
        planes,
        scale,
    })
}

pub fn from_real_tensor(t: &RealChannelTensor) -> ChannelMatrix {
    let mut entries = planes_to_complex(&t.planes, t.num_antennas, t.num_subcarriers);
    entries.iter_mut().for_each(|z| *z *= t.scale);
    ChannelMatrix {
        num_antennas: t.num_antennas,
        num_subcarriers: t.num_subcarriers,
        entries,
        paths: None,
    }
}

/// Empirical standard deviation of all real-tensor entries of a dataset.
pub fn dataset_scale(channels: &[ChannelMatrix]) -> Result<f64> {
    let count: usize = channels.iter().map(|h| 2 * h.entries.len()).sum();
    if count < 2 {
        return Err(Error::EmptyDataset);
    }
    let values = || channels.iter().flat_map(|h| h.entries.iter().flat_map(|z| [z.re, z.im]));
    let mean = values().sum::<f64>() / count as f64;
    let var = values().map(|x| (x - mean) * (x - mean)).sum::<f64>() / count as f64;
    let std = libm::sqrt(var);
    if !(std > 0.0) {
        return Err(invalid("dataset has zero variance"));
    }
    Ok(std)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cfg() -> SystemConfig {
        SystemConfig::new(128, 64, 60e9, 6.4e9)
    }

    #[test]
    fn subcarrier_grid() {
        let mut c = SystemConfig::new(8, 1, 60e9, 1e9);
        assert_eq!(c.subcarrier_frequencies(), vec![60e9]);
        c.num_subcarriers = 2;
        c.bandwidth = 2e9;
        assert_eq!(c.subcarrier_frequencies(), vec![59.5e9, 60.5e9]);
        let f = cfg().subcarrier_frequencies();
        assert!((f[0] - 56.85e9).abs() < 1.0);
        assert!((f[63] - 63.15e9).abs() < 1.0);
        assert!(f.windows(2).all(|w| w[1] > w[0]));
        let mean = f.iter().sum::<f64>() / 64.0;
        assert!((mean - 60e9).abs() < 1e-3);
    }

    #[test]
    fn rayleigh_distances() {
        let c = SystemConfig::new(256, 1, 60e9, 0.0);
        assert!((c.rayleigh_distance() - 162.56).abs() < 0.5, "{}", c.rayleigh_distance());
        assert_eq!(SystemConfig::new(1, 1, 60e9, 0.0).rayleigh_distance(), 0.0);
        assert!((cfg().rayleigh_distance() - 40.32).abs() < 0.1);
    }

    #[test]
    fn single_antenna_steering() {
        let c = SystemConfig::new(1, 1, 60e9, 0.0);
        assert_eq!(steering_vector(0.3, 7.0, 60e9, &c).unwrap(), vec![Complex64::new(1.0, 0.0)]);
    }

    #[test]
    fn steering_rejects_bad_inputs() {
        let c = cfg();
        assert!(steering_vector(0.2, 0.0, 60e9, &c).is_err());
        assert!(steering_vector(0.2, -1.0, 60e9, &c).is_err());
        assert!(steering_vector(0.2, 0.5 * c.min_distance(), 60e9, &c).is_err());
        assert!(steering_vector(1.2, 5.0, 60e9, &c).is_err());
        assert!(steering_vector(0.2, 5.0, 0.0, &c).is_err());
    }

    #[test]
    fn far_distance_matches_plane_wave_phase() {
        let c = cfg();
        let f = c.carrier_freq;
        let a = steering_vector(0.5, 1e9, f, &c).unwrap();
        let k = TAU * f / c.speed_of_light;
        for (n, z) in a.iter().enumerate() {
            let expect = k * n as f64 * c.antenna_spacing * 0.5;
            let diff = (z.arg() - expect).rem_euclid(TAU);
            let diff = diff.min(TAU - diff);
            assert!(diff < 1e-6, "n={n} diff={diff}");
        }
    }

    #[test]
    fn zero_gain_gives_zero_channel() {
        let mut c = cfg();
        c.num_paths = 1;
        let p = PathSet::new(vec![Complex64::new(0.0, 0.0)], vec![0.1], vec![10.0]).unwrap();
        let h = channel_matrix(&p, &c).unwrap();
        assert!(h.as_vec().iter().all(|z| z.norm() == 0.0));
    }

    #[test]
    fn single_path_has_unit_modulus_entries() {
        let mut c = SystemConfig::new(16, 8, 60e9, 6e9);
        c.num_paths = 1;
        let p = PathSet::new(vec![Complex64::new(1.0, 0.0)], vec![-0.4], vec![12.0]).unwrap();
        let h = channel_matrix(&p, &c).unwrap();
        for z in h.as_vec() {
            assert!((z.norm() - 1.0).abs() < 1e-12);
        }
        for m in 0..8 {
            let e: f64 = h.column(m).iter().map(|z| z.norm_sqr()).sum();
            assert!((e - 16.0).abs() < 1e-10);
        }
    }

    #[test]
    fn path_count_must_match_config() {
        let c = cfg();
        let p = PathSet::new(vec![Complex64::new(1.0, 0.0)], vec![0.0], vec![10.0]).unwrap();
        assert!(matches!(channel_matrix(&p, &c), Err(Error::ShapeMismatch { .. })));
    }

    #[test]
    fn sampled_paths_are_reproducible_and_in_range() {
        let c = cfg();
        let a = sample_paths(&c, 11).unwrap();
        assert_eq!(a, sample_paths(&c, 11).unwrap());
        assert_ne!(a, sample_paths(&c, 12).unwrap());
        let lim = libm::sin(PI / 3.0) + 1e-15;
        for seed in 0..200 {
            let p = sample_paths(&c, seed).unwrap();
            assert!(p.spatial_angles.iter().all(|t| t.abs() <= lim));
            assert!(p.distances.iter().all(|r| (5.0..=40.0).contains(r)));
        }
    }

    #[test]
    fn real_tensor_planes() {
        let h = ChannelMatrix::from_vec(2, 3, vec![Complex64::new(0.0, 1.0); 6]).unwrap();
        let t = to_real_tensor(&h, 1.0).unwrap();
        assert!(t.planes[..6].iter().all(|&x| x == 0.0));
        assert!(t.planes[6..].iter().all(|&x| x == 1.0));
        assert_eq!(from_real_tensor(&t), h);
        assert!(to_real_tensor(&h, 0.0).is_err());
    }

    #[test]
    fn normalized_dataset_scale_gives_unit_std() {
        let c = SystemConfig::new(16, 8, 60e9, 6.4e9);
        let data: Vec<_> = (0..200).map(|i| generate_channel(&c, 5, i, true).unwrap()).collect();
        let s = dataset_scale(&data).unwrap();
        let stored: Vec<_> = data.iter().map(|h| to_real_tensor(h, s).unwrap()).collect();
        let n: usize = stored.iter().map(|t| t.planes.len()).sum();
        let mean = stored.iter().flat_map(|t| t.planes.iter()).sum::<f64>() / n as f64;
        let var = stored.iter().flat_map(|t| t.planes.iter()).map(|x| (x - mean).powi(2)).sum::<f64>() / n as f64;
        assert!((var.sqrt() - 1.0).abs() < 1e-12);
    }
}
