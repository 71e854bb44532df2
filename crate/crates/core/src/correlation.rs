//! Antenna and subcarrier correlation of the near-field wideband channel.
//!
//! Sub-paths scatter around a mean angle `phi0` with a Laplacian power angle
//! spectrum (std `sigma_phi`, truncated to `[-pi, pi)`) and around a mean
//! distance `r0` with an exponential power delay profile (std `sigma_psi`).
//! The closed forms linearize the phase in the angle and distance offsets; the
//! Monte-Carlo oracle evaluates the exact single-path phase instead.

use alloc::format;
use core::f64::consts::{PI, SQRT_2, TAU};

use num_complex::Complex64;
use rand::Rng;

use crate::channel::SystemConfig;
use crate::error::invalid;
use crate::rng;
use crate::Result;

/// Draws per independent oracle substream.
pub const ORACLE_CHUNK: usize = 1 << 16;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CorrelationParams {
    /// Radians.
    pub mean_angle: f64,
    /// Radians.
    pub angle_std: f64,
    /// Meters.
    pub mean_distance: f64,
    /// Meters.
    pub distance_std: f64,
    pub gain_var: f64,
}

impl Default for CorrelationParams {
    fn default() -> Self {
        Self {
            mean_angle: PI / 6.0,
            angle_std: 0.1,
            mean_distance: 10.0,
            distance_std: 1.0,
            gain_var: 1.0,
        }
    }
}

impl CorrelationParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.angle_std > 0.0) || !(self.distance_std > 0.0) || !(self.mean_distance > 0.0) || !(self.gain_var > 0.0) {
            return Err(invalid("sigma_phi, sigma_psi, r0 and sigma_alpha^2 must be positive"));
        }
        Ok(())
    }

    /// `sin(phi0)`.
    pub fn mean_spatial_angle(&self) -> f64 {
        libm::sin(self.mean_angle)
    }

    /// `cos^2(phi0) / (2 r0)`.
    pub fn mean_curvature(&self) -> f64 {
        let c = libm::cos(self.mean_angle);
        c * c / (2.0 * self.mean_distance)
    }

    /// PAS normalization `1 / (1 - exp(-sqrt(2) pi / sigma_phi))`.
    pub fn pas_normalization(&self) -> f64 {
        1.0 / (1.0 - libm::exp(-SQRT_2 * PI / self.angle_std))
    }
}

/// `I_theta(Omega) = int P_theta(phi) exp(j 2 pi Omega phi) dphi` for the
/// truncated Laplacian PAS. Real-valued because the PAS is symmetric.
pub fn angular_integral(omega: f64, p: &CorrelationParams) -> f64 {
    let s = p.angle_std;
    let w = TAU * omega;
    let tail = libm::exp(-SQRT_2 * PI / s);
    let a = SQRT_2 / s;
    let arg = 2.0 * PI * PI * omega;
    SQRT_2 * s * p.pas_normalization() / (2.0 + s * s * w * w)
        * (tail * (-a * libm::cos(arg) + w * libm::sin(arg)) + a)
}

/// `|1 / (1 + j x)|`.
fn delay_integral_magnitude(x: f64) -> f64 {
    1.0 / libm::sqrt(1.0 + x * x)
}

fn antenna_terms(n: usize, lag: usize, freq: f64, p: &CorrelationParams, cfg: &SystemConfig) -> (f64, f64) {
    let d = cfg.antenna_spacing;
    let c = cfg.speed_of_light;
    let (n, lag) = (n as f64, lag as f64);
    let quad = (2.0 * n * lag + lag * lag) * d * d;
    let omega = freq * lag * d * libm::cos(p.mean_angle) / c
        + freq * quad * libm::sin(2.0 * p.mean_angle) / (2.0 * c * p.mean_distance);
    let x = TAU * freq * quad * p.mean_curvature() * p.distance_std / (c * p.mean_distance);
    (omega, x)
}

fn subcarrier_terms(lag: usize, n: usize, p: &CorrelationParams, cfg: &SystemConfig) -> (f64, f64) {
    let d = cfg.antenna_spacing;
    let c = cfg.speed_of_light;
    let fs = cfg.subcarrier_spacing();
    let (n, lag) = (n as f64, lag as f64);
    let nd = n * d;
    let omega = lag * fs / c * (nd * libm::cos(p.mean_angle) + nd * nd * libm::sin(2.0 * p.mean_angle) / (2.0 * p.mean_distance));
    let x = TAU * lag * fs * p.distance_std / c * (1.0 - nd * nd * p.mean_curvature() / p.mean_distance);
    (omega, x)
}

/// `|R_a(n, f_m)|` between antennas `n` and `n + lag` on frequency `freq`.
pub fn antenna_corr_magnitude(n: usize, lag: usize, freq: f64, p: &CorrelationParams, cfg: &SystemConfig) -> Result<f64> {
    p.validate()?;
    if n + lag >= cfg.num_antennas {
        return Err(invalid(format!("antenna pair ({n}, {}) outside array of {}", n + lag, cfg.num_antennas)));
    }
    if lag == 0 {
        return Ok(p.gain_var);
    }
    let (omega, x) = antenna_terms(n, lag, freq, p, cfg);
    Ok(p.gain_var * angular_integral(omega, p).abs() * delay_integral_magnitude(x))
}

/// `|R_s(dm, n)|` between subcarriers `m` and `m + lag` at antenna `n`.
pub fn subcarrier_corr_magnitude(lag: usize, n: usize, p: &CorrelationParams, cfg: &SystemConfig) -> Result<f64> {
    p.validate()?;
    if n >= cfg.num_antennas {
        return Err(invalid(format!("antenna {n} outside array of {}", cfg.num_antennas)));
    }
    if lag == 0 {
        return Ok(p.gain_var);
    }
    let (omega, x) = subcarrier_terms(lag, n, p, cfg);
    Ok(p.gain_var * angular_integral(omega, p).abs() * delay_integral_magnitude(x))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum CorrelationQuery {
    /// Antennas `n` and `n + lag` at frequency `freq`.
    Antenna { n: usize, lag: usize, freq: f64 },
    /// Subcarriers `m` and `m + lag` at antenna `n`.
    Subcarrier { lag: usize, n: usize },
}

impl CorrelationQuery {
    pub fn closed_form(&self, p: &CorrelationParams, cfg: &SystemConfig) -> Result<f64> {
        match *self {
            CorrelationQuery::Antenna { n, lag, freq } => antenna_corr_magnitude(n, lag, freq, p, cfg),
            CorrelationQuery::Subcarrier { lag, n } => subcarrier_corr_magnitude(lag, n, p, cfg),
        }
    }

    /// Exact phase of `h_a h_b^*` for one sub-path at `(theta0, r0)`.
    fn exact_phase(&self, theta: f64, r: f64, cfg: &SystemConfig) -> f64 {
        let d = cfg.antenna_spacing;
        let c = cfg.speed_of_light;
        let xi = (1.0 - theta * theta) / (2.0 * r);
        match *self {
            CorrelationQuery::Antenna { n, lag, freq } => {
                let (n, lag) = (n as f64, lag as f64);
                TAU * freq / c * ((2.0 * n * lag + lag * lag) * d * d * xi - lag * d * theta)
            }
            CorrelationQuery::Subcarrier { lag, n } => {
                let nd = n as f64 * d;
                -TAU * lag as f64 * cfg.subcarrier_spacing() / c * (nd * theta - nd * nd * xi - r)
            }
        }
    }
}

/// Inverse-CDF draw from the Laplacian PAS truncated to `[-pi, pi)`.
pub fn sample_angle_offset<R: Rng + ?Sized>(rng: &mut R, angle_std: f64) -> f64 {
    let a = SQRT_2 / angle_std;
    let mass = 1.0 - libm::exp(-a * PI);
    let u: f64 = rng.random();
    let mag = -libm::log1p(-u * mass) / a;
    if rng.random::<bool>() { mag } else { -mag }
}

/// Exponential PDP draw with mean `distance_std`.
pub fn sample_distance_offset<R: Rng + ?Sized>(rng: &mut R, distance_std: f64) -> f64 {
    let u: f64 = rng.random();
    -distance_std * libm::log1p(-u)
}

/// Sum of `sigma_alpha^2 exp(j phase)` over `draws` sub-path samples from
/// substream `chunk` of `seed`. Chunks are independent, so callers may evaluate
/// them in parallel and add the sums in chunk order.
pub fn oracle_chunk_sum(query: &CorrelationQuery, p: &CorrelationParams, cfg: &SystemConfig, seed: u64, chunk: u64, draws: usize) -> Complex64 {
    let mut rng = rng::stream(seed, &[rng::label("corr-oracle"), chunk]);
    let mut acc = Complex64::new(0.0, 0.0);
    for _ in 0..draws {
        let phi = sample_angle_offset(&mut rng, p.angle_std);
        let psi = sample_distance_offset(&mut rng, p.distance_std);
        let theta = libm::sin(p.mean_angle - phi);
        let r = p.mean_distance + psi;
        acc += Complex64::from_polar(1.0, query.exact_phase(theta, r, cfg));
    }
    acc * p.gain_var
}

/// Splits `num_draws` into the chunk sizes used by [`oracle_chunk_sum`].
pub fn oracle_chunks(num_draws: usize) -> impl Iterator<Item = (u64, usize)> {
    let full = num_draws / ORACLE_CHUNK;
    let rest = num_draws % ORACLE_CHUNK;
    (0..full as u64)
        .map(|c| (c, ORACLE_CHUNK))
        .chain((rest > 0).then_some((full as u64, rest)))
}

/// Monte-Carlo estimate of `|E[h_a h_b^*]|` with the exact phase.
pub fn empirical_corr_oracle(query: &CorrelationQuery, p: &CorrelationParams, cfg: &SystemConfig, num_draws: usize, seed: u64) -> Result<f64> {
    p.validate()?;
    if num_draws < 1000 {
        return Err(invalid("oracle needs at least 1000 draws"));
    }
    query.closed_form(p, cfg)?;
    let sum = oracle_chunks(num_draws).fold(Complex64::new(0.0, 0.0), |acc, (chunk, draws)| {
        acc + oracle_chunk_sum(query, p, cfg, seed, chunk, draws)
    });
    Ok((sum / num_draws as f64).norm())
}
