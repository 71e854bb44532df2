//! Noise schedule, denoiser training and the score-based posterior sampler.
//!
//! Everything here works on normalized plane tensors (`2 x N x M`, see
//! [`crate::observation`] for the index map), i.e. channel entries divided by
//! the dataset scale.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use rand::seq::SliceRandom;
use rand::Rng;

use crate::channel::ChannelMatrix;
use crate::error::{invalid, shape};
use crate::network::{self, DenoiserParams, NetworkConfig};
use crate::observation::{complex_to_planes, planes_to_complex, MeasurementOperator, PilotConfig};
use crate::rng::{self, label, standard_normal};
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct NoiseSchedule {
    betas: Vec<f64>,
    gamma_bars: Vec<f64>,
}

pub const DEFAULT_STEPS: usize = 100;
pub const DEFAULT_BETA_START: f64 = 1e-4;
pub const DEFAULT_BETA_END: f64 = 0.2;

/// `beta_t` evenly spaced from `beta_start` to `beta_end` inclusive.
pub fn linear_schedule(steps: usize, beta_start: f64, beta_end: f64) -> Result<NoiseSchedule> {
    if steps == 0 {
        return Err(invalid("schedule needs at least one step"));
    }
    let increasing = if steps == 1 { beta_start < 1.0 } else { beta_start < beta_end };
    if !(beta_start > 0.0 && beta_end < 1.0 && increasing) {
        return Err(invalid(format!("need 0 < beta_start < beta_end < 1, got {beta_start}, {beta_end}")));
    }
    let betas: Vec<f64> = (0..steps)
        .map(|i| if steps == 1 { beta_start } else { beta_start + (beta_end - beta_start) * i as f64 / (steps - 1) as f64 })
        .collect();
    NoiseSchedule::from_betas(betas)
}

impl Default for NoiseSchedule {
    fn default() -> Self {
        linear_schedule(DEFAULT_STEPS, DEFAULT_BETA_START, DEFAULT_BETA_END).expect("default schedule is valid")
    }
}

impl NoiseSchedule {
    pub fn from_betas(betas: Vec<f64>) -> Result<Self> {
        if betas.is_empty() || betas.iter().any(|&b| !(b > 0.0 && b < 1.0)) || betas.windows(2).any(|w| w[1] <= w[0]) {
            return Err(invalid("betas must be strictly increasing in (0, 1)"));
        }
        // Cumulative product through a running log sum.
        let mut log_sum = 0.0;
        let gamma_bars = betas
            .iter()
            .map(|&b| {
                log_sum += libm::log1p(-b);
                libm::exp(log_sum)
            })
            .collect();
        Ok(Self { betas, gamma_bars })
    }

    pub fn steps(&self) -> usize {
        self.betas.len()
    }

    /// `beta_t` for `t` in `1..=T`.
    pub fn beta(&self, t: usize) -> f64 {
        self.betas[t - 1]
    }

    pub fn gamma(&self, t: usize) -> f64 {
        1.0 - self.betas[t - 1]
    }

    pub fn gamma_bar(&self, t: usize) -> f64 {
        self.gamma_bars[t - 1]
    }

    pub fn betas(&self) -> &[f64] {
        &self.betas
    }

    fn check_step(&self, t: usize) -> Result<()> {
        if t == 0 || t > self.steps() {
            return Err(invalid(format!("step {t} outside 1..={}", self.steps())));
        }
        Ok(())
    }
}

/// `h_t = sqrt(gbar_t) h_0 + sqrt(1 - gbar_t) eps`; returns `(h_t, eps)`.
pub fn forward_sample<R: Rng + ?Sized>(h0: &[f64], t: usize, schedule: &NoiseSchedule, rng: &mut R) -> Result<(Vec<f64>, Vec<f64>)> {
    schedule.check_step(t)?;
    let g = schedule.gamma_bar(t);
    let (a, b) = (libm::sqrt(g), libm::sqrt(1.0 - g));
    let eps: Vec<f64> = (0..h0.len()).map(|_| standard_normal(rng)).collect();
    let ht = h0.iter().zip(&eps).map(|(h, e)| a * h + b * e).collect();
    Ok((ht, eps))
}

/// Noise-prediction model used by the sampler.
pub trait NoisePredictor {
    fn predict_noise(&self, h_t: &[f64], t: usize) -> Result<Vec<f64>>;
}

impl NoisePredictor for DenoiserParams {
    fn predict_noise(&self, h_t: &[f64], t: usize) -> Result<Vec<f64>> {
        network::forward(self, h_t, t)
    }
}

/// Predicts zero noise everywhere; the sampler then follows the likelihood alone.
#[derive(Debug, Clone, Copy, Default)]
pub struct ZeroPredictor;

impl NoisePredictor for ZeroPredictor {
    fn predict_noise(&self, h_t: &[f64], _t: usize) -> Result<Vec<f64>> {
        Ok(vec![0.0; h_t.len()])
    }
}

/// `-eps_hat(h_t, t) / sqrt(1 - gbar_t)`.
pub fn prior_score<P: NoisePredictor + ?Sized>(model: &P, h_t: &[f64], t: usize, schedule: &NoiseSchedule) -> Result<Vec<f64>> {
    schedule.check_step(t)?;
    let k = -1.0 / libm::sqrt(1.0 - schedule.gamma_bar(t));
    Ok(model.predict_noise(h_t, t)?.into_iter().map(|e| e * k).collect())
}

fn likelihood_parts(h_t: &[f64], y: &[f64], op: &MeasurementOperator, t: usize, schedule: &NoiseSchedule) -> Result<(f64, f64, Vec<f64>)> {
    schedule.check_step(t)?;
    if y.len() != h_t.len() {
        return Err(shape(format!("{} observation entries", h_t.len()), format!("{}", y.len())));
    }
    let g = schedule.gamma_bar(t);
    if !(g > 0.0) {
        return Err(Error::Singular(format!("gamma_bar vanishes at step {t}")));
    }
    let sg = libm::sqrt(g);
    let bh = op.apply_real(h_t)?;
    let residual = y.iter().zip(&bh).map(|(yi, b)| yi - b / sg).collect();
    Ok(((1.0 - g) / g, sg, residual))
}

/// `(1/sqrt(gbar)) B^T ((1-gbar)/gbar B B^T + sigma2 I)^{-1} (y - B h_t / sqrt(gbar))`
/// in the real plane representation; `noise_var` is the per-component
/// variance of the normalized observation noise.
pub fn likelihood_score(h_t: &[f64], y: &[f64], op: &MeasurementOperator, t: usize, noise_var: f64, schedule: &NoiseSchedule) -> Result<Vec<f64>> {
    let (alpha, sg, residual) = likelihood_parts(h_t, y, op, t, schedule)?;
    let v = op.solve_gram_real(alpha, noise_var, &residual)?;
    Ok(op.apply_real_transpose(&v)?.into_iter().map(|x| x / sg).collect())
}

/// Same quantity through the explicit `2NM x 2NM` operator and a dense solve.
pub fn likelihood_score_dense(h_t: &[f64], y: &[f64], op: &MeasurementOperator, t: usize, noise_var: f64, schedule: &NoiseSchedule) -> Result<Vec<f64>> {
    schedule.check_step(t)?;
    let dim = h_t.len();
    if dim != 2 * op.dim() || y.len() != dim {
        return Err(shape(format!("{} entries", 2 * op.dim()), format!("{} and {}", dim, y.len())));
    }
    let b = op.dense_real();
    let g = schedule.gamma_bar(t);
    let sg = libm::sqrt(g);
    let residual: Vec<f64> = (0..dim).map(|i| y[i] - (0..dim).map(|k| b[i * dim + k] * h_t[k]).sum::<f64>() / sg).collect();
    let v = op.solve_gram_real_dense((1.0 - g) / g, noise_var, &residual)?;
    Ok((0..dim).map(|k| (0..dim).map(|i| b[i * dim + k] * v[i]).sum::<f64>() / sg).collect())
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SamplerConfig {
    /// Multiplier on the likelihood score; 1 is the plain posterior score and
    /// 0 gives unconditional generation.
    pub likelihood_weight: f64,
}

impl Default for SamplerConfig {
    fn default() -> Self {
        Self { likelihood_weight: 1.0 }
    }
}

/// Deterministic reverse recursion `h_{t-1} = (h_t + beta_t score_t) / sqrt(gamma_t)`
/// from `h_T ~ N(0, I)`. `y` and the result are normalized planes.
#[allow(clippy::too_many_arguments)]
pub fn posterior_sample<P: NoisePredictor + ?Sized, R: Rng + ?Sized>(
    model: &P,
    y: &[f64],
    op: &MeasurementOperator,
    noise_var: f64,
    schedule: &NoiseSchedule,
    sampler: &SamplerConfig,
    rng: &mut R,
) -> Result<Vec<f64>> {
    if y.len() != 2 * op.dim() {
        return Err(shape(format!("{} observation entries", 2 * op.dim()), format!("{}", y.len())));
    }
    let mut h: Vec<f64> = (0..y.len()).map(|_| standard_normal(rng)).collect();
    for t in (1..=schedule.steps()).rev() {
        let mut score = prior_score(model, &h, t, schedule)?;
        if sampler.likelihood_weight != 0.0 {
            let lk = likelihood_score(&h, y, op, t, noise_var, schedule)?;
            score.iter_mut().zip(&lk).for_each(|(s, l)| *s += sampler.likelihood_weight * l);
        }
        let (beta, inv) = (schedule.beta(t), 1.0 / libm::sqrt(schedule.gamma(t)));
        for (hi, s) in h.iter_mut().zip(&score) {
            *hi = (*hi + beta * s) * inv;
        }
        if h.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite { step: t, what: "posterior iterate".into() });
        }
    }
    Ok(h)
}

/// Complex-domain wrapper: normalizes the observation by `scale`, samples,
/// and returns the de-normalized channel estimate.
#[allow(clippy::too_many_arguments)]
pub fn posterior_estimate<P: NoisePredictor + ?Sized>(
    model: &P,
    y: &ChannelMatrix,
    pilots: &PilotConfig,
    scale: f64,
    schedule: &NoiseSchedule,
    sampler: &SamplerConfig,
    seed: u64,
) -> Result<ChannelMatrix> {
    if !(scale > 0.0) {
        return Err(invalid("dataset scale must be positive"));
    }
    let (n, m) = (y.num_antennas(), y.num_subcarriers());
    let op = pilots.operator(n);
    let mut planes = complex_to_planes(y.as_vec(), n, m);
    planes.iter_mut().for_each(|v| *v /= scale);
    let noise_var = pilots.noise_power / (2.0 * scale * scale);
    let h = posterior_sample(model, &planes, &op, noise_var, schedule, sampler, &mut rng::stream(seed, &[label("posterior")]))?;
    let mut entries = planes_to_complex(&h, n, m);
    entries.iter_mut().for_each(|z| *z *= scale);
    ChannelMatrix::from_vec(n, m, entries)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrainingConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub adam_eps: f64,
    /// Global gradient-norm clip; `None` disables clipping.
    pub clip_norm: Option<f64>,
    pub seed: u64,
    /// Validation loss is computed every this many epochs and after the last.
    pub validate_every: usize,
}

impl Default for TrainingConfig {
    fn default() -> Self {
        Self { epochs: 100, batch_size: 128, learning_rate: 5e-4, beta1: 0.9, beta2: 0.999, adam_eps: 1e-8, clip_norm: Some(1.0), seed: 0, validate_every: 1 }
    }
}

impl TrainingConfig {
    pub fn validate(&self) -> Result<()> {
        if self.epochs == 0 || self.batch_size == 0 || self.validate_every == 0 {
            return Err(invalid("epochs, batch size and validation cadence must be positive"));
        }
        if !(self.learning_rate > 0.0) || !(0.0..1.0).contains(&self.beta1) || !(0.0..1.0).contains(&self.beta2) || !(self.adam_eps > 0.0) {
            return Err(invalid("invalid optimizer hyperparameters"));
        }
        if matches!(self.clip_norm, Some(c) if !(c > 0.0)) {
            return Err(invalid("clip norm must be positive"));
        }
        Ok(())
    }
}

/// One unit of work for a [`BatchExecutor`]: loss and (optional) gradient.
pub type JobOutput = (f64, Vec<f64>);

/// Runs independent per-sample jobs. Results must come back in index order so
/// that gradient sums, and therefore training, are deterministic.
pub trait BatchExecutor {
    fn run(&self, jobs: usize, job: &(dyn Fn(usize) -> Result<JobOutput> + Sync)) -> Result<Vec<JobOutput>>;
}

#[derive(Debug, Clone, Copy, Default)]
pub struct SerialExecutor;

impl BatchExecutor for SerialExecutor {
    fn run(&self, jobs: usize, job: &(dyn Fn(usize) -> Result<JobOutput> + Sync)) -> Result<Vec<JobOutput>> {
        (0..jobs).map(job).collect()
    }
}

/// Mean squared noise-prediction error of one sample and, if requested, its
/// gradient.
pub fn sample_loss(params: &DenoiserParams, h0: &[f64], t: usize, noise: &[f64], schedule: &NoiseSchedule, with_grad: bool) -> Result<JobOutput> {
    schedule.check_step(t)?;
    if h0.len() != params.config.input_len() || noise.len() != h0.len() {
        return Err(shape(format!("{} entries", params.config.input_len()), format!("{} and {}", h0.len(), noise.len())));
    }
    let g = schedule.gamma_bar(t);
    let (a, b) = (libm::sqrt(g), libm::sqrt(1.0 - g));
    let ht: Vec<f64> = h0.iter().zip(noise).map(|(h, e)| a * h + b * e).collect();
    let cache = network::forward_cached(params, &ht, t)?;
    let d = noise.len() as f64;
    let diff: Vec<f64> = cache.output.iter().zip(noise).map(|(p, e)| p - e).collect();
    let loss = diff.iter().map(|v| v * v).sum::<f64>() / d;
    if !with_grad {
        return Ok((loss, Vec::new()));
    }
    let upstream: Vec<f64> = diff.iter().map(|v| 2.0 * v / d).collect();
    let grad = network::backward(params, &cache, &upstream)?.params;
    Ok((loss, grad))
}

struct Draw {
    index: usize,
    t: usize,
    noise: Vec<f64>,
}

fn draw<R: Rng + ?Sized>(index: usize, len: usize, schedule: &NoiseSchedule, rng: &mut R) -> Draw {
    let t = rng.random_range(1..=schedule.steps());
    let noise = (0..len).map(|_| standard_normal(rng)).collect();
    Draw { index, t, noise }
}

/// Mean loss over `data` with noise and steps drawn from a stream fixed by `seed`.
pub fn evaluate_loss(params: &DenoiserParams, data: &[Vec<f64>], schedule: &NoiseSchedule, seed: u64, exec: &dyn BatchExecutor) -> Result<f64> {
    if data.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let len = params.config.input_len();
    let draws: Vec<Draw> = (0..data.len()).map(|i| draw(i, len, schedule, &mut rng::stream(seed, &[i as u64]))).collect();
    let out = exec.run(draws.len(), &|j| sample_loss(params, &data[draws[j].index], draws[j].t, &draws[j].noise, schedule, false))?;
    Ok(out.iter().map(|o| o.0).sum::<f64>() / data.len() as f64)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpochRecord {
    pub epoch: usize,
    pub train_loss: f64,
    pub val_loss: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainingReport {
    /// Loss of the initialized network on the training set.
    pub initial_loss: f64,
    pub history: Vec<EpochRecord>,
    /// Epoch whose parameters were returned.
    pub best_epoch: usize,
    pub best_val_loss: Option<f64>,
}

struct Adam {
    m: Vec<f64>,
    v: Vec<f64>,
    step: i32,
}

impl Adam {
    fn update(&mut self, params: &mut [f64], grad: &[f64], tc: &TrainingConfig) {
        self.step += 1;
        let c1 = 1.0 - libm::pow(tc.beta1, self.step as f64);
        let c2 = 1.0 - libm::pow(tc.beta2, self.step as f64);
        for i in 0..params.len() {
            self.m[i] = tc.beta1 * self.m[i] + (1.0 - tc.beta1) * grad[i];
            self.v[i] = tc.beta2 * self.v[i] + (1.0 - tc.beta2) * grad[i] * grad[i];
            let mh = self.m[i] / c1;
            let vh = self.v[i] / c2;
            params[i] -= tc.learning_rate * mh / (libm::sqrt(vh) + tc.adam_eps);
        }
    }
}

/// Trains from the initialization seeded by `tc.seed`. With a validation set
/// the parameters of the best validation epoch are returned, otherwise the
/// final ones.
pub fn train(
    train_data: &[Vec<f64>],
    val_data: &[Vec<f64>],
    net: NetworkConfig,
    schedule: &NoiseSchedule,
    tc: &TrainingConfig,
    exec: &dyn BatchExecutor,
    observer: &mut dyn FnMut(&EpochRecord),
) -> Result<(DenoiserParams, TrainingReport)> {
    let init = DenoiserParams::init(net, &mut rng::stream(tc.seed, &[label("init")]))?;
    train_from(init, train_data, val_data, schedule, tc, exec, observer)
}

pub fn train_from(
    mut params: DenoiserParams,
    train_data: &[Vec<f64>],
    val_data: &[Vec<f64>],
    schedule: &NoiseSchedule,
    tc: &TrainingConfig,
    exec: &dyn BatchExecutor,
    observer: &mut dyn FnMut(&EpochRecord),
) -> Result<(DenoiserParams, TrainingReport)> {
    tc.validate()?;
    if train_data.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let len = params.config.input_len();
    if let Some(bad) = train_data.iter().chain(val_data).find(|x| x.len() != len) {
        return Err(shape(format!("{len} entries per sample"), format!("{}", bad.len())));
    }
    let train_eval_seed = rng::derive_seed(tc.seed, &[label("train-eval")]);
    let val_seed = rng::derive_seed(tc.seed, &[label("validation")]);
    let initial_loss = evaluate_loss(&params, train_data, schedule, train_eval_seed, exec)?;

    let mut adam = Adam { m: vec![0.0; params.len()], v: vec![0.0; params.len()], step: 0 };
    let mut history = Vec::with_capacity(tc.epochs);
    let mut best: Option<(f64, usize, Vec<f64>)> = None;
    let mut order: Vec<usize> = (0..train_data.len()).collect();
    for epoch in 1..=tc.epochs {
        let mut rng = rng::stream(tc.seed, &[label("epoch"), epoch as u64]);
        order.shuffle(&mut rng);
        let mut total = 0.0;
        for (b, chunk) in order.chunks(tc.batch_size).enumerate() {
            let draws: Vec<Draw> = chunk.iter().map(|&i| draw(i, len, schedule, &mut rng)).collect();
            let out = exec.run(draws.len(), &|j| sample_loss(&params, &train_data[draws[j].index], draws[j].t, &draws[j].noise, schedule, true))?;
            let n = out.len() as f64;
            let mut grad = vec![0.0; params.len()];
            let mut batch_loss = 0.0;
            for (loss, g) in &out {
                batch_loss += loss;
                grad.iter_mut().zip(g).for_each(|(a, v)| *a += v / n);
            }
            if !batch_loss.is_finite() || grad.iter().any(|g| !g.is_finite()) {
                return Err(Error::NonFinite { step: epoch, what: format!("training loss in batch {b}") });
            }
            total += batch_loss;
            if let Some(clip) = tc.clip_norm {
                let norm = libm::sqrt(grad.iter().map(|g| g * g).sum::<f64>());
                if norm > clip {
                    grad.iter_mut().for_each(|g| *g *= clip / norm);
                }
            }
            adam.update(&mut params.values, &grad, tc);
        }
        let train_loss = total / train_data.len() as f64;
        let val_loss = if !val_data.is_empty() && (epoch % tc.validate_every == 0 || epoch == tc.epochs) {
            Some(evaluate_loss(&params, val_data, schedule, val_seed, exec)?)
        } else {
            None
        };
        if let Some(v) = val_loss {
            if !v.is_finite() {
                return Err(Error::NonFinite { step: epoch, what: "validation loss".into() });
            }
            if best.as_ref().is_none_or(|b| v < b.0) {
                best = Some((v, epoch, params.values.clone()));
            }
        }
        let rec = EpochRecord { epoch, train_loss, val_loss };
        observer(&rec);
        history.push(rec);
    }
    let (best_epoch, best_val_loss) = match best {
        Some((v, e, values)) => {
            params.values = values;
            (e, Some(v))
        }
        None => (tc.epochs, None),
    };
    Ok((params, TrainingReport { initial_loss, history, best_epoch, best_val_loss }))
}

#[cfg(test)]
mod tests {
    use super::*;
    use num_complex::Complex64;

    #[test]
    fn default_schedule_ends_near_zero() {
        let s = NoiseSchedule::default();
        assert_eq!(s.steps(), 100);
        let g = s.gamma_bar(100);
        assert!(g < 1e-3);
        let direct: f64 = s.betas().iter().map(|b| 1.0 - b).product();
        assert!((g - direct).abs() < 1e-15);
        assert!((1..100).all(|t| s.gamma_bar(t + 1) < s.gamma_bar(t)));
    }

    #[test]
    fn single_step_schedule() {
        let s = linear_schedule(1, 1e-4, 0.2).unwrap();
        assert!((s.gamma_bar(1) - (1.0 - 1e-4)).abs() < 1e-16);
        assert!(linear_schedule(10, 0.3, 0.2).is_err());
        assert!(linear_schedule(10, 0.0, 0.2).is_err());
    }

    #[test]
    fn forward_sample_from_zero_is_scaled_noise() {
        let s = NoiseSchedule::default();
        let (ht, eps) = forward_sample(&[0.0; 16], 30, &s, &mut rng::stream(1, &[])).unwrap();
        let b = libm::sqrt(1.0 - s.gamma_bar(30));
        for (h, e) in ht.iter().zip(&eps) {
            assert!((h - b * e).abs() < 1e-15);
        }
    }

    #[test]
    fn zero_score_unrolls_to_closed_form() {
        let s = linear_schedule(20, 1e-3, 0.1).unwrap();
        let op = MeasurementOperator::new(2, vec![Complex64::new(1.0, 0.0); 2]);
        let sampler = SamplerConfig { likelihood_weight: 0.0 };
        let out = posterior_sample(&ZeroPredictor, &[0.0; 8], &op, 0.1, &s, &sampler, &mut rng::stream(3, &[])).unwrap();
        let mut r = rng::stream(3, &[]);
        let start: Vec<f64> = (0..8).map(|_| standard_normal(&mut r)).collect();
        let k = 1.0 / libm::sqrt(s.gamma_bar(20));
        for (o, h) in out.iter().zip(&start) {
            assert!((o - h * k).abs() < 1e-12 * k);
        }
    }

    #[test]
    fn exact_observation_gives_zero_likelihood_score() {
        let s = NoiseSchedule::default();
        let op = MeasurementOperator::new(2, vec![Complex64::new(0.6, 0.8), Complex64::new(0.0, 1.0)]);
        let h: Vec<f64> = (0..8).map(|i| i as f64 * 0.1 - 0.3).collect();
        for t in [1, 50, 100] {
            let sg = libm::sqrt(s.gamma_bar(t));
            let y: Vec<f64> = op.apply_real(&h).unwrap().iter().map(|v| v / sg).collect();
            let sc = likelihood_score(&h, &y, &op, t, 0.01, &s).unwrap();
            assert!(sc.iter().all(|v| v.abs() < 1e-9));
        }
    }

    #[test]
    fn likelihood_score_grows_as_noise_level_falls() {
        let s = NoiseSchedule::default();
        let op = MeasurementOperator::new(2, vec![Complex64::new(1.0, 0.0); 2]);
        let h = vec![0.0; 8];
        let y = vec![0.5; 8];
        let norms: Vec<f64> = [100, 60, 30, 10, 1]
            .iter()
            .map(|&t| libm::sqrt(likelihood_score(&h, &y, &op, t, 1e-4, &s).unwrap().iter().map(|v| v * v).sum::<f64>()))
            .collect();
        assert!(norms.windows(2).all(|w| w[1] > w[0]), "{norms:?}");
    }

    #[test]
    fn zero_network_loss_is_unit() {
        let cfg = NetworkConfig::new(2, 1, 4, 4);
        let p = DenoiserParams::zeros(cfg).unwrap();
        let data: Vec<Vec<f64>> = (0..400).map(|i| (0..32).map(|j| ((i * 32 + j) as f64 * 0.37).sin()).collect()).collect();
        let loss = evaluate_loss(&p, &data, &NoiseSchedule::default(), 5, &SerialExecutor).unwrap();
        assert!((loss - 1.0).abs() < 0.05, "{loss}");
    }
}
