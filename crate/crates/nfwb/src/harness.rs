//! Monte-Carlo sweeps over SNR, path count, user distance or bandwidth.
//!
//! Every trial draws its channel, noise and estimator randomness from
//! separate streams keyed by `(grid point, trial)` and, for estimators, the
//! estimator name. Estimators therefore see identical channels and noise in
//! a trial, and their order in the list has no effect on any value.

use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::Instant;

use anyhow::{anyhow, bail, ensure, Context, Result};
use nfwb_core::channel::{generate_channel, ChannelMatrix, SystemConfig};
use nfwb_core::diffusion::{posterior_estimate, NoiseSchedule, SamplerConfig};
use nfwb_core::linear::{ls_estimate, sample_covariance, CovarianceMode, LmmseFilter};
use nfwb_core::metrics::nmse;
use nfwb_core::network::DenoiserParams;
use nfwb_core::observation::{observe_with, snr_to_noise_power, PilotConfig};
use nfwb_core::rng::{derive_seed, label, stream};
use nfwb_core::sparse::{build_dictionary_set, pomp_estimate, somp_estimate, PolarDictionary, PolarGridSpec};
use rayon::prelude::*;
use sha2::{Digest, Sha256};

use crate::config::{system_from_kv, system_to_kv, KvConfig};
use crate::dataset::{generate_channels, Split};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SweepVariable {
    Snr,
    Paths,
    Distance,
    Bandwidth,
}

impl SweepVariable {
    pub fn name(self) -> &'static str {
        match self {
            Self::Snr => "snr",
            Self::Paths => "paths",
            Self::Distance => "distance",
            Self::Bandwidth => "bandwidth",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        Ok(match s {
            "snr" => Self::Snr,
            "paths" => Self::Paths,
            "distance" => Self::Distance,
            "bandwidth" => Self::Bandwidth,
            other => bail!("unknown sweep variable `{other}`"),
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum EstimatorKind {
    Ls,
    Lmmse,
    Pomp,
    Psomp,
    Diffusion,
}

impl EstimatorKind {
    pub const ALL: [Self; 5] = [Self::Ls, Self::Lmmse, Self::Pomp, Self::Psomp, Self::Diffusion];

    pub fn name(self) -> &'static str {
        match self {
            Self::Ls => "ls",
            Self::Lmmse => "lmmse",
            Self::Pomp => "pomp",
            Self::Psomp => "psomp",
            Self::Diffusion => "diffusion",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        Self::ALL.into_iter().find(|e| e.name() == s).ok_or_else(|| anyhow!("unknown estimator `{s}`"))
    }

    pub fn parse_list(s: &str) -> Result<Vec<Self>> {
        s.split(',').map(str::trim).filter(|t| !t.is_empty()).map(Self::parse).collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentSpec {
    pub variable: SweepVariable,
    pub grid: Vec<f64>,
    pub trials: usize,
    pub estimators: Vec<EstimatorKind>,
    pub system: SystemConfig,
    /// SNR in dB for sweeps over anything other than SNR.
    pub snr_db: f64,
    pub pilot_power: f64,
    pub seed: u64,
    pub dictionary: PolarGridSpec,
    pub frequency_dependent: bool,
    /// Greedy iterations; `None` means `2 L`.
    pub sparsity: Option<usize>,
    pub covariance_samples: usize,
    pub covariance_ridge: f64,
    pub sampler: SamplerConfig,
    pub checkpoint: Option<PathBuf>,
}

impl ExperimentSpec {
    pub fn new(variable: SweepVariable, grid: Vec<f64>, trials: usize, estimators: Vec<EstimatorKind>, system: SystemConfig) -> Self {
        let num_antennas = system.num_antennas;
        Self {
            variable,
            grid,
            trials,
            estimators,
            system,
            snr_db: 10.0,
            pilot_power: 1.0,
            seed: 0,
            dictionary: PolarGridSpec { num_angles: 2 * num_antennas, ..PolarGridSpec::default() },
            frequency_dependent: true,
            sparsity: None,
            covariance_samples: 5000,
            covariance_ridge: 1e-6,
            sampler: SamplerConfig::default(),
            checkpoint: None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        ensure!(!self.grid.is_empty(), "sweep grid is empty");
        ensure!(self.trials >= 1, "need at least one trial");
        ensure!(!self.estimators.is_empty(), "no estimators selected");
        for (i, e) in self.estimators.iter().enumerate() {
            ensure!(!self.estimators[..i].contains(e), "estimator {} listed twice", e.name());
        }
        for &v in &self.grid {
            self.point(v)?;
        }
        Ok(())
    }

    /// System configuration and SNR at one grid value.
    pub fn point(&self, value: f64) -> Result<(SystemConfig, f64)> {
        let mut cfg = self.system.clone();
        let mut snr = self.snr_db;
        match self.variable {
            SweepVariable::Snr => snr = value,
            SweepVariable::Paths => {
                ensure!(value >= 1.0 && value.fract() == 0.0, "path count {value} is not a positive integer");
                cfg.num_paths = value as usize;
            }
            SweepVariable::Distance => cfg.distance_range = (value, value),
            SweepVariable::Bandwidth => cfg.bandwidth = value,
        }
        cfg.validate()?;
        Ok((cfg, snr))
    }

    pub fn to_kv(&self) -> KvConfig {
        let mut kv = KvConfig::default();
        kv.set("variable", self.variable.name());
        kv.set("grid", join(&self.grid));
        kv.set("trials", self.trials);
        kv.set("estimators", self.estimators.iter().map(|e| e.name()).collect::<Vec<_>>().join(","));
        system_to_kv(&self.system, &mut kv);
        kv.set("snr_db", self.snr_db);
        kv.set("pilot_power", self.pilot_power);
        kv.set("seed", self.seed);
        kv.set("dict_angles", self.dictionary.num_angles);
        kv.set("dict_rings", self.dictionary.num_rings);
        kv.set("dict_beta", self.dictionary.beta);
        kv.set("frequency_dependent", self.frequency_dependent);
        kv.set("sparsity", self.sparsity.map_or_else(|| "auto".to_string(), |k| k.to_string()));
        kv.set("covariance_samples", self.covariance_samples);
        kv.set("covariance_ridge", self.covariance_ridge);
        kv.set("likelihood_weight", self.sampler.likelihood_weight);
        kv.set("checkpoint", self.checkpoint.as_ref().map_or_else(|| "none".to_string(), |p| p.display().to_string()));
        kv
    }

    /// Reads keys written by [`Self::to_kv`]; missing keys keep the values of `base`.
    pub fn from_kv(kv: &KvConfig, base: &Self) -> Result<Self> {
        let mut s = base.clone();
        if let Some(v) = kv.get("variable") {
            s.variable = SweepVariable::parse(v)?;
        }
        if let Some(v) = kv.get("grid") {
            s.grid = parse_list(v)?;
        }
        kv.apply("trials", &mut s.trials)?;
        if let Some(v) = kv.get("estimators") {
            s.estimators = EstimatorKind::parse_list(v)?;
        }
        s.system = system_from_kv(kv, s.system.clone())?;
        kv.apply("snr_db", &mut s.snr_db)?;
        kv.apply("pilot_power", &mut s.pilot_power)?;
        kv.apply("seed", &mut s.seed)?;
        kv.apply("dict_angles", &mut s.dictionary.num_angles)?;
        kv.apply("dict_rings", &mut s.dictionary.num_rings)?;
        kv.apply("dict_beta", &mut s.dictionary.beta)?;
        kv.apply("frequency_dependent", &mut s.frequency_dependent)?;
        if let Some(v) = kv.get("sparsity") {
            s.sparsity = if v == "auto" { None } else { Some(v.parse().context("sparsity")?) };
        }
        kv.apply("covariance_samples", &mut s.covariance_samples)?;
        kv.apply("covariance_ridge", &mut s.covariance_ridge)?;
        kv.apply("likelihood_weight", &mut s.sampler.likelihood_weight)?;
        if let Some(v) = kv.get("checkpoint") {
            s.checkpoint = if v == "none" { None } else { Some(PathBuf::from(v)) };
        }
        Ok(s)
    }

    /// SHA-256 over the canonical key-value text.
    pub fn config_hash(&self) -> String {
        hex::encode(Sha256::digest(self.to_kv().to_text().as_bytes()))
    }
}

fn join(v: &[f64]) -> String {
    v.iter().map(f64::to_string).collect::<Vec<_>>().join(",")
}

pub fn parse_list(s: &str) -> Result<Vec<f64>> {
    s.split(',').map(str::trim).filter(|t| !t.is_empty()).map(|t| t.parse::<f64>().with_context(|| format!("bad number `{t}`"))).collect()
}

/// Trained denoiser plus what the sampler needs to use it.
#[derive(Debug, Clone)]
pub struct DiffusionModel {
    pub params: DenoiserParams,
    pub schedule: NoiseSchedule,
    pub scale: f64,
}

#[derive(Debug, Clone, Default)]
pub struct Resources {
    pub diffusion: Option<DiffusionModel>,
    /// Directory for cached dictionaries; `None` builds them in memory.
    pub dictionary_cache: Option<PathBuf>,
}

impl Resources {
    /// Loads the checkpoint named in `spec` when the diffusion estimator is
    /// selected, failing before any computation if it is missing.
    pub fn load(spec: &ExperimentSpec) -> Result<Self> {
        if !spec.estimators.contains(&EstimatorKind::Diffusion) {
            return Ok(Self::default());
        }
        let path = spec.checkpoint.as_ref().ok_or_else(|| anyhow!("the diffusion estimator needs a checkpoint"))?;
        Ok(Self { diffusion: Some(load_model(path)?), dictionary_cache: None })
    }

    fn check(&self, spec: &ExperimentSpec) -> Result<()> {
        if spec.estimators.contains(&EstimatorKind::Diffusion) {
            let m = self.diffusion.as_ref().ok_or_else(|| anyhow!("the diffusion estimator needs a trained model"))?;
            let c = &m.params.config;
            ensure!(
                c.height == spec.system.num_antennas && c.width == spec.system.num_subcarriers,
                "model expects {}x{} channels, sweep uses {}x{}",
                c.height,
                c.width,
                spec.system.num_antennas,
                spec.system.num_subcarriers
            );
        }
        Ok(())
    }
}

pub fn load_model(path: &Path) -> Result<DiffusionModel> {
    let mut r = std::io::BufReader::new(std::fs::File::open(path).with_context(|| format!("opening checkpoint {}", path.display()))?);
    let ck = crate::formats::read_checkpoint(&mut r).with_context(|| format!("reading checkpoint {}", path.display()))?;
    Ok(DiffusionModel { schedule: ck.schedule()?, scale: ck.scale, params: ck.params })
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrialRecord {
    pub value: f64,
    pub trial: usize,
    pub estimator: EstimatorKind,
    pub nmse: f64,
    pub seconds: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ResultRow {
    pub variable: SweepVariable,
    pub value: f64,
    pub estimator: EstimatorKind,
    pub mean_nmse: f64,
    pub std_nmse: f64,
    pub trials: usize,
    pub seconds_per_estimate: f64,
}

impl ResultRow {
    pub fn nmse_db(&self) -> f64 {
        nfwb_core::metrics::to_db(self.mean_nmse)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepOutput {
    pub rows: Vec<ResultRow>,
    pub trials: Vec<TrialRecord>,
}

/// Per-grid-point state shared by all trials.
struct PointContext {
    cfg: SystemConfig,
    pilots: PilotConfig,
    lmmse: Option<LmmseFilter>,
    dictionaries: Option<Vec<PolarDictionary>>,
    sparsity: usize,
}

fn prepare_point(spec: &ExperimentSpec, res: &Resources, g: usize, value: f64) -> Result<PointContext> {
    let (cfg, snr) = spec.point(value)?;
    let noise = snr_to_noise_power(snr, spec.pilot_power)?;
    let pilots = PilotConfig::constant(cfg.num_subcarriers, spec.pilot_power, noise)?;
    let lmmse = if spec.estimators.contains(&EstimatorKind::Lmmse) {
        let seed = derive_seed(spec.seed, &[label("covariance"), g as u64]);
        let samples = generate_channels(&cfg, spec.covariance_samples, seed, Split::Train)?;
        let cov = sample_covariance(samples.iter().map(|h| h.as_vec()), spec.covariance_ridge, CovarianceMode::Sample)?;
        Some(LmmseFilter::new(&cov, noise, spec.pilot_power)?)
    } else {
        None
    };
    let dictionaries = if spec.estimators.iter().any(|e| matches!(e, EstimatorKind::Pomp | EstimatorKind::Psomp)) {
        Some(match &res.dictionary_cache {
            Some(dir) => crate::cache::load_or_build_set(dir, &cfg, &spec.dictionary, spec.frequency_dependent)?,
            None => build_dictionary_set(&cfg, &spec.dictionary, spec.frequency_dependent)?,
        })
    } else {
        None
    };
    let sparsity = spec.sparsity.unwrap_or(2 * cfg.num_paths);
    Ok(PointContext { cfg, pilots, lmmse, dictionaries, sparsity })
}

/// The channel and observation of one trial.
pub fn trial_instance(spec: &ExperimentSpec, cfg: &SystemConfig, pilots: &PilotConfig, g: usize, trial: usize) -> Result<(ChannelMatrix, ChannelMatrix)> {
    let h = generate_channel(cfg, derive_seed(spec.seed, &[label("channel"), g as u64]), trial as u64, true)?;
    let y = observe_with(&h, pilots, &mut stream(spec.seed, &[label("noise"), g as u64, trial as u64]))?;
    Ok((h, y))
}

fn run_estimator(spec: &ExperimentSpec, ctx: &PointContext, res: &Resources, est: EstimatorKind, y: &ChannelMatrix, g: usize, trial: usize) -> Result<ChannelMatrix> {
    let (n, m) = (ctx.cfg.num_antennas, ctx.cfg.num_subcarriers);
    let op = ctx.pilots.operator(n);
    let entries = match est {
        EstimatorKind::Ls => ls_estimate(y.as_vec(), &op)?,
        EstimatorKind::Lmmse => ctx.lmmse.as_ref().expect("prepared").apply(&ls_estimate(y.as_vec(), &op)?)?,
        EstimatorKind::Pomp => return Ok(pomp_estimate(y, ctx.dictionaries.as_ref().expect("prepared"), &ctx.pilots.symbols, ctx.sparsity)?.estimate),
        EstimatorKind::Psomp => return Ok(somp_estimate(y, ctx.dictionaries.as_ref().expect("prepared"), &ctx.pilots.symbols, ctx.sparsity)?.estimate),
        EstimatorKind::Diffusion => {
            let model = res.diffusion.as_ref().expect("checked");
            let seed = derive_seed(spec.seed, &[label("estimator"), label(est.name()), g as u64, trial as u64]);
            return Ok(posterior_estimate(&model.params, y, &ctx.pilots, model.scale, &model.schedule, &spec.sampler, seed)?);
        }
    };
    Ok(ChannelMatrix::from_vec(n, m, entries)?)
}

pub fn run_sweep(spec: &ExperimentSpec, res: &Resources) -> Result<SweepOutput> {
    spec.validate()?;
    res.check(spec)?;
    let mut rows = Vec::new();
    let mut records = Vec::new();
    for (g, &value) in spec.grid.iter().enumerate() {
        let ctx = prepare_point(spec, res, g, value)?;
        let per_trial: Vec<Vec<TrialRecord>> = (0..spec.trials)
            .into_par_iter()
            .map(|trial| -> Result<Vec<TrialRecord>> {
                let (h, y) = trial_instance(spec, &ctx.cfg, &ctx.pilots, g, trial)?;
                spec.estimators
                    .iter()
                    .map(|&est| {
                        let start = Instant::now();
                        let est_h = run_estimator(spec, &ctx, res, est, &y, g, trial)?;
                        let seconds = start.elapsed().as_secs_f64();
                        Ok(TrialRecord { value, trial, estimator: est, nmse: nmse(est_h.as_vec(), h.as_vec())?, seconds })
                    })
                    .collect()
            })
            .collect::<Result<_>>()?;
        for &est in &spec.estimators {
            let vals: Vec<&TrialRecord> = per_trial.iter().flatten().filter(|r| r.estimator == est).collect();
            let n = vals.len() as f64;
            let mean = vals.iter().map(|r| r.nmse).sum::<f64>() / n;
            let var = if vals.len() > 1 { vals.iter().map(|r| (r.nmse - mean).powi(2)).sum::<f64>() / (n - 1.0) } else { 0.0 };
            rows.push(ResultRow {
                variable: spec.variable,
                value,
                estimator: est,
                mean_nmse: mean,
                std_nmse: var.sqrt(),
                trials: vals.len(),
                seconds_per_estimate: vals.iter().map(|r| r.seconds).sum::<f64>() / n,
            });
        }
        records.extend(per_trial.into_iter().flatten());
    }
    Ok(SweepOutput { rows, trials: records })
}

/// NMSE of the first listed estimator on given channels, observed at the
/// first grid point with the same noise streams a sweep trial would use.
pub fn estimate_channels(spec: &ExperimentSpec, res: &Resources, channels: &[ChannelMatrix]) -> Result<Vec<f64>> {
    spec.validate()?;
    res.check(spec)?;
    let ctx = prepare_point(spec, res, 0, spec.grid[0])?;
    let est = spec.estimators[0];
    channels
        .par_iter()
        .enumerate()
        .map(|(i, h)| {
            h.check_shape(&ctx.cfg)?;
            let y = observe_with(h, &ctx.pilots, &mut stream(spec.seed, &[label("noise"), 0, i as u64]))?;
            Ok(nmse(run_estimator(spec, &ctx, res, est, &y, 0, i)?.as_vec(), h.as_vec())?)
        })
        .collect()
}

pub const CSV_HEADER: [&str; 8] = ["variable", "value", "estimator", "mean_nmse", "std_nmse", "nmse_db", "trials", "seconds_per_estimate"];
const META_PREFIX: &str = "# spec.";

/// Comment header with the full spec, then one CSV row per (value, estimator).
pub fn write_sweep_csv(w: &mut impl Write, spec: &ExperimentSpec, rows: &[ResultRow]) -> Result<()> {
    writeln!(w, "# nfwb sweep")?;
    writeln!(w, "# version = {}", env!("CARGO_PKG_VERSION"))?;
    writeln!(w, "# config_hash = {}", spec.config_hash())?;
    for line in spec.to_kv().to_text().lines() {
        writeln!(w, "{META_PREFIX}{line}")?;
    }
    let mut cw = csv::Writer::from_writer(w);
    cw.write_record(CSV_HEADER)?;
    for r in rows {
        cw.write_record([
            r.variable.name().to_string(),
            r.value.to_string(),
            r.estimator.name().to_string(),
            format!("{:.10e}", r.mean_nmse),
            format!("{:.10e}", r.std_nmse),
            format!("{:.4}", r.nmse_db()),
            r.trials.to_string(),
            format!("{:.6e}", r.seconds_per_estimate),
        ])?;
    }
    cw.flush()?;
    Ok(())
}

pub fn write_trials_csv(w: &mut impl Write, trials: &[TrialRecord]) -> Result<()> {
    let mut cw = csv::Writer::from_writer(w);
    cw.write_record(["value", "trial", "estimator", "nmse", "seconds"])?;
    for t in trials {
        cw.write_record([t.value.to_string(), t.trial.to_string(), t.estimator.name().to_string(), format!("{:.17e}", t.nmse), format!("{:.6e}", t.seconds)])?;
    }
    cw.flush()?;
    Ok(())
}

/// Spec and rows parsed back from a sweep CSV.
#[derive(Debug, Clone)]
pub struct SweepFile {
    pub spec: ExperimentSpec,
    pub config_hash: Option<String>,
    pub rows: Vec<csv::StringRecord>,
}

pub fn read_sweep_csv(text: &str, base: &ExperimentSpec) -> Result<SweepFile> {
    let mut kv_text = String::new();
    let mut config_hash = None;
    let mut body = String::new();
    for line in text.lines() {
        if let Some(rest) = line.strip_prefix(META_PREFIX) {
            kv_text.push_str(rest);
            kv_text.push('\n');
        } else if let Some(rest) = line.strip_prefix("# config_hash = ") {
            config_hash = Some(rest.trim().to_string());
        } else if !line.starts_with('#') {
            body.push_str(line);
            body.push('\n');
        }
    }
    let spec = ExperimentSpec::from_kv(&KvConfig::parse(&kv_text)?, base)?;
    let mut rd = csv::Reader::from_reader(body.as_bytes());
    let rows = rd.records().collect::<std::result::Result<Vec<_>, _>>()?;
    Ok(SweepFile { spec, config_hash, rows })
}
