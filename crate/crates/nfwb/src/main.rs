use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use nfwb_core::channel::{ChannelMatrix, SystemConfig};
use nfwb_core::correlation::CorrelationParams;
use nfwb_core::diffusion::{linear_schedule, SamplerConfig, TrainingConfig};
use nfwb_core::metrics::to_db;
use nfwb_core::network::NetworkConfig;
use nfwb_core::observation::{observe, PilotConfig};
use nfwb_core::rng::{derive_seed, label};
use nfwb_core::sparse::PolarGridSpec;

use nfwb::config::{profile, system_from_kv, KvConfig};
use nfwb::corr::{corr_table, write_corr_csv, CorrKind};
use nfwb::dataset::{generate_channels, read_channels, storage_scale, write_channels, Split};
use nfwb::exec::init_thread_pool;
use nfwb::formats::{write_checkpoint, TensorKind};
use nfwb::harness::{parse_list, read_sweep_csv, run_sweep, write_sweep_csv, write_trials_csv, EstimatorKind, ExperimentSpec, Resources, SweepVariable};
use nfwb::training::{fit, write_history_csv};

/// Near-field wideband channel estimation benchmarks.
#[derive(Parser)]
#[command(name = "nfwb", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a channel (or observation) dataset.
    GenData(GenDataArgs),
    /// Train the diffusion denoiser.
    Train(TrainArgs),
    /// Run one estimator over a channel file.
    Estimate(EstimateArgs),
    /// Closed-form vs Monte-Carlo correlation table.
    Corr(CorrArgs),
    /// NMSE sweep over SNR, path count, distance or bandwidth.
    Sweep(SweepArgs),
    /// Summarize a sweep CSV.
    Report(ReportArgs),
}

#[derive(Args, Clone)]
struct SystemArgs {
    /// Starting profile.
    #[arg(long, default_value = "desk")]
    profile: String,
    #[arg(long)]
    antennas: Option<usize>,
    #[arg(long)]
    subcarriers: Option<usize>,
    /// Hz.
    #[arg(long)]
    carrier_freq: Option<f64>,
    /// Hz.
    #[arg(long)]
    bandwidth: Option<f64>,
    #[arg(long)]
    paths: Option<usize>,
    /// Meters.
    #[arg(long)]
    distance_min: Option<f64>,
    /// Meters.
    #[arg(long)]
    distance_max: Option<f64>,
    /// `key = value` file applied after the flags.
    #[arg(long)]
    config: Option<PathBuf>,
}

impl SystemArgs {
    fn kv(&self) -> Result<KvConfig> {
        match &self.config {
            Some(p) => KvConfig::load(p),
            None => Ok(KvConfig::default()),
        }
    }

    fn system(&self) -> Result<SystemConfig> {
        let mut flags = KvConfig::default();
        let opt = |kv: &mut KvConfig, k: &str, v: Option<String>| {
            if let Some(v) = v {
                kv.set(k, v);
            }
        };
        opt(&mut flags, "num_antennas", self.antennas.map(|v| v.to_string()));
        opt(&mut flags, "num_subcarriers", self.subcarriers.map(|v| v.to_string()));
        opt(&mut flags, "carrier_freq", self.carrier_freq.map(|v| v.to_string()));
        opt(&mut flags, "bandwidth", self.bandwidth.map(|v| v.to_string()));
        opt(&mut flags, "num_paths", self.paths.map(|v| v.to_string()));
        opt(&mut flags, "distance_min", self.distance_min.map(|v| v.to_string()));
        opt(&mut flags, "distance_max", self.distance_max.map(|v| v.to_string()));
        let base = system_from_kv(&flags, profile(&self.profile)?)?;
        system_from_kv(&self.kv()?, base)
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum SplitArg {
    Train,
    Val,
    Test,
}

impl From<SplitArg> for Split {
    fn from(s: SplitArg) -> Self {
        match s {
            SplitArg::Train => Split::Train,
            SplitArg::Val => Split::Validation,
            SplitArg::Test => Split::Test,
        }
    }
}

#[derive(Args)]
struct GenDataArgs {
    #[command(flatten)]
    system: SystemArgs,
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = 1000)]
    count: usize,
    #[arg(long, value_enum, default_value = "train")]
    split: SplitArg,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Also write noisy observations at this SNR (dB) to this path.
    #[arg(long, requires = "snr_db")]
    observations: Option<PathBuf>,
    #[arg(long)]
    snr_db: Option<f64>,
}

#[derive(Args)]
struct TrainArgs {
    #[arg(long)]
    train: PathBuf,
    #[arg(long)]
    val: Option<PathBuf>,
    /// Checkpoint output.
    #[arg(long)]
    out: PathBuf,
    /// Loss history CSV output.
    #[arg(long)]
    history: Option<PathBuf>,
    #[arg(long, default_value_t = 32)]
    hidden: usize,
    #[arg(long, default_value_t = 3)]
    blocks: usize,
    #[arg(long, default_value_t = 100)]
    epochs: usize,
    #[arg(long, default_value_t = 128)]
    batch_size: usize,
    #[arg(long, default_value_t = 5e-4)]
    learning_rate: f64,
    /// Global gradient-norm clip; 0 disables clipping.
    #[arg(long, default_value_t = 1.0)]
    clip_norm: f64,
    #[arg(long, default_value_t = 100)]
    steps: usize,
    #[arg(long, default_value_t = 1e-4)]
    beta_start: f64,
    #[arg(long, default_value_t = 0.2)]
    beta_end: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// `key = value` file applied after the flags.
    #[arg(long)]
    config: Option<PathBuf>,
}

#[derive(Args, Clone)]
struct EstimatorArgs {
    /// Pilot SNR in dB.
    #[arg(long, default_value_t = 10.0)]
    snr_db: f64,
    #[arg(long, default_value_t = 1.0)]
    pilot_power: f64,
    #[arg(long)]
    checkpoint: Option<PathBuf>,
    #[arg(long, default_value_t = 1.0)]
    likelihood_weight: f64,
    /// Dictionary angles; defaults to twice the antenna count.
    #[arg(long)]
    dict_angles: Option<usize>,
    #[arg(long, default_value_t = 3)]
    dict_rings: usize,
    #[arg(long, default_value_t = 1.2)]
    dict_beta: f64,
    /// Use the carrier-frequency dictionary on every subcarrier.
    #[arg(long)]
    carrier_dictionary: bool,
    /// Greedy iterations; defaults to twice the path count.
    #[arg(long)]
    sparsity: Option<usize>,
    /// Training samples for the LMMSE covariance.
    #[arg(long, default_value_t = 5000)]
    covariance_samples: usize,
    #[arg(long, default_value_t = 1e-6)]
    covariance_ridge: f64,
    /// Directory for cached dictionaries.
    #[arg(long)]
    dict_cache: Option<PathBuf>,
}

impl EstimatorArgs {
    fn apply(&self, spec: &mut ExperimentSpec) {
        spec.snr_db = self.snr_db;
        spec.pilot_power = self.pilot_power;
        spec.checkpoint = self.checkpoint.clone();
        spec.sampler = SamplerConfig { likelihood_weight: self.likelihood_weight };
        spec.dictionary = PolarGridSpec {
            num_angles: self.dict_angles.unwrap_or(2 * spec.system.num_antennas),
            num_rings: self.dict_rings,
            beta: self.dict_beta,
        };
        spec.frequency_dependent = !self.carrier_dictionary;
        spec.sparsity = self.sparsity;
        spec.covariance_samples = self.covariance_samples;
        spec.covariance_ridge = self.covariance_ridge;
    }
}

#[derive(Args)]
struct EstimateArgs {
    #[command(flatten)]
    system: SystemArgs,
    #[command(flatten)]
    est: EstimatorArgs,
    /// Channel file (NFWC); channels are observed at `--snr-db`.
    #[arg(long)]
    channels: PathBuf,
    #[arg(long, default_value = "ls")]
    estimator: String,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Per-channel CSV output; stdout if omitted.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Clone, Copy, ValueEnum)]
enum CorrKindArg {
    Antenna,
    Subcarrier,
}

#[derive(Args)]
struct CorrArgs {
    #[command(flatten)]
    system: SystemArgs,
    #[arg(long, value_enum, default_value = "antenna")]
    kind: CorrKindArg,
    /// Antenna indices, comma separated.
    #[arg(long, default_value = "0,16,32,64,100")]
    n: String,
    /// Lags, comma separated.
    #[arg(long, default_value = "1,2,4,8")]
    lag: String,
    #[arg(long, default_value_t = 1_000_000)]
    draws: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Radians.
    #[arg(long, default_value_t = std::f64::consts::PI / 6.0)]
    mean_angle: f64,
    /// Radians.
    #[arg(long, default_value_t = 0.1)]
    angle_std: f64,
    /// Meters.
    #[arg(long, default_value_t = 10.0)]
    mean_distance: f64,
    /// Meters.
    #[arg(long, default_value_t = 1.0)]
    distance_std: f64,
    #[arg(long, default_value_t = 1.0)]
    gain_var: f64,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct SweepArgs {
    #[command(flatten)]
    system: SystemArgs,
    #[command(flatten)]
    est: EstimatorArgs,
    /// snr, paths, distance or bandwidth.
    #[arg(long, default_value = "snr")]
    variable: String,
    /// Grid values, comma separated.
    #[arg(long, default_value = "0,5,10,15,20")]
    grid: String,
    #[arg(long, default_value_t = 100)]
    trials: usize,
    /// Comma separated subset of ls,lmmse,pomp,psomp,diffusion.
    #[arg(long, default_value = "ls,lmmse,pomp,psomp")]
    estimators: String,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Aggregate CSV output; stdout if omitted.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Per-trial CSV output.
    #[arg(long)]
    trials_out: Option<PathBuf>,
    /// Re-run the experiment recorded in an earlier sweep CSV.
    #[arg(long, conflicts_with = "config")]
    rerun: Option<PathBuf>,
}

#[derive(Args)]
struct ReportArgs {
    /// Sweep CSV.
    input: PathBuf,
}

fn output(path: Option<&Path>) -> Result<Box<dyn Write>> {
    Ok(match path {
        Some(p) => Box::new(BufWriter::new(File::create(p).with_context(|| format!("creating {}", p.display()))?)),
        None => Box::new(BufWriter::new(io::stdout().lock())),
    })
}

fn gen_data(a: GenDataArgs) -> Result<()> {
    let cfg = a.system.system()?;
    let split = Split::from(a.split);
    let channels = generate_channels(&cfg, a.count, a.seed, split)?;
    let scale = storage_scale(&channels)?;
    write_channels(&a.out, TensorKind::Channels, &channels, &cfg, scale)?;
    if let (Some(path), Some(snr)) = (&a.observations, a.snr_db) {
        let pilots = PilotConfig::from_snr_db(cfg.num_subcarriers, snr)?;
        let obs_seed = derive_seed(split.seed(a.seed), &[label("observe")]);
        let ys = channels.iter().enumerate().map(|(i, h)| observe(h, &pilots, derive_seed(obs_seed, &[i as u64]))).collect::<nfwb_core::Result<Vec<_>>>()?;
        write_channels(path, TensorKind::Observations, &ys, &cfg, scale)?;
    }
    eprintln!("wrote {} {} channels ({}x{}) to {}", a.count, split.name(), cfg.num_antennas, cfg.num_subcarriers, a.out.display());
    Ok(())
}

fn train_cmd(a: TrainArgs) -> Result<()> {
    let train_set = read_channels(&a.train, TensorKind::Channels)?;
    let val_set = match &a.val {
        Some(p) => read_channels(p, TensorKind::Channels)?,
        None => Vec::new(),
    };
    let Some(first) = train_set.first() else { bail!("{} holds no channels", a.train.display()) };
    let mut hidden = a.hidden;
    let mut blocks = a.blocks;
    let mut steps = a.steps;
    let (mut beta_start, mut beta_end) = (a.beta_start, a.beta_end);
    let mut clip = a.clip_norm;
    let mut tc = TrainingConfig { epochs: a.epochs, batch_size: a.batch_size, learning_rate: a.learning_rate, seed: a.seed, ..TrainingConfig::default() };
    if let Some(p) = &a.config {
        let kv = KvConfig::load(p)?;
        kv.apply("hidden", &mut hidden)?;
        kv.apply("blocks", &mut blocks)?;
        kv.apply("steps", &mut steps)?;
        kv.apply("beta_start", &mut beta_start)?;
        kv.apply("beta_end", &mut beta_end)?;
        kv.apply("clip_norm", &mut clip)?;
        kv.apply("epochs", &mut tc.epochs)?;
        kv.apply("batch_size", &mut tc.batch_size)?;
        kv.apply("learning_rate", &mut tc.learning_rate)?;
        kv.apply("seed", &mut tc.seed)?;
    }
    tc.clip_norm = (clip > 0.0).then_some(clip);
    let net = NetworkConfig::new(hidden, blocks, first.num_antennas(), first.num_subcarriers());
    let schedule = linear_schedule(steps, beta_start, beta_end)?;
    let (ck, report) = fit(&train_set, &val_set, net, &schedule, &tc, &mut |r| match r.val_loss {
        Some(v) => eprintln!("epoch {:>4}  train {:.5}  val {:.5}", r.epoch, r.train_loss, v),
        None => eprintln!("epoch {:>4}  train {:.5}", r.epoch, r.train_loss),
    })?;
    let mut w = BufWriter::new(File::create(&a.out).with_context(|| format!("creating {}", a.out.display()))?);
    write_checkpoint(&mut w, &ck)?;
    w.flush()?;
    if let Some(p) = &a.history {
        write_history_csv(&mut output(Some(p))?, &report)?;
    }
    eprintln!("initial loss {:.5}, kept epoch {}", report.initial_loss, report.best_epoch);
    Ok(())
}

fn estimate_cmd(a: EstimateArgs) -> Result<()> {
    let cfg = a.system.system()?;
    let channels: Vec<ChannelMatrix> = read_channels(&a.channels, TensorKind::Channels)?;
    let estimator = EstimatorKind::parse(&a.estimator)?;
    // The file plays the role of the test set: one grid point, one trial per channel.
    let mut spec = ExperimentSpec::new(SweepVariable::Snr, vec![a.est.snr_db], channels.len().max(1), vec![estimator], cfg);
    a.est.apply(&mut spec);
    spec.seed = a.seed;
    let mut res = Resources::load(&spec)?;
    res.dictionary_cache = a.est.dict_cache.clone();
    let rows = nfwb::harness::estimate_channels(&spec, &res, &channels)?;
    let mut cw = csv::Writer::from_writer(output(a.out.as_deref())?);
    cw.write_record(["index", "estimator", "nmse", "nmse_db"])?;
    for (i, v) in rows.iter().enumerate() {
        cw.write_record([i.to_string(), estimator.name().to_string(), format!("{v:.10e}"), format!("{:.4}", to_db(*v))])?;
    }
    cw.flush()?;
    Ok(())
}

fn parse_indices(s: &str) -> Result<Vec<usize>> {
    s.split(',').map(str::trim).filter(|t| !t.is_empty()).map(|t| t.parse().with_context(|| format!("bad index `{t}`"))).collect()
}

fn corr_cmd(a: CorrArgs) -> Result<()> {
    let cfg = a.system.system()?;
    let p = CorrelationParams { mean_angle: a.mean_angle, angle_std: a.angle_std, mean_distance: a.mean_distance, distance_std: a.distance_std, gain_var: a.gain_var };
    let kind = match a.kind {
        CorrKindArg::Antenna => CorrKind::Antenna,
        CorrKindArg::Subcarrier => CorrKind::Subcarrier,
    };
    let ns = parse_indices(&a.n)?;
    let lags = parse_indices(&a.lag)?;
    let points: Vec<(usize, usize)> = ns.iter().flat_map(|&n| lags.iter().map(move |&l| (n, l))).collect();
    let rows = corr_table(kind, &points, &p, &cfg, a.draws, a.seed)?;
    write_corr_csv(&mut output(a.out.as_deref())?, &rows)
}

fn sweep_cmd(a: SweepArgs) -> Result<()> {
    let spec = match &a.rerun {
        Some(path) => {
            let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
            let base = ExperimentSpec::new(SweepVariable::Snr, vec![0.0], 1, vec![EstimatorKind::Ls], SystemConfig::desk_scale());
            read_sweep_csv(&text, &base)?.spec
        }
        None => {
            let cfg = a.system.system()?;
            let mut spec = ExperimentSpec::new(SweepVariable::parse(&a.variable)?, parse_list(&a.grid)?, a.trials, EstimatorKind::parse_list(&a.estimators)?, cfg);
            a.est.apply(&mut spec);
            spec.seed = a.seed;
            ExperimentSpec::from_kv(&a.system.kv()?, &spec)?
        }
    };
    spec.validate()?;
    let mut res = Resources::load(&spec)?;
    res.dictionary_cache = a.est.dict_cache.clone();
    let out = run_sweep(&spec, &res)?;
    let mut w = output(a.out.as_deref())?;
    write_sweep_csv(&mut w, &spec, &out.rows)?;
    w.flush()?;
    if let Some(p) = &a.trials_out {
        write_trials_csv(&mut output(Some(p))?, &out.trials)?;
    }
    Ok(())
}

fn report_cmd(a: ReportArgs) -> Result<()> {
    let text = std::fs::read_to_string(&a.input).with_context(|| format!("reading {}", a.input.display()))?;
    let base = ExperimentSpec::new(SweepVariable::Snr, vec![0.0], 1, vec![EstimatorKind::Ls], SystemConfig::desk_scale());
    let file = read_sweep_csv(&text, &base)?;
    let hash_ok = file.config_hash.as_deref() == Some(file.spec.config_hash().as_str());
    let mut estimators: Vec<String> = Vec::new();
    let mut values: Vec<String> = Vec::new();
    for r in &file.rows {
        if !estimators.iter().any(|e| e == &r[2]) {
            estimators.push(r[2].to_string());
        }
        if !values.iter().any(|v| v == &r[1]) {
            values.push(r[1].to_string());
        }
    }
    let mut out = io::stdout().lock();
    writeln!(out, "{} sweep, {} trials per point, seed {}, config hash {}", file.spec.variable.name(), file.spec.trials, file.spec.seed, if hash_ok { "ok" } else { "MISMATCH" })?;
    write!(out, "{:>12}", file.spec.variable.name())?;
    for e in &estimators {
        write!(out, "{e:>12}")?;
    }
    writeln!(out, "   (NMSE, dB)")?;
    for v in &values {
        write!(out, "{v:>12}")?;
        for e in &estimators {
            let cell = file.rows.iter().find(|r| &r[1] == v && &r[2] == e).map(|r| r[5].to_string()).unwrap_or_else(|| "-".into());
            write!(out, "{cell:>12}")?;
        }
        writeln!(out)?;
    }
    if !hash_ok {
        bail!("metadata hash does not match the embedded configuration");
    }
    Ok(())
}

fn main() -> Result<()> {
    init_thread_pool()?;
    match Cli::parse().command {
        Command::GenData(a) => gen_data(a),
        Command::Train(a) => train_cmd(a),
        Command::Estimate(a) => estimate_cmd(a),
        Command::Corr(a) => corr_cmd(a),
        Command::Sweep(a) => sweep_cmd(a),
        Command::Report(a) => report_cmd(a),
    }
}
