//! Channel dataset generation with disjoint seed streams per split.

use std::fs::File;
use std::io::{BufReader, BufWriter};
use std::path::Path;

use anyhow::{bail, Context, Result};
use nfwb_core::channel::{dataset_scale, from_real_tensor, generate_channel, to_real_tensor, ChannelMatrix, RealChannelTensor, SystemConfig};
use nfwb_core::rng::{derive_seed, label};
use rayon::prelude::*;

use crate::formats::{read_tensor_batch, write_tensor_batch, TensorBatch, TensorKind};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Split {
    Train,
    Validation,
    Test,
}

impl Split {
    pub fn name(self) -> &'static str {
        match self {
            Self::Train => "train",
            Self::Validation => "val",
            Self::Test => "test",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        Ok(match s {
            "train" => Self::Train,
            "val" | "validation" => Self::Validation,
            "test" => Self::Test,
            other => bail!("unknown split `{other}`"),
        })
    }

    pub fn seed(self, master: u64) -> u64 {
        derive_seed(master, &[label("split"), label(self.name())])
    }
}

/// `count` power-normalized realizations; item `i` depends only on
/// `(cfg, seed, split, i)`.
pub fn generate_channels(cfg: &SystemConfig, count: usize, seed: u64, split: Split) -> Result<Vec<ChannelMatrix>> {
    cfg.validate()?;
    let s = split.seed(seed);
    let out: nfwb_core::Result<Vec<_>> = (0..count).into_par_iter().map(|i| generate_channel(cfg, s, i as u64, true)).collect();
    Ok(out?)
}

/// Plane tensors divided by `scale`.
pub fn normalized_planes(channels: &[ChannelMatrix], scale: f64) -> Result<Vec<Vec<f64>>> {
    channels.iter().map(|h| Ok(to_real_tensor(h, scale)?.planes)).collect()
}

/// Scale used when writing: the dataset's empirical entry std, or 1 for an
/// empty batch.
pub fn storage_scale(channels: &[ChannelMatrix]) -> Result<f64> {
    if channels.is_empty() {
        return Ok(1.0);
    }
    Ok(dataset_scale(channels)?)
}

pub fn write_channels(path: &Path, kind: TensorKind, channels: &[ChannelMatrix], cfg: &SystemConfig, scale: f64) -> Result<()> {
    let batch = TensorBatch { kind, rows: cfg.num_antennas, cols: cfg.num_subcarriers, scale, items: normalized_planes(channels, scale)? };
    let mut w = BufWriter::new(File::create(path).with_context(|| format!("creating {}", path.display()))?);
    write_tensor_batch(&mut w, &batch)?;
    Ok(())
}

pub fn read_batch(path: &Path, kind: TensorKind) -> Result<TensorBatch> {
    let mut r = BufReader::new(File::open(path).with_context(|| format!("opening {}", path.display()))?);
    read_tensor_batch(&mut r, kind).with_context(|| format!("reading {}", path.display()))
}

/// De-normalized complex channels from a tensor file.
pub fn read_channels(path: &Path, kind: TensorKind) -> Result<Vec<ChannelMatrix>> {
    let b = read_batch(path, kind)?;
    b.items
        .into_iter()
        .map(|planes| Ok(from_real_tensor(&RealChannelTensor::from_planes(b.rows, b.cols, planes, b.scale)?)))
        .collect()
}
