//! On-disk cache of polar dictionaries in the `NFWD` tensor format.
//!
//! One file per dictionary; each item is one atom as an `N x 1` plane
//! tensor and the header scale slot holds the frequency. File names are a
//! hash of everything the atoms depend on. Atoms are stored as f32, so a
//! cached dictionary matches a freshly built one to about 1e-7.

use std::fs::File;
use std::io::{BufReader, BufWriter};
use std::path::{Path, PathBuf};

use anyhow::{ensure, Context, Result};
use nfwb_core::channel::SystemConfig;
use nfwb_core::observation::{complex_to_planes, planes_to_complex};
use nfwb_core::sparse::{build_polar_dictionary, polar_grid, PolarDictionary, PolarGridSpec};
use sha2::{Digest, Sha256};

use crate::formats::{read_tensor_batch, write_tensor_batch, TensorBatch, TensorKind};

pub fn cache_key(cfg: &SystemConfig, frequency: f64, spec: &PolarGridSpec) -> String {
    let text = format!(
        "N={} f={} d={} c={} angles={} rings={} beta={}",
        cfg.num_antennas, frequency, cfg.antenna_spacing, cfg.speed_of_light, spec.num_angles, spec.num_rings, spec.beta
    );
    hex::encode(&Sha256::digest(text.as_bytes())[..12])
}

pub fn cache_path(dir: &Path, cfg: &SystemConfig, frequency: f64, spec: &PolarGridSpec) -> PathBuf {
    dir.join(format!("dict-{}.nfwd", cache_key(cfg, frequency, spec)))
}

pub fn write_dictionary(path: &Path, dict: &PolarDictionary) -> Result<()> {
    let n = dict.num_antennas;
    let batch = TensorBatch {
        kind: TensorKind::Dictionary,
        rows: n,
        cols: 1,
        scale: dict.frequency,
        items: (0..dict.len()).map(|q| complex_to_planes(dict.atom(q), n, 1)).collect(),
    };
    let mut w = BufWriter::new(File::create(path).with_context(|| format!("creating {}", path.display()))?);
    write_tensor_batch(&mut w, &batch)?;
    Ok(())
}

pub fn read_dictionary(path: &Path, cfg: &SystemConfig, spec: &PolarGridSpec) -> Result<PolarDictionary> {
    let mut r = BufReader::new(File::open(path).with_context(|| format!("opening {}", path.display()))?);
    let batch = read_tensor_batch(&mut r, TensorKind::Dictionary)?;
    let grid = polar_grid(cfg, spec)?;
    ensure!(batch.rows == cfg.num_antennas && batch.cols == 1, "{}: dictionary shape does not match", path.display());
    ensure!(batch.items.len() == grid.len(), "{}: {} atoms, grid has {}", path.display(), batch.items.len(), grid.len());
    let atoms = batch.items.iter().flat_map(|p| planes_to_complex(p, cfg.num_antennas, 1)).collect();
    Ok(PolarDictionary::from_atoms(cfg.num_antennas, batch.scale, *spec, grid, atoms)?)
}

/// Reads the dictionary from `dir` if present, otherwise builds and stores it.
pub fn load_or_build(dir: &Path, cfg: &SystemConfig, frequency: f64, spec: &PolarGridSpec) -> Result<PolarDictionary> {
    let path = cache_path(dir, cfg, frequency, spec);
    if path.exists() {
        return read_dictionary(&path, cfg, spec);
    }
    let dict = build_polar_dictionary(cfg, frequency, spec)?;
    std::fs::create_dir_all(dir)?;
    write_dictionary(&path, &dict)?;
    Ok(dict)
}

/// Cached counterpart of `build_dictionary_set`.
pub fn load_or_build_set(dir: &Path, cfg: &SystemConfig, spec: &PolarGridSpec, frequency_dependent: bool) -> Result<Vec<PolarDictionary>> {
    cfg.subcarrier_frequencies()
        .into_iter()
        .map(|f| load_or_build(dir, cfg, if frequency_dependent { f } else { cfg.carrier_freq }, spec))
        .collect()
}
