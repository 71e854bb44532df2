//! Flat `key = value` configuration files.
//!
//! Blank lines and lines starting with `#` are ignored. Keys are unique;
//! values are taken verbatim after trimming.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::str::FromStr;

use anyhow::{anyhow, bail, Context, Result};
use nfwb_core::channel::SystemConfig;

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct KvConfig {
    entries: BTreeMap<String, String>,
}

impl KvConfig {
    pub fn parse(text: &str) -> Result<Self> {
        let mut entries = BTreeMap::new();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (k, v) = line.split_once('=').ok_or_else(|| anyhow!("line {}: expected `key = value`", i + 1))?;
            let key = k.trim();
            if key.is_empty() {
                bail!("line {}: empty key", i + 1);
            }
            if entries.insert(key.to_string(), v.trim().to_string()).is_some() {
                bail!("line {}: duplicate key `{key}`", i + 1);
            }
        }
        Ok(Self { entries })
    }

    pub fn load(path: &std::path::Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        Self::parse(&text).with_context(|| format!("parsing {}", path.display()))
    }

    pub fn get(&self, key: &str) -> Option<&str> {
        self.entries.get(key).map(String::as_str)
    }

    pub fn set(&mut self, key: impl Into<String>, value: impl ToString) {
        self.entries.insert(key.into(), value.to_string());
    }

    pub fn keys(&self) -> impl Iterator<Item = &str> {
        self.entries.keys().map(String::as_str)
    }

    pub fn parsed<T: FromStr>(&self, key: &str) -> Result<Option<T>>
    where
        T::Err: std::fmt::Display,
    {
        self.get(key).map(|v| v.parse::<T>().map_err(|e| anyhow!("key `{key}`: cannot parse `{v}`: {e}"))).transpose()
    }

    /// Overwrites `slot` when `key` is present.
    pub fn apply<T: FromStr>(&self, key: &str, slot: &mut T) -> Result<()>
    where
        T::Err: std::fmt::Display,
    {
        if let Some(v) = self.parsed(key)? {
            *slot = v;
        }
        Ok(())
    }

    pub fn to_text(&self) -> String {
        let mut out = String::new();
        for (k, v) in &self.entries {
            let _ = writeln!(out, "{k} = {v}");
        }
        out
    }
}

pub const SYSTEM_KEYS: [&str; 11] = [
    "num_antennas",
    "num_subcarriers",
    "carrier_freq",
    "bandwidth",
    "antenna_spacing",
    "num_paths",
    "angle_min",
    "angle_max",
    "distance_min",
    "distance_max",
    "speed_of_light",
];

/// Named starting points: `desk` (32 x 16) and `full` (128 x 64).
pub fn profile(name: &str) -> Result<SystemConfig> {
    match name {
        "desk" => Ok(SystemConfig::desk_scale()),
        "full" => Ok(SystemConfig::full_scale()),
        other => bail!("unknown profile `{other}` (expected desk or full)"),
    }
}

/// Applies any system keys in `kv` on top of `base`. Changing the carrier
/// without giving `antenna_spacing` keeps half-wavelength spacing.
pub fn system_from_kv(kv: &KvConfig, base: SystemConfig) -> Result<SystemConfig> {
    let mut c = base;
    kv.apply("num_antennas", &mut c.num_antennas)?;
    kv.apply("num_subcarriers", &mut c.num_subcarriers)?;
    kv.apply("speed_of_light", &mut c.speed_of_light)?;
    if let Some(fc) = kv.parsed::<f64>("carrier_freq")? {
        c.carrier_freq = fc;
        c.antenna_spacing = c.carrier_wavelength() / 2.0;
    }
    kv.apply("bandwidth", &mut c.bandwidth)?;
    kv.apply("antenna_spacing", &mut c.antenna_spacing)?;
    kv.apply("num_paths", &mut c.num_paths)?;
    kv.apply("angle_min", &mut c.angle_range.0)?;
    kv.apply("angle_max", &mut c.angle_range.1)?;
    kv.apply("distance_min", &mut c.distance_range.0)?;
    kv.apply("distance_max", &mut c.distance_range.1)?;
    c.validate()?;
    Ok(c)
}

pub fn system_to_kv(c: &SystemConfig, kv: &mut KvConfig) {
    kv.set("num_antennas", c.num_antennas);
    kv.set("num_subcarriers", c.num_subcarriers);
    kv.set("carrier_freq", c.carrier_freq);
    kv.set("bandwidth", c.bandwidth);
    kv.set("antenna_spacing", c.antenna_spacing);
    kv.set("num_paths", c.num_paths);
    kv.set("angle_min", c.angle_range.0);
    kv.set("angle_max", c.angle_range.1);
    kv.set("distance_min", c.distance_range.0);
    kv.set("distance_max", c.distance_range.1);
    kv.set("speed_of_light", c.speed_of_light);
}
