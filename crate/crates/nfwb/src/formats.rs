//! Little-endian binary containers.
//!
//! Tensor batches (`NFWC` channels, `NFWO` observations, `NFWD` dictionaries):
//!
//! ```text
//! magic [u8; 4] | version u32 | rows u32 | cols u32 | count u32 | scale f64
//! count x (2 x rows x cols) f32, each item in plane layout
//! ```
//!
//! Checkpoints (`NFWN`):
//!
//! ```text
//! magic | version u32
//! in_channels hidden out_channels blocks time_dim height width : u32
//! steps u32 | beta_start f64 | beta_end f64 | scale f64
//! slice count u32, then per slice: name length u32, name bytes, value count u32, f32 values
//! ```

use std::io::{self, Read, Write};

use nfwb_core::diffusion::{linear_schedule, NoiseSchedule};
use nfwb_core::network::{DenoiserParams, NetworkConfig};

pub const VERSION: u32 = 1;

#[derive(Debug, thiserror::Error)]
pub enum FormatError {
    #[error(transparent)]
    Io(#[from] io::Error),
    #[error("bad magic: expected {expected:?}, found {found:?}")]
    Magic { expected: [u8; 4], found: [u8; 4] },
    #[error("unsupported format version {0}")]
    Version(u32),
    #[error("malformed file: {0}")]
    Malformed(String),
    #[error(transparent)]
    Core(#[from] nfwb_core::Error),
}

pub type Result<T> = std::result::Result<T, FormatError>;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TensorKind {
    Channels,
    Observations,
    Dictionary,
}

impl TensorKind {
    pub fn magic(self) -> [u8; 4] {
        match self {
            Self::Channels => *b"NFWC",
            Self::Observations => *b"NFWO",
            Self::Dictionary => *b"NFWD",
        }
    }
}

/// A batch of `2 x rows x cols` plane tensors sharing one scale.
#[derive(Debug, Clone, PartialEq)]
pub struct TensorBatch {
    pub kind: TensorKind,
    pub rows: usize,
    pub cols: usize,
    pub scale: f64,
    pub items: Vec<Vec<f64>>,
}

impl TensorBatch {
    pub fn item_len(&self) -> usize {
        2 * self.rows * self.cols
    }
}

fn put_u32(w: &mut impl Write, v: usize) -> Result<()> {
    let v = u32::try_from(v).map_err(|_| FormatError::Malformed(format!("{v} does not fit in u32")))?;
    w.write_all(&v.to_le_bytes())?;
    Ok(())
}

fn get_u32(r: &mut impl Read) -> Result<usize> {
    let mut b = [0; 4];
    r.read_exact(&mut b)?;
    Ok(u32::from_le_bytes(b) as usize)
}

fn get_f64(r: &mut impl Read) -> Result<f64> {
    let mut b = [0; 8];
    r.read_exact(&mut b)?;
    Ok(f64::from_le_bytes(b))
}

fn get_f32s(r: &mut impl Read, count: usize) -> Result<Vec<f64>> {
    let mut buf = vec![0u8; 4 * count];
    r.read_exact(&mut buf)?;
    Ok(buf.chunks_exact(4).map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]) as f64).collect())
}

fn put_f32s(w: &mut impl Write, values: &[f64]) -> Result<()> {
    let mut buf = Vec::with_capacity(4 * values.len());
    for &v in values {
        buf.extend_from_slice(&(v as f32).to_le_bytes());
    }
    w.write_all(&buf)?;
    Ok(())
}

fn check_magic(r: &mut impl Read, expected: [u8; 4]) -> Result<()> {
    let mut found = [0; 4];
    r.read_exact(&mut found)?;
    if found != expected {
        return Err(FormatError::Magic { expected, found });
    }
    let version = get_u32(r)? as u32;
    if version != VERSION {
        return Err(FormatError::Version(version));
    }
    Ok(())
}

pub fn write_tensor_batch(w: &mut impl Write, batch: &TensorBatch) -> Result<()> {
    w.write_all(&batch.kind.magic())?;
    put_u32(w, VERSION as usize)?;
    put_u32(w, batch.rows)?;
    put_u32(w, batch.cols)?;
    put_u32(w, batch.items.len())?;
    w.write_all(&batch.scale.to_le_bytes())?;
    for item in &batch.items {
        if item.len() != batch.item_len() {
            return Err(FormatError::Malformed(format!("item has {} entries, expected {}", item.len(), batch.item_len())));
        }
        put_f32s(w, item)?;
    }
    Ok(())
}

pub fn read_tensor_batch(r: &mut impl Read, kind: TensorKind) -> Result<TensorBatch> {
    check_magic(r, kind.magic())?;
    let rows = get_u32(r)?;
    let cols = get_u32(r)?;
    let count = get_u32(r)?;
    let scale = get_f64(r)?;
    let len = 2 * rows * cols;
    let items = (0..count).map(|_| get_f32s(r, len)).collect::<Result<_>>()?;
    Ok(TensorBatch { kind, rows, cols, scale, items })
}

/// Network, schedule and data scale stored with the weights.
#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub params: DenoiserParams,
    pub steps: usize,
    pub beta_start: f64,
    pub beta_end: f64,
    pub scale: f64,
}

impl Checkpoint {
    pub fn schedule(&self) -> Result<NoiseSchedule> {
        Ok(linear_schedule(self.steps, self.beta_start, self.beta_end)?)
    }
}

pub fn write_checkpoint(w: &mut impl Write, ck: &Checkpoint) -> Result<()> {
    w.write_all(b"NFWN")?;
    put_u32(w, VERSION as usize)?;
    let c = &ck.params.config;
    for v in [c.in_channels, c.hidden, c.out_channels, c.blocks, c.time_dim, c.height, c.width] {
        put_u32(w, v)?;
    }
    put_u32(w, ck.steps)?;
    for v in [ck.beta_start, ck.beta_end, ck.scale] {
        w.write_all(&v.to_le_bytes())?;
    }
    put_u32(w, ck.params.layout.len())?;
    for s in &ck.params.layout {
        put_u32(w, s.name.len())?;
        w.write_all(s.name.as_bytes())?;
        put_u32(w, s.len())?;
        put_f32s(w, &ck.params.values[s.range()])?;
    }
    Ok(())
}

pub fn read_checkpoint(r: &mut impl Read) -> Result<Checkpoint> {
    check_magic(r, *b"NFWN")?;
    let mut f = [0usize; 7];
    for v in &mut f {
        *v = get_u32(r)?;
    }
    let config = NetworkConfig { in_channels: f[0], hidden: f[1], out_channels: f[2], blocks: f[3], time_dim: f[4], height: f[5], width: f[6] };
    let steps = get_u32(r)?;
    let beta_start = get_f64(r)?;
    let beta_end = get_f64(r)?;
    let scale = get_f64(r)?;
    let mut params = DenoiserParams::zeros(config)?;
    let count = get_u32(r)?;
    if count != params.layout.len() {
        return Err(FormatError::Malformed(format!("{count} slices, expected {}", params.layout.len())));
    }
    for _ in 0..count {
        let len = get_u32(r)?;
        let mut name = vec![0u8; len];
        r.read_exact(&mut name)?;
        let name = String::from_utf8(name).map_err(|_| FormatError::Malformed("slice name is not UTF-8".into()))?;
        let n = get_u32(r)?;
        let values = get_f32s(r, n)?;
        let slot = params.slice_mut(&name).map_err(|_| FormatError::Malformed(format!("unknown slice {name}")))?;
        if slot.len() != n {
            return Err(FormatError::Malformed(format!("slice {name} has {n} values, expected {}", slot.len())));
        }
        slot.copy_from_slice(&values);
    }
    Ok(Checkpoint { params, steps, beta_start, beta_end, scale })
}

/// Rounds every parameter through `f32`, matching what a checkpoint stores.
pub fn quantize(params: &DenoiserParams) -> DenoiserParams {
    let mut p = params.clone();
    p.values.iter_mut().for_each(|v| *v = *v as f32 as f64);
    p
}
