use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use rand::Rng;

use super::{NetworkConfig, BRANCHES, SPATIAL_KERNEL};
use crate::error::{invalid, shape};
use crate::Result;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SliceInfo {
    pub name: String,
    pub offset: usize,
    pub shape: Vec<usize>,
    /// Fan-in used for initialization; `None` marks a bias (zero init).
    pub fan_in: Option<usize>,
}

impl SliceInfo {
    pub fn len(&self) -> usize {
        self.shape.iter().product()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn range(&self) -> core::ops::Range<usize> {
        self.offset..self.offset + self.len()
    }
}

/// Flat parameter vector with a named layout.
#[derive(Debug, Clone, PartialEq)]
pub struct DenoiserParams {
    pub config: NetworkConfig,
    pub layout: Vec<SliceInfo>,
    pub values: Vec<f64>,
    slots: Slots,
}

/// Offsets of one block's slices into the flat vector.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) struct BlockSlots {
    pub branch_w: [usize; 3],
    pub branch_b: [usize; 3],
    pub attn_w: usize,
    pub attn_b: usize,
    pub dw_w: usize,
    pub dw_b: usize,
    pub pw_w: usize,
    pub pw_b: usize,
    pub comp_w: usize,
    pub comp_b: usize,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub(crate) struct Slots {
    pub embed_w: usize,
    pub embed_b: usize,
    pub blocks: Vec<BlockSlots>,
    pub time_hidden_w: usize,
    pub time_hidden_b: usize,
    pub time_out_w: usize,
    pub time_out_b: usize,
    pub output_w: usize,
    pub output_b: usize,
}

pub(crate) fn build_layout(cfg: &NetworkConfig) -> (Vec<SliceInfo>, Slots) {
    let mut layout = Vec::new();
    let mut offset = 0;
    let mut add = |name: String, shape: Vec<usize>, fan_in: Option<usize>| {
        let info = SliceInfo { name, offset, shape, fan_in };
        offset += info.len();
        let at = info.offset;
        layout.push(info);
        at
    };
    let c = cfg.hidden;
    let c3 = cfg.concat_channels();
    let embed_w = add("embed.weight".into(), vec![c, cfg.in_channels, 3, 3], Some(cfg.in_channels * 9));
    let embed_b = add("embed.bias".into(), vec![c], None);
    let mut blocks = Vec::with_capacity(cfg.blocks);
    for k in 0..cfg.blocks {
        let mut branch_w = [0; 3];
        let mut branch_b = [0; 3];
        for (j, &(ks, _)) in BRANCHES.iter().enumerate() {
            branch_w[j] = add(format!("block{k}.branch{j}.weight"), vec![c, c, ks, ks], Some(c * ks * ks));
            branch_b[j] = add(format!("block{k}.branch{j}.bias"), vec![c], None);
        }
        let sk = SPATIAL_KERNEL;
        blocks.push(BlockSlots {
            branch_w,
            branch_b,
            attn_w: add(format!("block{k}.feature_attention.weight"), vec![c3, c3], Some(c3)),
            attn_b: add(format!("block{k}.feature_attention.bias"), vec![c3], None),
            dw_w: add(format!("block{k}.spatial_attention.depthwise.weight"), vec![2, sk, sk], Some(sk * sk)),
            dw_b: add(format!("block{k}.spatial_attention.depthwise.bias"), vec![2], None),
            pw_w: add(format!("block{k}.spatial_attention.pointwise.weight"), vec![1, 2], Some(2)),
            pw_b: add(format!("block{k}.spatial_attention.pointwise.bias"), vec![1], None),
            comp_w: add(format!("block{k}.compress.weight"), vec![c, c3], Some(c3)),
            comp_b: add(format!("block{k}.compress.bias"), vec![c], None),
        });
    }
    let e = cfg.time_dim;
    let time_hidden_w = add("time.hidden.weight".into(), vec![2 * c, e], Some(e));
    let time_hidden_b = add("time.hidden.bias".into(), vec![2 * c], None);
    // Zero fan-in marker: the modulation head starts at zero.
    let time_out_w = add("time.out.weight".into(), vec![2 * c, 2 * c], Some(0));
    let time_out_b = add("time.out.bias".into(), vec![2 * c], None);
    let output_w = add("output.weight".into(), vec![cfg.out_channels, c, 3, 3], Some(c * 9));
    let output_b = add("output.bias".into(), vec![cfg.out_channels], None);
    let slots = Slots { embed_w, embed_b, blocks, time_hidden_w, time_hidden_b, time_out_w, time_out_b, output_w, output_b };
    (layout, slots)
}

impl DenoiserParams {
    pub fn zeros(config: NetworkConfig) -> Result<Self> {
        config.validate()?;
        let (layout, slots) = build_layout(&config);
        let total = layout.iter().map(SliceInfo::len).sum();
        Ok(Self { config, layout, values: vec![0.0; total], slots })
    }

    /// Weights `U(-1/sqrt(fan_in), 1/sqrt(fan_in))`, biases and the
    /// modulation head zero.
    pub fn init<R: Rng + ?Sized>(config: NetworkConfig, rng: &mut R) -> Result<Self> {
        let mut p = Self::zeros(config)?;
        for info in &p.layout {
            if let Some(fan) = info.fan_in.filter(|&f| f > 0) {
                let bound = 1.0 / libm::sqrt(fan as f64);
                for v in &mut p.values[info.range()] {
                    *v = rng.random_range(-bound..bound);
                }
            }
        }
        Ok(p)
    }

    pub fn from_values(config: NetworkConfig, values: Vec<f64>) -> Result<Self> {
        let mut p = Self::zeros(config)?;
        if values.len() != p.values.len() {
            return Err(shape(format!("{} parameters", p.values.len()), format!("{}", values.len())));
        }
        p.values = values;
        Ok(p)
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn slice_info(&self, name: &str) -> Option<&SliceInfo> {
        self.layout.iter().find(|s| s.name == name)
    }

    pub fn slice(&self, name: &str) -> Result<&[f64]> {
        let info = self.slice_info(name).ok_or_else(|| invalid(format!("no parameter slice named {name}")))?;
        Ok(&self.values[info.range()])
    }

    pub fn slice_mut(&mut self, name: &str) -> Result<&mut [f64]> {
        let range = self.slice_info(name).ok_or_else(|| invalid(format!("no parameter slice named {name}")))?.range();
        Ok(&mut self.values[range])
    }

    pub(crate) fn slots(&self) -> &Slots {
        &self.slots
    }
}
