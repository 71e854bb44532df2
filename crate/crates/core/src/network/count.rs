use super::params::build_layout;
use super::{NetworkConfig, BRANCHES, SPATIAL_KERNEL};

/// Exact number of trainable scalars, biases and the time MLP included.
pub fn parameter_count(cfg: &NetworkConfig) -> usize {
    build_layout(cfg).0.iter().map(|s| s.len()).sum()
}

/// Weight counts of one block, read off the enumerated layout.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct BlockWeightTerms {
    pub branches: [usize; 3],
    pub feature_attention: usize,
    pub compression: usize,
    pub spatial_attention: usize,
}

impl BlockWeightTerms {
    /// Everything except the spatial attention, which does not scale with `C`.
    pub fn feature_path(&self) -> usize {
        self.branches.iter().sum::<usize>() + self.feature_attention + self.compression
    }
}

fn block_slice_len(cfg: &NetworkConfig, suffix: &str) -> usize {
    build_layout(cfg).0.iter().filter(|s| s.name.starts_with("block0.") && s.name.ends_with(suffix)).map(|s| s.len()).sum()
}

pub fn per_block_weight_terms(cfg: &NetworkConfig) -> BlockWeightTerms {
    let mut branches = [0; 3];
    for (j, b) in branches.iter_mut().enumerate() {
        *b = block_slice_len(cfg, &alloc::format!("branch{j}.weight"));
    }
    BlockWeightTerms {
        branches,
        feature_attention: block_slice_len(cfg, "feature_attention.weight"),
        compression: block_slice_len(cfg, "compress.weight"),
        spatial_attention: spatial_attention_params(cfg),
    }
}

/// Depthwise plus pointwise weights of the spatial gate.
pub fn spatial_attention_params(cfg: &NetworkConfig) -> usize {
    block_slice_len(cfg, "depthwise.weight") + block_slice_len(cfg, "pointwise.weight")
}

/// `9 C_in C + 95 K C^2`.
pub fn leading_order_params(cfg: &NetworkConfig) -> usize {
    9 * cfg.in_channels * cfg.hidden + 95 * cfg.blocks * cfg.hidden * cfg.hidden
}

/// `9 N M C_in C + K (86 N M C^2 + 52 N M)`.
pub fn leading_order_flops(cfg: &NetworkConfig) -> usize {
    let nm = cfg.spatial();
    let c = cfg.hidden;
    9 * nm * cfg.in_channels * c + cfg.blocks * (86 * nm * c * c + 52 * nm)
}

/// Multiply-accumulate count of one forward pass, counting every kernel tap
/// as if the input were zero-padded.
pub fn flop_estimate(cfg: &NetworkConfig) -> usize {
    let nm = cfg.spatial();
    let c = cfg.hidden;
    let c3 = cfg.concat_channels();
    let e = cfg.time_dim;
    let embed = 9 * cfg.in_channels * c * nm;
    let branches: usize = BRANCHES.iter().map(|&(k, _)| k * k * c * c * nm).sum();
    let feature_attention = 2 * c3 * c3;
    let spatial = 2 * SPATIAL_KERNEL * SPATIAL_KERNEL * nm + 2 * nm;
    let compression = c3 * c * nm;
    let output = 9 * c * cfg.out_channels * nm;
    let time = e * 2 * c + 4 * c * c;
    embed + cfg.blocks * (branches + feature_attention + spatial + compression) + output + time
}
