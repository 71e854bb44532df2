//! Multi-scale attention denoiser with hand-written backpropagation.
//!
//! Feature maps are `C x N x M` row-major (antenna rows, subcarrier columns).

mod count;
mod model;
pub mod ops;
mod params;

pub use count::{leading_order_flops, leading_order_params, flop_estimate, parameter_count, per_block_weight_terms, spatial_attention_params, BlockWeightTerms};
pub use model::{backward, forward, forward_cached, time_embedding, time_modulation, ForwardCache, Gradients};
pub use params::{DenoiserParams, SliceInfo};

use alloc::format;

use crate::error::invalid;
use crate::Result;

/// Branch kernel sizes and dilation rates, in concatenation order.
pub const BRANCHES: [(usize, usize); 3] = [(3, 1), (5, 2), (7, 3)];
pub const SPATIAL_KERNEL: usize = 5;
pub const NORM_EPS: f64 = 1e-5;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct NetworkConfig {
    pub in_channels: usize,
    pub hidden: usize,
    pub out_channels: usize,
    pub blocks: usize,
    pub time_dim: usize,
    pub height: usize,
    pub width: usize,
}

impl NetworkConfig {
    /// `C_in = C_out = 2`, `E = 4C`.
    pub fn new(hidden: usize, blocks: usize, height: usize, width: usize) -> Self {
        Self { in_channels: 2, hidden, out_channels: 2, blocks, time_dim: 4 * hidden, height, width }
    }

    pub fn validate(&self) -> Result<()> {
        let fields = [self.in_channels, self.hidden, self.out_channels, self.time_dim, self.height, self.width];
        if fields.contains(&0) {
            return Err(invalid(format!("network sizes must be positive: {self:?}")));
        }
        if !self.time_dim.is_multiple_of(2) {
            return Err(invalid("time embedding dimension must be even"));
        }
        Ok(())
    }

    pub fn spatial(&self) -> usize {
        self.height * self.width
    }

    pub fn concat_channels(&self) -> usize {
        BRANCHES.len() * self.hidden
    }

    pub fn input_len(&self) -> usize {
        self.in_channels * self.spatial()
    }

    pub fn output_len(&self) -> usize {
        self.out_channels * self.spatial()
    }
}
