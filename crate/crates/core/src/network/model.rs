use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use super::ops::{self, argmax, sigmoid, silu, silu_grad, ConvShape};
use super::params::{BlockSlots, DenoiserParams};
use super::{NetworkConfig, BRANCHES, NORM_EPS, SPATIAL_KERNEL};
use crate::error::{invalid, shape};
use crate::Result;

/// Sinusoidal features of step `t`: `E/2` sines then `E/2` cosines at
/// frequencies spaced geometrically from 1 down to `1e-4`.
pub fn time_embedding(t: usize, dim: usize) -> Vec<f64> {
    let half = dim / 2;
    let mut out = vec![0.0; dim];
    for k in 0..half {
        let freq = if half > 1 { libm::pow(1e-4, k as f64 / (half - 1) as f64) } else { 1.0 };
        let arg = t as f64 * freq;
        out[k] = libm::sin(arg);
        out[half + k] = libm::cos(arg);
    }
    out
}

struct TimeCache {
    embedding: Vec<f64>,
    pre: Vec<f64>,
    act: Vec<f64>,
    scale: Vec<f64>,
    shift: Vec<f64>,
}

fn time_forward(p: &DenoiserParams, t: usize) -> TimeCache {
    let cfg = &p.config;
    let s = p.slots();
    let v = &p.values;
    let c = cfg.hidden;
    let embedding = time_embedding(t, cfg.time_dim);
    let mut pre = vec![0.0; 2 * c];
    ops::linear(&embedding, &v[s.time_hidden_w..], &v[s.time_hidden_b..s.time_hidden_b + 2 * c], &mut pre);
    let act: Vec<f64> = pre.iter().map(|&x| silu(x)).collect();
    let mut out = vec![0.0; 2 * c];
    ops::linear(&act, &v[s.time_out_w..], &v[s.time_out_b..s.time_out_b + 2 * c], &mut out);
    let shift = out.split_off(c);
    TimeCache { embedding, pre, act, scale: out, shift }
}

/// Per-feature `(scale, shift)` applied after each block's compression.
pub fn time_modulation(p: &DenoiserParams, t: usize) -> (Vec<f64>, Vec<f64>) {
    let tc = time_forward(p, t);
    (tc.scale, tc.shift)
}

struct BlockCache {
    normed: Vec<f64>,
    inv_std: Vec<f64>,
    concat: Vec<f64>,
    pool_sum: Vec<f64>,
    pool_argmax: Vec<usize>,
    feature_weights: Vec<f64>,
    gated: Vec<f64>,
    pooled: Vec<f64>,
    channel_argmax: Vec<usize>,
    depthwise: Vec<f64>,
    spatial_weights: Vec<f64>,
    attended: Vec<f64>,
    compressed: Vec<f64>,
}

/// Activations kept for the backward pass.
pub struct ForwardCache {
    input: Vec<f64>,
    time: TimeCache,
    blocks: Vec<BlockCache>,
    last: Vec<f64>,
    pub output: Vec<f64>,
}

impl ForwardCache {
    /// Feature-attention gates of block `k` (length `3C`).
    pub fn feature_weights(&self, k: usize) -> &[f64] {
        &self.blocks[k].feature_weights
    }

    /// Spatial-attention gates of block `k` (length `N M`).
    pub fn spatial_weights(&self, k: usize) -> &[f64] {
        &self.blocks[k].spatial_weights
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    pub params: Vec<f64>,
    pub input: Vec<f64>,
}

fn conv(cfg: &NetworkConfig, ci: usize, co: usize, kernel: usize, dilation: usize) -> ConvShape {
    ConvShape { in_channels: ci, out_channels: co, kernel, dilation, height: cfg.height, width: cfg.width }
}

fn block_forward(cfg: &NetworkConfig, v: &[f64], b: &BlockSlots, x: Vec<f64>, scale: &[f64], shift: &[f64]) -> (Vec<f64>, BlockCache) {
    let c = cfg.hidden;
    let c3 = cfg.concat_channels();
    let hw = cfg.spatial();

    let mut normed = vec![0.0; c * hw];
    let mut inv_std = vec![0.0; c];
    for ch in 0..c {
        let xs = &x[ch * hw..(ch + 1) * hw];
        let mean = xs.iter().sum::<f64>() / hw as f64;
        let var = xs.iter().map(|z| (z - mean) * (z - mean)).sum::<f64>() / hw as f64;
        let is = 1.0 / libm::sqrt(var + NORM_EPS);
        inv_std[ch] = is;
        for (o, z) in normed[ch * hw..(ch + 1) * hw].iter_mut().zip(xs) {
            *o = (z - mean) * is;
        }
    }

    let mut concat = vec![0.0; c3 * hw];
    for (j, &(k, dil)) in BRANCHES.iter().enumerate() {
        let s = conv(cfg, c, c, k, dil);
        ops::conv2d(&s, &normed, &v[b.branch_w[j]..b.branch_w[j] + s.weight_len()], &v[b.branch_b[j]..b.branch_b[j] + c], &mut concat[j * c * hw..(j + 1) * c * hw]);
    }

    let mut pool_sum = vec![0.0; c3];
    let mut pool_argmax = vec![0; c3];
    for ch in 0..c3 {
        let xs = &concat[ch * hw..(ch + 1) * hw];
        let (idx, mx) = argmax(xs.iter().copied());
        pool_argmax[ch] = idx;
        pool_sum[ch] = xs.iter().sum::<f64>() / hw as f64 + mx;
    }
    let attn_w = &v[b.attn_w..b.attn_w + c3 * c3];
    let attn_b = &v[b.attn_b..b.attn_b + c3];
    let mut feature_weights = vec![0.0; c3];
    for o in 0..c3 {
        let z: f64 = attn_w[o * c3..(o + 1) * c3].iter().zip(&pool_sum).map(|(w, a)| w * a).sum::<f64>() + 2.0 * attn_b[o];
        feature_weights[o] = sigmoid(z);
    }
    let mut gated = concat.clone();
    for ch in 0..c3 {
        gated[ch * hw..(ch + 1) * hw].iter_mut().for_each(|z| *z *= feature_weights[ch]);
    }

    let mut pooled = vec![0.0; 2 * hw];
    let mut channel_argmax = vec![0; hw];
    for p in 0..hw {
        let (idx, mx) = argmax((0..c3).map(|ch| gated[ch * hw + p]));
        channel_argmax[p] = idx;
        pooled[hw + p] = mx;
        pooled[p] = (0..c3).map(|ch| gated[ch * hw + p]).sum::<f64>() / c3 as f64;
    }
    let sk = SPATIAL_KERNEL;
    let mut depthwise = vec![0.0; 2 * hw];
    ops::depthwise_conv2d(2, sk, cfg.height, cfg.width, &pooled, &v[b.dw_w..b.dw_w + 2 * sk * sk], &v[b.dw_b..b.dw_b + 2], &mut depthwise);
    let mut spatial_weights = vec![0.0; hw];
    ops::pointwise(2, 1, hw, &depthwise, &v[b.pw_w..b.pw_w + 2], &v[b.pw_b..b.pw_b + 1], &mut spatial_weights);
    spatial_weights.iter_mut().for_each(|z| *z = sigmoid(*z));
    let mut attended = gated.clone();
    for ch in 0..c3 {
        attended[ch * hw..(ch + 1) * hw].iter_mut().zip(&spatial_weights).for_each(|(z, w)| *z *= w);
    }

    let mut compressed = vec![0.0; c * hw];
    ops::pointwise(c3, c, hw, &attended, &v[b.comp_w..b.comp_w + c * c3], &v[b.comp_b..b.comp_b + c], &mut compressed);

    let mut out = x;
    for ch in 0..c {
        let (s, sh) = (1.0 + scale[ch], shift[ch]);
        for (o, z) in out[ch * hw..(ch + 1) * hw].iter_mut().zip(&compressed[ch * hw..(ch + 1) * hw]) {
            *o += s * z + sh;
        }
    }
    let cache = BlockCache {
        normed,
        inv_std,
        concat,
        pool_sum,
        pool_argmax,
        feature_weights,
        gated,
        pooled,
        channel_argmax,
        depthwise,
        spatial_weights,
        attended,
        compressed,
    };
    (out, cache)
}

fn check_step(t: usize) -> Result<()> {
    if t == 0 {
        return Err(invalid("diffusion step must be >= 1"));
    }
    Ok(())
}

pub fn forward_cached(p: &DenoiserParams, x: &[f64], t: usize) -> Result<ForwardCache> {
    let cfg = &p.config;
    if x.len() != cfg.input_len() {
        return Err(shape(format!("{} input entries", cfg.input_len()), format!("{}", x.len())));
    }
    check_step(t)?;
    let v = &p.values;
    let s = p.slots();
    let c = cfg.hidden;
    let hw = cfg.spatial();
    let time = time_forward(p, t);

    let es = conv(cfg, cfg.in_channels, c, 3, 1);
    let mut embedded = vec![0.0; c * hw];
    ops::conv2d(&es, x, &v[s.embed_w..s.embed_w + es.weight_len()], &v[s.embed_b..s.embed_b + c], &mut embedded);

    let mut h = embedded;
    let mut blocks = Vec::with_capacity(cfg.blocks);
    for b in &s.blocks {
        let (next, cache) = block_forward(cfg, v, b, h, &time.scale, &time.shift);
        blocks.push(cache);
        h = next;
    }

    let os = conv(cfg, c, cfg.out_channels, 3, 1);
    let mut output = vec![0.0; cfg.output_len()];
    ops::conv2d(&os, &h, &v[s.output_w..s.output_w + os.weight_len()], &v[s.output_b..s.output_b + cfg.out_channels], &mut output);
    Ok(ForwardCache { input: x.to_vec(), time, blocks, last: h, output })
}

/// Predicted noise for input planes `x` (`C_in x N x M`) at step `t`.
pub fn forward(p: &DenoiserParams, x: &[f64], t: usize) -> Result<Vec<f64>> {
    Ok(forward_cached(p, x, t)?.output)
}

/// Returns the gradient w.r.t. the block input; accumulates parameter
/// gradients into `g` and the modulation gradients into `gs`, `gb`.
#[allow(clippy::too_many_arguments)]
fn block_backward(
    cfg: &NetworkConfig,
    v: &[f64],
    b: &BlockSlots,
    bc: &BlockCache,
    scale: &[f64],
    grad_out: &[f64],
    g: &mut [f64],
    gs: &mut [f64],
    gb: &mut [f64],
) -> Vec<f64> {
    let c = cfg.hidden;
    let c3 = cfg.concat_channels();
    let hw = cfg.spatial();
    let mut gx = grad_out.to_vec();

    let mut g_comp = vec![0.0; c * hw];
    for ch in 0..c {
        let go = &grad_out[ch * hw..(ch + 1) * hw];
        gs[ch] += go.iter().zip(&bc.compressed[ch * hw..(ch + 1) * hw]).map(|(a, z)| a * z).sum::<f64>();
        gb[ch] += go.iter().sum::<f64>();
        let f = 1.0 + scale[ch];
        g_comp[ch * hw..(ch + 1) * hw].iter_mut().zip(go).for_each(|(d, a)| *d = f * a);
    }

    let mut g_att = vec![0.0; c3 * hw];
    {
        let (gw, gbias) = split_two(g, b.comp_w, c * c3, b.comp_b, c);
        ops::pointwise_backward(c3, c, hw, &bc.attended, &v[b.comp_w..b.comp_w + c * c3], &g_comp, gw, gbias, &mut g_att);
    }

    // Spatial gate.
    let mut g_gated = vec![0.0; c3 * hw];
    let mut g_sw = vec![0.0; hw];
    for ch in 0..c3 {
        for p in 0..hw {
            let ga = g_att[ch * hw + p];
            g_sw[p] += ga * bc.gated[ch * hw + p];
            g_gated[ch * hw + p] = ga * bc.spatial_weights[p];
        }
    }
    let g_logit: Vec<f64> = g_sw.iter().zip(&bc.spatial_weights).map(|(gw, w)| gw * w * (1.0 - w)).collect();
    let mut g_dw = vec![0.0; 2 * hw];
    {
        let (gw, gbias) = split_two(g, b.pw_w, 2, b.pw_b, 1);
        ops::pointwise_backward(2, 1, hw, &bc.depthwise, &v[b.pw_w..b.pw_w + 2], &g_logit, gw, gbias, &mut g_dw);
    }
    let mut g_pooled = vec![0.0; 2 * hw];
    let sk = SPATIAL_KERNEL;
    {
        let (gw, gbias) = split_two(g, b.dw_w, 2 * sk * sk, b.dw_b, 2);
        ops::depthwise_conv2d_backward(2, sk, cfg.height, cfg.width, &bc.pooled, &v[b.dw_w..b.dw_w + 2 * sk * sk], &g_dw, gw, gbias, &mut g_pooled);
    }
    for p in 0..hw {
        let ga = g_pooled[p] / c3 as f64;
        for ch in 0..c3 {
            g_gated[ch * hw + p] += ga;
        }
        g_gated[bc.channel_argmax[p] * hw + p] += g_pooled[hw + p];
    }

    // Feature gate.
    let mut g_concat = vec![0.0; c3 * hw];
    let mut g_logit = vec![0.0; c3];
    for ch in 0..c3 {
        let w = bc.feature_weights[ch];
        let gg = &g_gated[ch * hw..(ch + 1) * hw];
        let gw: f64 = gg.iter().zip(&bc.concat[ch * hw..(ch + 1) * hw]).map(|(a, z)| a * z).sum();
        g_logit[ch] = gw * w * (1.0 - w);
        g_concat[ch * hw..(ch + 1) * hw].iter_mut().zip(gg).for_each(|(d, a)| *d = w * a);
    }
    let attn_w = &v[b.attn_w..b.attn_w + c3 * c3];
    let mut g_pool = vec![0.0; c3];
    for o in 0..c3 {
        let gl = g_logit[o];
        g[b.attn_b + o] += 2.0 * gl;
        for i in 0..c3 {
            g[b.attn_w + o * c3 + i] += gl * bc.pool_sum[i];
            g_pool[i] += gl * attn_w[o * c3 + i];
        }
    }
    for ch in 0..c3 {
        let avg = g_pool[ch] / hw as f64;
        g_concat[ch * hw..(ch + 1) * hw].iter_mut().for_each(|d| *d += avg);
        g_concat[ch * hw + bc.pool_argmax[ch]] += g_pool[ch];
    }

    // Branches.
    let mut g_norm = vec![0.0; c * hw];
    for (j, &(k, dil)) in BRANCHES.iter().enumerate() {
        let s = conv(cfg, c, c, k, dil);
        let (gw, gbias) = split_two(g, b.branch_w[j], s.weight_len(), b.branch_b[j], c);
        ops::conv2d_backward(
            &s,
            &bc.normed,
            &v[b.branch_w[j]..b.branch_w[j] + s.weight_len()],
            &g_concat[j * c * hw..(j + 1) * c * hw],
            gw,
            gbias,
            Some(&mut g_norm),
        );
    }

    // Layer norm.
    for ch in 0..c {
        let gn = &g_norm[ch * hw..(ch + 1) * hw];
        let xn = &bc.normed[ch * hw..(ch + 1) * hw];
        let mean_g = gn.iter().sum::<f64>() / hw as f64;
        let mean_gx = gn.iter().zip(xn).map(|(a, z)| a * z).sum::<f64>() / hw as f64;
        let is = bc.inv_std[ch];
        for ((d, a), z) in gx[ch * hw..(ch + 1) * hw].iter_mut().zip(gn).zip(xn) {
            *d += is * (a - mean_g - z * mean_gx);
        }
    }
    gx
}

/// Disjoint mutable views of two slices `[a, a + la)` and `[b, b + lb)` with `a + la <= b`.
fn split_two(g: &mut [f64], a: usize, la: usize, b: usize, lb: usize) -> (&mut [f64], &mut [f64]) {
    debug_assert!(a + la <= b);
    let (lo, hi) = g.split_at_mut(b);
    (&mut lo[a..a + la], &mut hi[..lb])
}

/// Accumulates parameter gradients into `grad_params` and returns the input
/// gradient.
pub fn backward_accumulate(p: &DenoiserParams, cache: &ForwardCache, grad_out: &[f64], grad_params: &mut [f64]) -> Result<Vec<f64>> {
    let cfg = &p.config;
    if grad_out.len() != cfg.output_len() {
        return Err(shape(format!("{} output gradient entries", cfg.output_len()), format!("{}", grad_out.len())));
    }
    if grad_params.len() != p.len() {
        return Err(shape(format!("{} parameter gradient entries", p.len()), format!("{}", grad_params.len())));
    }
    let v = &p.values;
    let s = p.slots();
    let c = cfg.hidden;
    let hw = cfg.spatial();

    let os = conv(cfg, c, cfg.out_channels, 3, 1);
    let mut gh = vec![0.0; c * hw];
    {
        let (gw, gbias) = split_two(grad_params, s.output_w, os.weight_len(), s.output_b, cfg.out_channels);
        ops::conv2d_backward(&os, &cache.last, &v[s.output_w..s.output_w + os.weight_len()], grad_out, gw, gbias, Some(&mut gh));
    }

    let mut g_scale = vec![0.0; c];
    let mut g_shift = vec![0.0; c];
    for (b, bc) in s.blocks.iter().zip(&cache.blocks).rev() {
        gh = block_backward(cfg, v, b, bc, &cache.time.scale, &gh, grad_params, &mut g_scale, &mut g_shift);
    }

    let es = conv(cfg, cfg.in_channels, c, 3, 1);
    let mut gx = vec![0.0; cfg.input_len()];
    {
        let (gw, gbias) = split_two(grad_params, s.embed_w, es.weight_len(), s.embed_b, c);
        ops::conv2d_backward(&es, &cache.input, &v[s.embed_w..s.embed_w + es.weight_len()], &gh, gw, gbias, Some(&mut gx));
    }

    let mut g_time_out = g_scale;
    g_time_out.extend_from_slice(&g_shift);
    let mut g_act = vec![0.0; 2 * c];
    {
        let (gw, gbias) = split_two(grad_params, s.time_out_w, 4 * c * c, s.time_out_b, 2 * c);
        ops::linear_backward(&cache.time.act, &v[s.time_out_w..s.time_out_w + 4 * c * c], &g_time_out, gw, gbias, &mut g_act);
    }
    let g_pre: Vec<f64> = g_act.iter().zip(&cache.time.pre).map(|(a, z)| a * silu_grad(*z)).collect();
    let mut g_emb = vec![0.0; cfg.time_dim];
    {
        let (gw, gbias) = split_two(grad_params, s.time_hidden_w, 2 * c * cfg.time_dim, s.time_hidden_b, 2 * c);
        ops::linear_backward(&cache.time.embedding, &v[s.time_hidden_w..s.time_hidden_w + 2 * c * cfg.time_dim], &g_pre, gw, gbias, &mut g_emb);
    }
    Ok(gx)
}

pub fn backward(p: &DenoiserParams, cache: &ForwardCache, grad_out: &[f64]) -> Result<Gradients> {
    let mut params = vec![0.0; p.len()];
    let input = backward_accumulate(p, cache, grad_out, &mut params)?;
    Ok(Gradients { params, input })
}
