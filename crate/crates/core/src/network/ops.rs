//! Dense kernels on `C x H x W` row-major feature maps.

/// Same-padded 2-D convolution, `weight` laid out `[co][ci][k][k]`.
#[derive(Debug, Clone, Copy)]
pub struct ConvShape {
    pub in_channels: usize,
    pub out_channels: usize,
    pub kernel: usize,
    pub dilation: usize,
    pub height: usize,
    pub width: usize,
}

impl ConvShape {
    fn pad(&self) -> isize {
        (self.dilation * (self.kernel - 1) / 2) as isize
    }

    pub fn weight_len(&self) -> usize {
        self.out_channels * self.in_channels * self.kernel * self.kernel
    }

    /// Valid output ranges `(lo, hi)` for a tap at signed offset `off` along an axis of length `len`.
    #[inline]
    fn span(off: isize, len: usize) -> (usize, usize) {
        let lo = (-off).max(0) as usize;
        let hi = (len as isize - off.max(0)).max(0) as usize;
        (lo.min(len), hi)
    }

    /// Visits every in-range tap as `(o, i, tap index, dy, dx, y range, x range)`.
    #[inline]
    fn for_each_tap(&self, mut f: impl FnMut(usize, usize, usize, isize, isize, (usize, usize), (usize, usize))) {
        let k = self.kernel;
        let pad = self.pad();
        for o in 0..self.out_channels {
            for i in 0..self.in_channels {
                for ky in 0..k {
                    let dy = (ky * self.dilation) as isize - pad;
                    let ys = Self::span(dy, self.height);
                    if ys.0 >= ys.1 {
                        continue;
                    }
                    for kx in 0..k {
                        let dx = (kx * self.dilation) as isize - pad;
                        let xs = Self::span(dx, self.width);
                        if xs.0 >= xs.1 {
                            continue;
                        }
                        f(o, i, ((o * self.in_channels + i) * k + ky) * k + kx, dy, dx, ys, xs);
                    }
                }
            }
        }
    }
}

pub fn conv2d(s: &ConvShape, input: &[f64], weight: &[f64], bias: &[f64], out: &mut [f64]) {
    let hw = s.height * s.width;
    let w = s.width;
    for o in 0..s.out_channels {
        out[o * hw..(o + 1) * hw].fill(bias[o]);
    }
    s.for_each_tap(|o, i, widx, dy, dx, (y0, y1), (x0, x1)| {
        let wv = weight[widx];
        for y in y0..y1 {
            let src = i * hw + (y as isize + dy) as usize * w;
            let dst = o * hw + y * w;
            let xi = (x0 as isize + dx) as usize;
            let (src, dst) = (&input[src + xi..src + xi + (x1 - x0)], &mut out[dst + x0..dst + x1]);
            for (d, v) in dst.iter_mut().zip(src) {
                *d += wv * v;
            }
        }
    });
}

/// Accumulates parameter gradients and, if given, the input gradient.
pub fn conv2d_backward(
    s: &ConvShape,
    input: &[f64],
    weight: &[f64],
    grad_out: &[f64],
    grad_weight: &mut [f64],
    grad_bias: &mut [f64],
    mut grad_input: Option<&mut [f64]>,
) {
    let hw = s.height * s.width;
    let w = s.width;
    for o in 0..s.out_channels {
        grad_bias[o] += grad_out[o * hw..(o + 1) * hw].iter().sum::<f64>();
    }
    s.for_each_tap(|o, i, widx, dy, dx, (y0, y1), (x0, x1)| {
        let wv = weight[widx];
        let mut acc = 0.0;
        for y in y0..y1 {
            let src = i * hw + (y as isize + dy) as usize * w + (x0 as isize + dx) as usize;
            let g = &grad_out[o * hw + y * w + x0..o * hw + y * w + x1];
            acc += g.iter().zip(&input[src..src + (x1 - x0)]).map(|(a, b)| a * b).sum::<f64>();
            if let Some(gi) = grad_input.as_deref_mut() {
                for (d, gv) in gi[src..src + (x1 - x0)].iter_mut().zip(g) {
                    *d += wv * gv;
                }
            }
        }
        grad_weight[widx] += acc;
    });
}

/// Per-channel same-padded convolution, `weight` laid out `[c][k][k]`.
pub fn depthwise_conv2d(channels: usize, kernel: usize, h: usize, w: usize, input: &[f64], weight: &[f64], bias: &[f64], out: &mut [f64]) {
    let hw = h * w;
    let kk = kernel * kernel;
    for c in 0..channels {
        let s = ConvShape { in_channels: 1, out_channels: 1, kernel, dilation: 1, height: h, width: w };
        conv2d(&s, &input[c * hw..(c + 1) * hw], &weight[c * kk..(c + 1) * kk], &bias[c..c + 1], &mut out[c * hw..(c + 1) * hw]);
    }
}

#[allow(clippy::too_many_arguments)]
pub fn depthwise_conv2d_backward(
    channels: usize,
    kernel: usize,
    h: usize,
    w: usize,
    input: &[f64],
    weight: &[f64],
    grad_out: &[f64],
    grad_weight: &mut [f64],
    grad_bias: &mut [f64],
    grad_input: &mut [f64],
) {
    let hw = h * w;
    let kk = kernel * kernel;
    for c in 0..channels {
        let s = ConvShape { in_channels: 1, out_channels: 1, kernel, dilation: 1, height: h, width: w };
        conv2d_backward(
            &s,
            &input[c * hw..(c + 1) * hw],
            &weight[c * kk..(c + 1) * kk],
            &grad_out[c * hw..(c + 1) * hw],
            &mut grad_weight[c * kk..(c + 1) * kk],
            &mut grad_bias[c..c + 1],
            Some(&mut grad_input[c * hw..(c + 1) * hw]),
        );
    }
}

/// 1x1 convolution `out = W x + b`, `weight` laid out `[co][ci]`.
pub fn pointwise(ci: usize, co: usize, hw: usize, input: &[f64], weight: &[f64], bias: &[f64], out: &mut [f64]) {
    for o in 0..co {
        let dst = &mut out[o * hw..(o + 1) * hw];
        dst.fill(bias[o]);
        for i in 0..ci {
            let wv = weight[o * ci + i];
            for (d, v) in dst.iter_mut().zip(&input[i * hw..(i + 1) * hw]) {
                *d += wv * v;
            }
        }
    }
}

#[allow(clippy::too_many_arguments)]
pub fn pointwise_backward(
    ci: usize,
    co: usize,
    hw: usize,
    input: &[f64],
    weight: &[f64],
    grad_out: &[f64],
    grad_weight: &mut [f64],
    grad_bias: &mut [f64],
    grad_input: &mut [f64],
) {
    for o in 0..co {
        let g = &grad_out[o * hw..(o + 1) * hw];
        grad_bias[o] += g.iter().sum::<f64>();
        for i in 0..ci {
            let x = &input[i * hw..(i + 1) * hw];
            grad_weight[o * ci + i] += g.iter().zip(x).map(|(a, b)| a * b).sum::<f64>();
            let wv = weight[o * ci + i];
            for (d, gv) in grad_input[i * hw..(i + 1) * hw].iter_mut().zip(g) {
                *d += wv * gv;
            }
        }
    }
}

/// Dense layer `out = W x + b`, `weight` laid out `[out][in]`.
pub fn linear(input: &[f64], weight: &[f64], bias: &[f64], out: &mut [f64]) {
    pointwise(input.len(), out.len(), 1, input, weight, bias, out);
}

pub fn linear_backward(input: &[f64], weight: &[f64], grad_out: &[f64], grad_weight: &mut [f64], grad_bias: &mut [f64], grad_input: &mut [f64]) {
    pointwise_backward(input.len(), grad_out.len(), 1, input, weight, grad_out, grad_weight, grad_bias, grad_input);
}

#[inline]
pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + libm::exp(-x))
    } else {
        let e = libm::exp(x);
        e / (1.0 + e)
    }
}

#[inline]
pub fn silu(x: f64) -> f64 {
    x * sigmoid(x)
}

#[inline]
pub fn silu_grad(x: f64) -> f64 {
    let s = sigmoid(x);
    s * (1.0 + x * (1.0 - s))
}

/// Index of the first maximum.
#[inline]
pub fn argmax(v: impl Iterator<Item = f64>) -> (usize, f64) {
    let mut best = (0, f64::NEG_INFINITY);
    for (i, x) in v.enumerate() {
        if x > best.1 {
            best = (i, x);
        }
    }
    best
}

#[cfg(test)]
mod tests {
    use super::*;

    fn naive_conv(s: &ConvShape, input: &[f64], weight: &[f64], bias: &[f64]) -> Vec<f64> {
        let (h, w, k) = (s.height as isize, s.width as isize, s.kernel);
        let pad = s.pad();
        let mut out = vec![0.0; s.out_channels * (h * w) as usize];
        for o in 0..s.out_channels {
            for y in 0..h {
                for x in 0..w {
                    let mut acc = bias[o];
                    for i in 0..s.in_channels {
                        for ky in 0..k {
                            for kx in 0..k {
                                let yy = y + (ky * s.dilation) as isize - pad;
                                let xx = x + (kx * s.dilation) as isize - pad;
                                if yy >= 0 && yy < h && xx >= 0 && xx < w {
                                    acc += weight[((o * s.in_channels + i) * k + ky) * k + kx] * input[(i as isize * h * w + yy * w + xx) as usize];
                                }
                            }
                        }
                    }
                    out[(o as isize * h * w + y * w + x) as usize] = acc;
                }
            }
        }
        out
    }

    fn fill(len: usize, seed: u64) -> Vec<f64> {
        let mut state = seed;
        (0..len)
            .map(|_| {
                state = state.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
                ((state >> 11) as f64 / (1u64 << 53) as f64) - 0.5
            })
            .collect()
    }

    #[test]
    fn conv_matches_naive() {
        for &(k, dil) in &[(1, 1), (3, 1), (5, 2), (7, 3)] {
            let s = ConvShape { in_channels: 3, out_channels: 2, kernel: k, dilation: dil, height: 9, width: 6 };
            let x = fill(3 * 54, 1);
            let wgt = fill(s.weight_len(), 2);
            let b = [0.3, -0.2];
            let mut out = vec![0.0; 2 * 54];
            conv2d(&s, &x, &wgt, &b, &mut out);
            let want = naive_conv(&s, &x, &wgt, &b);
            for (a, b) in out.iter().zip(&want) {
                assert!((a - b).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn conv_backward_is_adjoint() {
        // <conv(x), g> = <x, conv^T(g)> + <b, sum g>; checks both gradient paths.
        let s = ConvShape { in_channels: 2, out_channels: 3, kernel: 5, dilation: 2, height: 8, width: 5 };
        let x = fill(2 * 40, 3);
        let wgt = fill(s.weight_len(), 4);
        let g = fill(3 * 40, 5);
        let zero = [0.0; 3];
        let mut out = vec![0.0; 3 * 40];
        conv2d(&s, &x, &wgt, &zero, &mut out);
        let lhs: f64 = out.iter().zip(&g).map(|(a, b)| a * b).sum();
        let mut gw = vec![0.0; s.weight_len()];
        let mut gb = vec![0.0; 3];
        let mut gx = vec![0.0; 80];
        conv2d_backward(&s, &x, &wgt, &g, &mut gw, &mut gb, Some(&mut gx));
        let via_x: f64 = gx.iter().zip(&x).map(|(a, b)| a * b).sum();
        let via_w: f64 = gw.iter().zip(&wgt).map(|(a, b)| a * b).sum();
        assert!((lhs - via_x).abs() < 1e-12);
        assert!((lhs - via_w).abs() < 1e-12);
    }

    #[test]
    fn sigmoid_is_stable() {
        assert_eq!(sigmoid(0.0), 0.5);
        assert!(sigmoid(-800.0) >= 0.0 && sigmoid(800.0) <= 1.0);
        assert!((silu_grad(0.7) - (silu(0.7 + 1e-6) - silu(0.7 - 1e-6)) / 2e-6).abs() < 1e-8);
    }

    #[test]
    fn argmax_first_wins() {
        assert_eq!(argmax([1.0, 3.0, 3.0, 2.0].into_iter()).0, 1);
    }
}
