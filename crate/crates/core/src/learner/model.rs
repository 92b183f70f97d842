use rand::Rng;
use rand_distr::{Distribution, Normal};

use super::loss::{multitask_loss, LossBreakdown, ValueTarget};
use crate::error::{Error, Result};
use crate::sensor::N_YAW;

/// Encoder widths; each block halves the resolution.
pub const ENCODER_CHANNELS: [usize; 3] = [16, 32, 64];
/// Decoder widths of the two upsampling blocks shared by both heads.
pub const DECODER_CHANNELS: [usize; 2] = [16, 8];

/// Input and output geometry of the network.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Architecture {
    pub width: usize,
    pub height: usize,
    pub in_channels: usize,
    pub yaws: usize,
}

impl Architecture {
    pub fn new(width: usize, height: usize, in_channels: usize) -> Result<Self> {
        if width == 0 || height == 0 || !width.is_multiple_of(8) || !height.is_multiple_of(8) {
            return Err(Error::Shape(format!("window {width}x{height} must be a positive multiple of 8")));
        }
        if in_channels == 0 {
            return Err(Error::Shape("model needs at least one input channel".into()));
        }
        Ok(Self { width, height, in_channels, yaws: N_YAW })
    }

    pub fn input_len(&self) -> usize {
        self.in_channels * self.width * self.height
    }

    pub fn pixels(&self) -> usize {
        self.width * self.height
    }
}

/// A 3x3 convolution with padding 1; weights are `out x in x 3 x 3`
/// followed by `out` biases.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Conv {
    pub in_ch: usize,
    pub out_ch: usize,
    pub stride: usize,
    pub offset: usize,
}

impl Conv {
    pub fn weight_len(&self) -> usize {
        self.out_ch * self.in_ch * 9
    }

    pub fn param_len(&self) -> usize {
        self.weight_len() + self.out_ch
    }

    pub fn out_dims(&self, h: usize, w: usize) -> (usize, usize) {
        ((h - 1) / self.stride + 1, (w - 1) / self.stride + 1)
    }
}

/// A named, contiguous run of parameters.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ParamBlock {
    pub name: &'static str,
    pub offset: usize,
    pub len: usize,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Layout {
    pub encoder: [Conv; 3],
    pub value_head: [Conv; 3],
    pub obstacle_head: [Conv; 3],
    pub log_sigma1: usize,
    pub log_sigma2: usize,
    pub total: usize,
}

impl Layout {
    fn new(arch: &Architecture) -> Self {
        let mut offset = 0;
        let mut conv = |in_ch, out_ch, stride| {
            let c = Conv { in_ch, out_ch, stride, offset };
            offset += c.param_len();
            c
        };
        let [e1, e2, e3] = ENCODER_CHANNELS;
        let [d1, d2] = DECODER_CHANNELS;
        let encoder = [conv(arch.in_channels, e1, 2), conv(e1, e2, 2), conv(e2, e3, 2)];
        let mut head = |out| [conv(e3 + e2, d1, 1), conv(d1 + e1, d2, 1), conv(d2 + arch.in_channels, out, 1)];
        let value_head = head(arch.yaws);
        let obstacle_head = head(1);
        Self { encoder, value_head, obstacle_head, log_sigma1: offset, log_sigma2: offset + 1, total: offset + 2 }
    }

    pub fn blocks(&self) -> Vec<ParamBlock> {
        let names = [
            ("enc1", self.encoder[0]),
            ("enc2", self.encoder[1]),
            ("enc3", self.encoder[2]),
            ("val_up1", self.value_head[0]),
            ("val_up2", self.value_head[1]),
            ("val_out", self.value_head[2]),
            ("obs_up1", self.obstacle_head[0]),
            ("obs_up2", self.obstacle_head[1]),
            ("obs_out", self.obstacle_head[2]),
        ];
        let mut out: Vec<ParamBlock> =
            names.iter().map(|&(name, c)| ParamBlock { name, offset: c.offset, len: c.param_len() }).collect();
        out.push(ParamBlock { name: "log_sigma1", offset: self.log_sigma1, len: 1 });
        out.push(ParamBlock { name: "log_sigma2", offset: self.log_sigma2, len: 1 });
        out
    }
}

/// Network outputs: channel-major `yaws x H x W` values and `H x W` obstacle
/// logits.
#[derive(Clone, Debug, PartialEq)]
pub struct Outputs {
    pub values: Vec<f64>,
    pub obstacle_logits: Vec<f64>,
}

/// Encoder-decoder with two heads and learnable task weights.
///
/// Values are predicted in units of `gain_scale` coverage.
#[derive(Clone, Debug, PartialEq)]
pub struct Model {
    pub arch: Architecture,
    pub layout: Layout,
    pub params: Vec<f64>,
    pub gain_scale: f64,
}

impl Model {
    /// He-initialized hidden layers, zero output layers and unit task
    /// weights, so an untrained model predicts zero gain and probability 0.5.
    pub fn new(arch: Architecture, rng: &mut impl Rng) -> Self {
        let mut model = Self::zeros(arch);
        let layout = model.layout;
        let hidden = layout.encoder.iter().chain(&layout.value_head[..2]).chain(&layout.obstacle_head[..2]);
        for conv in hidden {
            let std = (2.0 / (conv.in_ch * 9) as f64).sqrt();
            let normal = Normal::new(0.0, std).expect("positive std");
            for w in &mut model.params[conv.offset..conv.offset + conv.weight_len()] {
                *w = normal.sample(rng);
            }
        }
        model
    }

    pub fn zeros(arch: Architecture) -> Self {
        let layout = Layout::new(&arch);
        Self { arch, layout, params: vec![0.0; layout.total], gain_scale: 1.0 }
    }

    pub fn blocks(&self) -> Vec<ParamBlock> {
        self.layout.blocks()
    }

    pub fn param_count(&self) -> usize {
        self.params.len()
    }

    pub fn log_sigmas(&self) -> (f64, f64) {
        (self.params[self.layout.log_sigma1], self.params[self.layout.log_sigma2])
    }

    fn check_input(&self, input: &[f64]) -> Result<()> {
        if input.len() != self.arch.input_len() {
            return Err(Error::Shape(format!(
                "input has {} values, model expects {}",
                input.len(),
                self.arch.input_len()
            )));
        }
        Ok(())
    }

    pub fn forward(&self, input: &[f64]) -> Result<Outputs> {
        self.check_input(input)?;
        let cache = self.forward_cached(input);
        let out = Outputs { values: cache.value.out.clone(), obstacle_logits: cache.obstacle.out.clone() };
        if out.values.iter().chain(&out.obstacle_logits).any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("network output".into()));
        }
        Ok(out)
    }

    /// Loss of one sample; when `grad` is given the gradient is added to it.
    pub fn loss(
        &self,
        input: &[f64],
        targets: &[ValueTarget],
        obstacle_gt: &[bool],
        grad: Option<&mut [f64]>,
    ) -> Result<LossBreakdown> {
        self.check_input(input)?;
        if obstacle_gt.len() != self.arch.pixels() {
            return Err(Error::Shape("obstacle target does not match the window".into()));
        }
        let cache = self.forward_cached(input);
        let (ls1, ls2) = self.log_sigmas();
        let eval = multitask_loss(&cache.value.out, &cache.obstacle.out, targets, obstacle_gt, ls1, ls2)?;
        if let Some(grad) = grad {
            if grad.len() != self.params.len() {
                return Err(Error::Shape("gradient buffer does not match the parameters".into()));
            }
            self.backward(&cache, &eval.d_values, &eval.d_logits, grad);
            grad[self.layout.log_sigma1] += eval.d_log_sigma1;
            grad[self.layout.log_sigma2] += eval.d_log_sigma2;
        }
        Ok(eval.breakdown)
    }

    fn forward_cached(&self, input: &[f64]) -> Cache {
        let a = &self.arch;
        let (h0, w0) = (a.height, a.width);
        let enc = &self.layout.encoder;
        let l1 = conv_forward(&self.params, &enc[0], input, h0, w0);
        let a1 = silu(&l1.z);
        let (h1, w1) = enc[0].out_dims(h0, w0);
        let l2 = conv_forward(&self.params, &enc[1], &a1, h1, w1);
        let a2 = silu(&l2.z);
        let (h2, w2) = enc[1].out_dims(h1, w1);
        let l3 = conv_forward(&self.params, &enc[2], &a2, h2, w2);
        let a3 = silu(&l3.z);
        let skips = Skips { x0: input, a1: &a1, a2: &a2 };
        let value = self.head_forward(&self.layout.value_head, &a3, &skips);
        let obstacle = self.head_forward(&self.layout.obstacle_head, &a3, &skips);
        Cache { encoder: [l1, l2, l3], value, obstacle }
    }

    fn head_forward(&self, head: &[Conv; 3], bottleneck: &[f64], skips: &Skips) -> HeadCache {
        let a = &self.arch;
        let dims = [(a.height / 8, a.width / 8), (a.height / 4, a.width / 4), (a.height / 2, a.width / 2)];
        let up1 = concat(&upsample2(bottleneck, ENCODER_CHANNELS[2], dims[0].0, dims[0].1), skips.a2);
        let l1 = conv_forward(&self.params, &head[0], &up1, dims[1].0, dims[1].1);
        let a1 = silu(&l1.z);
        let up2 = concat(&upsample2(&a1, head[0].out_ch, dims[1].0, dims[1].1), skips.a1);
        let l2 = conv_forward(&self.params, &head[1], &up2, dims[2].0, dims[2].1);
        let a2 = silu(&l2.z);
        let up3 = concat(&upsample2(&a2, head[1].out_ch, dims[2].0, dims[2].1), skips.x0);
        let l3 = conv_forward(&self.params, &head[2], &up3, a.height, a.width);
        HeadCache { out: l3.z.clone(), layers: [l1, l2, l3] }
    }

    fn backward(&self, cache: &Cache, d_values: &[f64], d_logits: &[f64], grad: &mut [f64]) {
        let a = &self.arch;
        let enc = &self.layout.encoder;
        let [e1, e2, e3] = ENCODER_CHANNELS;
        let (h1, w1) = (a.height / 2, a.width / 2);
        let (h2, w2) = (a.height / 4, a.width / 4);
        let (h3, w3) = (a.height / 8, a.width / 8);
        let mut d_a3 = vec![0.0; e3 * h3 * w3];
        let mut d_a2 = vec![0.0; e2 * h2 * w2];
        let mut d_a1 = vec![0.0; e1 * h1 * w1];
        for (head, hc, d_out) in
            [(&self.layout.value_head, &cache.value, d_values), (&self.layout.obstacle_head, &cache.obstacle, d_logits)]
        {
            let d_up3 = conv_backward(&self.params, &head[2], &hc.layers[2], d_out, a.height, a.width, grad);
            let split = head[1].out_ch * h1 * w1 * 4;
            let mut d_h2 = downsum2(&d_up3[..split], head[1].out_ch, h1, w1);
            silu_backward(&hc.layers[1].z, &mut d_h2);
            let d_up2 = conv_backward(&self.params, &head[1], &hc.layers[1], &d_h2, h1, w1, grad);
            let split = head[0].out_ch * h2 * w2 * 4;
            let mut d_h1 = downsum2(&d_up2[..split], head[0].out_ch, h2, w2);
            add_into(&mut d_a1, &d_up2[split..]);
            silu_backward(&hc.layers[0].z, &mut d_h1);
            let d_up1 = conv_backward(&self.params, &head[0], &hc.layers[0], &d_h1, h2, w2, grad);
            let split = e3 * h3 * w3 * 4;
            add_into(&mut d_a3, &downsum2(&d_up1[..split], e3, h3, w3));
            add_into(&mut d_a2, &d_up1[split..]);
        }
        silu_backward(&cache.encoder[2].z, &mut d_a3);
        add_into(&mut d_a2, &conv_backward(&self.params, &enc[2], &cache.encoder[2], &d_a3, h2, w2, grad));
        silu_backward(&cache.encoder[1].z, &mut d_a2);
        add_into(&mut d_a1, &conv_backward(&self.params, &enc[1], &cache.encoder[1], &d_a2, h1, w1, grad));
        silu_backward(&cache.encoder[0].z, &mut d_a1);
        conv_backward_params(&enc[0], &cache.encoder[0], &d_a1, grad);
    }
}

struct Skips<'a> {
    x0: &'a [f64],
    a1: &'a [f64],
    a2: &'a [f64],
}

struct ConvCache {
    cols: Vec<f64>,
    z: Vec<f64>,
}

struct HeadCache {
    layers: [ConvCache; 3],
    out: Vec<f64>,
}

struct Cache {
    encoder: [ConvCache; 3],
    value: HeadCache,
    obstacle: HeadCache,
}

fn sigmoid(z: f64) -> f64 {
    1.0 / (1.0 + (-z).exp())
}

fn silu(z: &[f64]) -> Vec<f64> {
    z.iter().map(|&v| v * sigmoid(v)).collect()
}

/// Turns `d` from a gradient w.r.t. `silu(z)` into one w.r.t. `z`.
fn silu_backward(z: &[f64], d: &mut [f64]) {
    for (g, &v) in d.iter_mut().zip(z) {
        let s = sigmoid(v);
        *g *= s * (1.0 + v * (1.0 - s));
    }
}

fn add_into(acc: &mut [f64], x: &[f64]) {
    for (a, b) in acc.iter_mut().zip(x) {
        *a += b;
    }
}

fn concat(a: &[f64], b: &[f64]) -> Vec<f64> {
    let mut out = Vec::with_capacity(a.len() + b.len());
    out.extend_from_slice(a);
    out.extend_from_slice(b);
    out
}

/// Nearest-neighbor 2x upsampling of a `c x h x w` tensor.
fn upsample2(x: &[f64], c: usize, h: usize, w: usize) -> Vec<f64> {
    let (oh, ow) = (2 * h, 2 * w);
    let mut out = vec![0.0; c * oh * ow];
    for ch in 0..c {
        for y in 0..oh {
            for xx in 0..ow {
                out[(ch * oh + y) * ow + xx] = x[(ch * h + y / 2) * w + xx / 2];
            }
        }
    }
    out
}

/// Adjoint of [`upsample2`]: sums each 2x2 block of a `c x 2h x 2w` tensor.
fn downsum2(d: &[f64], c: usize, h: usize, w: usize) -> Vec<f64> {
    let (oh, ow) = (2 * h, 2 * w);
    let mut out = vec![0.0; c * h * w];
    for ch in 0..c {
        for y in 0..oh {
            for xx in 0..ow {
                out[(ch * h + y / 2) * w + xx / 2] += d[(ch * oh + y) * ow + xx];
            }
        }
    }
    out
}

/// Unfolds 3x3 patches: row `ci * 9 + ky * 3 + kx`, column `oy * ow + ox`.
fn im2col(x: &[f64], c: usize, h: usize, w: usize, stride: usize) -> (Vec<f64>, usize, usize) {
    let (oh, ow) = ((h - 1) / stride + 1, (w - 1) / stride + 1);
    let n = oh * ow;
    let mut cols = vec![0.0; c * 9 * n];
    for ci in 0..c {
        for ky in 0..3 {
            for kx in 0..3 {
                let row = &mut cols[((ci * 9) + ky * 3 + kx) * n..][..n];
                for oy in 0..oh {
                    let y = (oy * stride + ky) as isize - 1;
                    if y < 0 || y >= h as isize {
                        continue;
                    }
                    for ox in 0..ow {
                        let xx = (ox * stride + kx) as isize - 1;
                        if xx >= 0 && xx < w as isize {
                            row[oy * ow + ox] = x[(ci * h + y as usize) * w + xx as usize];
                        }
                    }
                }
            }
        }
    }
    (cols, oh, ow)
}

/// Adjoint of [`im2col`].
fn col2im(cols: &[f64], c: usize, h: usize, w: usize, stride: usize) -> Vec<f64> {
    let (oh, ow) = ((h - 1) / stride + 1, (w - 1) / stride + 1);
    let n = oh * ow;
    let mut x = vec![0.0; c * h * w];
    for ci in 0..c {
        for ky in 0..3 {
            for kx in 0..3 {
                let row = &cols[((ci * 9) + ky * 3 + kx) * n..][..n];
                for oy in 0..oh {
                    let y = (oy * stride + ky) as isize - 1;
                    if y < 0 || y >= h as isize {
                        continue;
                    }
                    for ox in 0..ow {
                        let xx = (ox * stride + kx) as isize - 1;
                        if xx >= 0 && xx < w as isize {
                            x[(ci * h + y as usize) * w + xx as usize] += row[oy * ow + ox];
                        }
                    }
                }
            }
        }
    }
    x
}

/// `c = a * b + beta * c` for row-major `a: m x k`, `b: k x n`, with
/// arbitrary strides given as `(row, col)` pairs.
#[allow(clippy::too_many_arguments)]
fn gemm(
    m: usize,
    k: usize,
    n: usize,
    a: &[f64],
    a_strides: (isize, isize),
    b: &[f64],
    b_strides: (isize, isize),
    beta: f64,
    c: &mut [f64],
) {
    assert!(a.len() >= m * k && b.len() >= k * n && c.len() >= m * n);
    // SAFETY: the slices are at least as long as the strided views require,
    // and `c` does not alias `a` or `b` (distinct borrows).
    unsafe {
        matrixmultiply::dgemm(
            m,
            k,
            n,
            1.0,
            a.as_ptr(),
            a_strides.0,
            a_strides.1,
            b.as_ptr(),
            b_strides.0,
            b_strides.1,
            beta,
            c.as_mut_ptr(),
            n as isize,
            1,
        );
    }
}

fn conv_forward(params: &[f64], conv: &Conv, x: &[f64], h: usize, w: usize) -> ConvCache {
    let (cols, oh, ow) = im2col(x, conv.in_ch, h, w, conv.stride);
    let n = oh * ow;
    let kk = conv.in_ch * 9;
    let weights = &params[conv.offset..conv.offset + conv.weight_len()];
    let bias = &params[conv.offset + conv.weight_len()..conv.offset + conv.param_len()];
    let mut z = vec![0.0; conv.out_ch * n];
    for (co, row) in z.chunks_mut(n).enumerate() {
        row.fill(bias[co]);
    }
    gemm(conv.out_ch, kk, n, weights, (kk as isize, 1), &cols, (n as isize, 1), 1.0, &mut z);
    ConvCache { cols, z }
}

fn conv_backward_params(conv: &Conv, cache: &ConvCache, d_out: &[f64], grad: &mut [f64]) {
    let n = d_out.len() / conv.out_ch;
    let kk = conv.in_ch * 9;
    let (g_w, g_b) = grad[conv.offset..conv.offset + conv.param_len()].split_at_mut(conv.weight_len());
    // dW += dOut (out x n) * cols^T (n x kk)
    gemm(conv.out_ch, n, kk, d_out, (n as isize, 1), &cache.cols, (1, n as isize), 1.0, g_w);
    for (co, row) in d_out.chunks(n).enumerate() {
        g_b[co] += row.iter().sum::<f64>();
    }
}

/// Accumulates parameter gradients and returns the gradient w.r.t. the
/// layer input (`in x h x w`).
fn conv_backward(
    params: &[f64],
    conv: &Conv,
    cache: &ConvCache,
    d_out: &[f64],
    h: usize,
    w: usize,
    grad: &mut [f64],
) -> Vec<f64> {
    conv_backward_params(conv, cache, d_out, grad);
    let n = d_out.len() / conv.out_ch;
    let kk = conv.in_ch * 9;
    let weights = &params[conv.offset..conv.offset + conv.weight_len()];
    let mut d_cols = vec![0.0; kk * n];
    // dCols = W^T (kk x out) * dOut (out x n)
    gemm(kk, conv.out_ch, n, weights, (1, kk as isize), d_out, (n as isize, 1), 0.0, &mut d_cols);
    col2im(&d_cols, conv.in_ch, h, w, conv.stride)
}
