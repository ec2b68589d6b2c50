//! Minimal layers with hand-written backward passes.
//!
//! Forward passes take `&self` and return the output together with a cache
//! holding whatever the backward pass needs, so a frozen model can be shared
//! by concurrent readers. `backward` accumulates parameter gradients into the
//! layer; `input_grad` only propagates the gradient to the layer input and
//! leaves the parameters untouched.

use ndarray::{s, Array1, Array2, Array4, ArrayD, ArrayView2, Axis, Ix1, Ix2, IxDyn};
use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone)]
pub struct Param {
    pub name: String,
    pub value: ArrayD<f32>,
    pub grad: ArrayD<f32>,
}

impl Param {
    pub fn new(name: impl Into<String>, value: ArrayD<f32>) -> Self {
        let grad = ArrayD::zeros(value.raw_dim());
        Self { name: name.into(), value, grad }
    }

    pub fn zero_grad(&mut self) {
        self.grad.fill(0.0);
    }

    pub fn len(&self) -> usize {
        self.value.len()
    }

    pub fn is_empty(&self) -> bool {
        self.value.is_empty()
    }

    fn mat(&self) -> ArrayView2<'_, f32> {
        self.value.view().into_dimensionality::<Ix2>().expect("2-d parameter")
    }

    fn vec(&self) -> ndarray::ArrayView1<'_, f32> {
        self.value.view().into_dimensionality::<Ix1>().expect("1-d parameter")
    }
}

/// Access to a module's parameters in a fixed order.
pub trait HasParams {
    fn params(&self) -> Vec<&Param>;
    fn params_mut(&mut self) -> Vec<&mut Param>;

    fn zero_grad(&mut self) {
        for p in self.params_mut() {
            p.zero_grad();
        }
    }

    fn num_params(&self) -> usize {
        self.params().iter().map(|p| p.len()).sum()
    }
}

/// FNV-1a over the bit patterns of every parameter value.
pub fn checksum<'a>(params: impl IntoIterator<Item = &'a Param>) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for p in params {
        for v in p.value.iter() {
            for b in v.to_bits().to_le_bytes() {
                h ^= b as u64;
                h = h.wrapping_mul(0x0000_0100_0000_01b3);
            }
        }
    }
    h
}

fn he_normal<R: Rng>(rng: &mut R, shape: &[usize], fan_in: usize) -> ArrayD<f32> {
    let std = (2.0 / fan_in as f64).sqrt();
    let normal = Normal::new(0.0, std).expect("finite std");
    ArrayD::from_shape_simple_fn(IxDyn(shape), || normal.sample(rng) as f32)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConvGeometry {
    pub kernel: usize,
    pub stride: usize,
    pub padding: usize,
}

impl ConvGeometry {
    pub fn output_len(&self, input: usize) -> usize {
        (input + 2 * self.padding - self.kernel) / self.stride + 1
    }
}

/// Unfolds `x` (N, C, H, W) into a matrix with one row per output position
/// `(n, oy, ox)` and one column per `(c, ky, kx)`.
pub fn im2col(x: &Array4<f32>, g: ConvGeometry) -> (Array2<f32>, usize, usize) {
    let x = x.as_standard_layout();
    let (n, c, h, w) = x.dim();
    let (ho, wo) = (g.output_len(h), g.output_len(w));
    let k = g.kernel;
    let width = c * k * k;
    let xs = x.as_slice().expect("standard layout");
    let mut cols = vec![0f32; n * ho * wo * width];
    for b in 0..n {
        for oy in 0..ho {
            for ox in 0..wo {
                let row = ((b * ho + oy) * wo + ox) * width;
                for ch in 0..c {
                    let base = (b * c + ch) * h * w;
                    for ky in 0..k {
                        let iy = (oy * g.stride + ky) as isize - g.padding as isize;
                        if iy < 0 || iy >= h as isize {
                            continue;
                        }
                        let src = base + iy as usize * w;
                        let dst = row + (ch * k + ky) * k;
                        for kx in 0..k {
                            let ix = (ox * g.stride + kx) as isize - g.padding as isize;
                            if ix >= 0 && ix < w as isize {
                                cols[dst + kx] = xs[src + ix as usize];
                            }
                        }
                    }
                }
            }
        }
    }
    let cols = Array2::from_shape_vec((n * ho * wo, width), cols).expect("shape");
    (cols, ho, wo)
}

/// Adjoint of [`im2col`]: scatters columns back onto a (N, C, H, W) grid, summing overlaps.
pub fn col2im(cols: &Array2<f32>, dims: (usize, usize, usize, usize), g: ConvGeometry) -> Array4<f32> {
    let cols = cols.as_standard_layout();
    let (n, c, h, w) = dims;
    let (ho, wo) = (g.output_len(h), g.output_len(w));
    let k = g.kernel;
    let width = c * k * k;
    let cs = cols.as_slice().expect("standard layout");
    let mut out = vec![0f32; n * c * h * w];
    for b in 0..n {
        for oy in 0..ho {
            for ox in 0..wo {
                let row = ((b * ho + oy) * wo + ox) * width;
                for ch in 0..c {
                    let base = (b * c + ch) * h * w;
                    for ky in 0..k {
                        let iy = (oy * g.stride + ky) as isize - g.padding as isize;
                        if iy < 0 || iy >= h as isize {
                            continue;
                        }
                        let dst = base + iy as usize * w;
                        let src = row + (ch * k + ky) * k;
                        for kx in 0..k {
                            let ix = (ox * g.stride + kx) as isize - g.padding as isize;
                            if ix >= 0 && ix < w as isize {
                                out[dst + ix as usize] += cs[src + kx];
                            }
                        }
                    }
                }
            }
        }
    }
    Array4::from_shape_vec(dims, out).expect("shape")
}

/// (N*H*W, C) row matrix -> (N, C, H, W).
fn rows_to_nchw(m: Array2<f32>, n: usize, h: usize, w: usize) -> Array4<f32> {
    let c = m.ncols();
    m.as_standard_layout()
        .into_owned()
        .into_shape_with_order((n, h, w, c))
        .expect("shape")
        .permuted_axes([0, 3, 1, 2])
        .as_standard_layout()
        .into_owned()
}

/// (N, C, H, W) -> (N*H*W, C) row matrix.
fn nchw_to_rows(x: &Array4<f32>) -> Array2<f32> {
    let (n, c, h, w) = x.dim();
    x.view()
        .permuted_axes([0, 2, 3, 1])
        .as_standard_layout()
        .into_owned()
        .into_shape_with_order((n * h * w, c))
        .expect("shape")
}

#[derive(Debug, Clone)]
pub struct Conv2d {
    pub weight: Param,
    pub bias: Param,
    pub in_channels: usize,
    pub out_channels: usize,
    pub geometry: ConvGeometry,
}

#[derive(Debug, Clone)]
pub struct ConvCache {
    cols: Array2<f32>,
    input_dims: (usize, usize, usize, usize),
    output_hw: (usize, usize),
}

impl Conv2d {
    pub fn new<R: Rng>(
        name: &str,
        in_channels: usize,
        out_channels: usize,
        geometry: ConvGeometry,
        rng: &mut R,
    ) -> Self {
        let fan_in = in_channels * geometry.kernel * geometry.kernel;
        Self {
            weight: Param::new(
                format!("{name}.weight"),
                he_normal(rng, &[out_channels, fan_in], fan_in),
            ),
            bias: Param::new(format!("{name}.bias"), ArrayD::zeros(IxDyn(&[out_channels]))),
            in_channels,
            out_channels,
            geometry,
        }
    }

    pub fn forward(&self, x: &Array4<f32>) -> (Array4<f32>, ConvCache) {
        let (n, _, _, _) = x.dim();
        let (cols, ho, wo) = im2col(x, self.geometry);
        let mut y = cols.dot(&self.weight.mat().t());
        y += &self.bias.vec();
        let out = rows_to_nchw(y, n, ho, wo);
        (out, ConvCache { cols, input_dims: x.dim(), output_hw: (ho, wo) })
    }

    pub fn input_grad(&self, cache: &ConvCache, dy: &Array4<f32>) -> Array4<f32> {
        let dy_rows = nchw_to_rows(dy);
        let dcols = dy_rows.dot(&self.weight.mat());
        col2im(&dcols, cache.input_dims, self.geometry)
    }

    pub fn backward(&mut self, cache: &ConvCache, dy: &Array4<f32>) -> Array4<f32> {
        debug_assert_eq!((dy.dim().2, dy.dim().3), cache.output_hw);
        let dy_rows = nchw_to_rows(dy);
        let dw = dy_rows.t().dot(&cache.cols);
        self.weight.grad += &dw.into_dyn();
        self.bias.grad += &dy_rows.sum_axis(Axis(0)).into_dyn();
        let dcols = dy_rows.dot(&self.weight.mat());
        col2im(&dcols, cache.input_dims, self.geometry)
    }
}

impl HasParams for Conv2d {
    fn params(&self) -> Vec<&Param> {
        vec![&self.weight, &self.bias]
    }
    fn params_mut(&mut self) -> Vec<&mut Param> {
        vec![&mut self.weight, &mut self.bias]
    }
}

/// Transposed convolution (fractionally strided), the adjoint of [`Conv2d`]'s input map.
#[derive(Debug, Clone)]
pub struct ConvTranspose2d {
    pub weight: Param,
    pub bias: Param,
    pub in_channels: usize,
    pub out_channels: usize,
    pub geometry: ConvGeometry,
}

#[derive(Debug, Clone)]
pub struct ConvTransposeCache {
    x_rows: Array2<f32>,
    input_dims: (usize, usize, usize, usize),
}

impl ConvTranspose2d {
    pub fn new<R: Rng>(
        name: &str,
        in_channels: usize,
        out_channels: usize,
        geometry: ConvGeometry,
        rng: &mut R,
    ) -> Self {
        let k2 = geometry.kernel * geometry.kernel;
        let fan_in = in_channels * k2 / (geometry.stride * geometry.stride).max(1);
        Self {
            weight: Param::new(
                format!("{name}.weight"),
                he_normal(rng, &[in_channels, out_channels * k2], fan_in.max(1)),
            ),
            bias: Param::new(format!("{name}.bias"), ArrayD::zeros(IxDyn(&[out_channels]))),
            in_channels,
            out_channels,
            geometry,
        }
    }

    pub fn output_len(&self, input: usize) -> usize {
        let g = self.geometry;
        (input - 1) * g.stride + g.kernel - 2 * g.padding
    }

    pub fn forward(&self, x: &Array4<f32>) -> (Array4<f32>, ConvTransposeCache) {
        let (n, _, h, w) = x.dim();
        let x_rows = nchw_to_rows(x);
        let cols = x_rows.dot(&self.weight.mat());
        let dims = (n, self.out_channels, self.output_len(h), self.output_len(w));
        let mut y = col2im(&cols, dims, self.geometry);
        for (mut plane, &b) in y.axis_iter_mut(Axis(1)).zip(self.bias.value.iter()) {
            plane += b;
        }
        (y, ConvTransposeCache { x_rows, input_dims: x.dim() })
    }

    pub fn input_grad(&self, cache: &ConvTransposeCache, dy: &Array4<f32>) -> Array4<f32> {
        let (dcols, _, _) = im2col(dy, self.geometry);
        let (n, _, h, w) = cache.input_dims;
        rows_to_nchw(dcols.dot(&self.weight.mat().t()), n, h, w)
    }

    pub fn backward(&mut self, cache: &ConvTransposeCache, dy: &Array4<f32>) -> Array4<f32> {
        let (dcols, _, _) = im2col(dy, self.geometry);
        self.weight.grad += &cache.x_rows.t().dot(&dcols).into_dyn();
        let db = dy.sum_axis(Axis(3)).sum_axis(Axis(2)).sum_axis(Axis(0));
        self.bias.grad += &db.into_dyn();
        let (n, _, h, w) = cache.input_dims;
        rows_to_nchw(dcols.dot(&self.weight.mat().t()), n, h, w)
    }
}

impl HasParams for ConvTranspose2d {
    fn params(&self) -> Vec<&Param> {
        vec![&self.weight, &self.bias]
    }
    fn params_mut(&mut self) -> Vec<&mut Param> {
        vec![&mut self.weight, &mut self.bias]
    }
}

#[derive(Debug, Clone)]
pub struct Linear {
    pub weight: Param,
    pub bias: Param,
}

#[derive(Debug, Clone)]
pub struct LinearCache {
    x: Array2<f32>,
}

impl Linear {
    pub fn new<R: Rng>(name: &str, inputs: usize, outputs: usize, rng: &mut R) -> Self {
        Self {
            weight: Param::new(format!("{name}.weight"), he_normal(rng, &[outputs, inputs], inputs)),
            bias: Param::new(format!("{name}.bias"), ArrayD::zeros(IxDyn(&[outputs]))),
        }
    }

    pub fn inputs(&self) -> usize {
        self.weight.value.shape()[1]
    }

    pub fn outputs(&self) -> usize {
        self.weight.value.shape()[0]
    }

    pub fn forward(&self, x: &Array2<f32>) -> (Array2<f32>, LinearCache) {
        let mut y = x.dot(&self.weight.mat().t());
        y += &self.bias.vec();
        (y, LinearCache { x: x.clone() })
    }

    pub fn input_grad(&self, _cache: &LinearCache, dy: &Array2<f32>) -> Array2<f32> {
        dy.dot(&self.weight.mat())
    }

    pub fn backward(&mut self, cache: &LinearCache, dy: &Array2<f32>) -> Array2<f32> {
        self.weight.grad += &dy.t().dot(&cache.x).into_dyn();
        self.bias.grad += &dy.sum_axis(Axis(0)).into_dyn();
        dy.dot(&self.weight.mat())
    }
}

impl HasParams for Linear {
    fn params(&self) -> Vec<&Param> {
        vec![&self.weight, &self.bias]
    }
    fn params_mut(&mut self) -> Vec<&mut Param> {
        vec![&mut self.weight, &mut self.bias]
    }
}

/// Two-layer perceptron with a ReLU hidden layer.
#[derive(Debug, Clone)]
pub struct Mlp {
    pub hidden: Linear,
    pub output: Linear,
}

#[derive(Debug, Clone)]
pub struct MlpCache {
    hidden: LinearCache,
    activation: Array2<f32>,
    output: LinearCache,
}

impl Mlp {
    pub fn new<R: Rng>(name: &str, inputs: usize, hidden: usize, outputs: usize, rng: &mut R) -> Self {
        Self {
            hidden: Linear::new(&format!("{name}.hidden"), inputs, hidden, rng),
            output: Linear::new(&format!("{name}.output"), hidden, outputs, rng),
        }
    }

    pub fn forward(&self, x: &Array2<f32>) -> (Array2<f32>, MlpCache) {
        let (h, hidden) = self.hidden.forward(x);
        let activation = relu(&h);
        let (y, output) = self.output.forward(&activation);
        (y, MlpCache { hidden, activation, output })
    }

    pub fn input_grad(&self, cache: &MlpCache, dy: &Array2<f32>) -> Array2<f32> {
        let da = self.output.input_grad(&cache.output, dy);
        let dh = relu_grad(&cache.activation, &da);
        self.hidden.input_grad(&cache.hidden, &dh)
    }

    pub fn backward(&mut self, cache: &MlpCache, dy: &Array2<f32>) -> Array2<f32> {
        let da = self.output.backward(&cache.output, dy);
        let dh = relu_grad(&cache.activation, &da);
        self.hidden.backward(&cache.hidden, &dh)
    }
}

impl HasParams for Mlp {
    fn params(&self) -> Vec<&Param> {
        let mut v = self.hidden.params();
        v.extend(self.output.params());
        v
    }
    fn params_mut(&mut self) -> Vec<&mut Param> {
        let mut v = self.hidden.params_mut();
        v.extend(self.output.params_mut());
        v
    }
}

pub fn relu<D: ndarray::Dimension>(x: &ndarray::Array<f32, D>) -> ndarray::Array<f32, D> {
    x.mapv(|v| v.max(0.0))
}

/// Gradient through a ReLU given its output.
pub fn relu_grad<D: ndarray::Dimension>(
    out: &ndarray::Array<f32, D>,
    dy: &ndarray::Array<f32, D>,
) -> ndarray::Array<f32, D> {
    let mut dx = dy.clone();
    ndarray::Zip::from(&mut dx).and(out).for_each(|d, &o| {
        if o <= 0.0 {
            *d = 0.0;
        }
    });
    dx
}

pub fn tanh_grad(out: &Array2<f32>, dy: &Array2<f32>) -> Array2<f32> {
    let mut dx = dy.clone();
    ndarray::Zip::from(&mut dx).and(out).for_each(|d, &o| *d *= 1.0 - o * o);
    dx
}

pub fn sigmoid(x: &Array4<f32>) -> Array4<f32> {
    x.mapv(|v| 1.0 / (1.0 + (-v).exp()))
}

pub fn sigmoid_grad(out: &Array4<f32>, dy: &Array4<f32>) -> Array4<f32> {
    let mut dx = dy.clone();
    ndarray::Zip::from(&mut dx).and(out).for_each(|d, &o| *d *= o * (1.0 - o));
    dx
}

/// Row-wise softmax.
pub fn softmax(logits: &Array2<f32>) -> Array2<f32> {
    let mut out = logits.clone();
    for mut row in out.rows_mut() {
        let max = row.fold(f32::NEG_INFINITY, |m, &v| m.max(v));
        row.mapv_inplace(|v| (v - max).exp());
        let sum = row.sum();
        row.mapv_inplace(|v| v / sum);
    }
    out
}

/// Pulls a gradient with respect to softmax probabilities back to the logits.
pub fn softmax_grad(probs: &Array2<f32>, dprobs: &Array2<f32>) -> Array2<f32> {
    let mut out = Array2::zeros(probs.dim());
    for ((p, g), mut o) in probs.rows().into_iter().zip(dprobs.rows()).zip(out.rows_mut()) {
        let dot: f32 = p.iter().zip(g.iter()).map(|(a, b)| a * b).sum();
        for ((o, &pi), &gi) in o.iter_mut().zip(p.iter()).zip(g.iter()) {
            *o = pi * (gi - dot);
        }
    }
    out
}

/// 2x2 max pooling with stride 2.
#[derive(Debug, Clone)]
pub struct PoolCache {
    argmax: Vec<usize>,
    input_dims: (usize, usize, usize, usize),
}

pub fn max_pool2(x: &Array4<f32>) -> (Array4<f32>, PoolCache) {
    let x = x.as_standard_layout();
    let (n, c, h, w) = x.dim();
    let (ho, wo) = (h / 2, w / 2);
    let xs = x.as_slice().expect("standard layout");
    let mut out = Vec::with_capacity(n * c * ho * wo);
    let mut argmax = Vec::with_capacity(n * c * ho * wo);
    for plane in 0..n * c {
        let base = plane * h * w;
        for oy in 0..ho {
            for ox in 0..wo {
                let mut best = base + 2 * oy * w + 2 * ox;
                for (dy, dx) in [(0, 1), (1, 0), (1, 1)] {
                    let idx = base + (2 * oy + dy) * w + 2 * ox + dx;
                    if xs[idx] > xs[best] {
                        best = idx;
                    }
                }
                out.push(xs[best]);
                argmax.push(best);
            }
        }
    }
    (
        Array4::from_shape_vec((n, c, ho, wo), out).expect("shape"),
        PoolCache { argmax, input_dims: (n, c, h, w) },
    )
}

pub fn max_pool2_grad(cache: &PoolCache, dy: &Array4<f32>) -> Array4<f32> {
    let dy = dy.as_standard_layout();
    let mut dx = vec![0f32; cache.input_dims.0 * cache.input_dims.1 * cache.input_dims.2 * cache.input_dims.3];
    for (&idx, &g) in cache.argmax.iter().zip(dy.iter()) {
        dx[idx] += g;
    }
    Array4::from_shape_vec(cache.input_dims, dx).expect("shape")
}

/// Global average pooling (N, C, H, W) -> (N, C).
pub fn global_avg_pool(x: &Array4<f32>) -> Array2<f32> {
    let (_, _, h, w) = x.dim();
    x.sum_axis(Axis(3)).sum_axis(Axis(2)) / (h * w) as f32
}

pub fn global_avg_pool_grad(dy: &Array2<f32>, dims: (usize, usize, usize, usize)) -> Array4<f32> {
    let (n, c, h, w) = dims;
    let scale = 1.0 / (h * w) as f32;
    let mut dx = Array4::zeros(dims);
    for b in 0..n {
        for ch in 0..c {
            dx.slice_mut(s![b, ch, .., ..]).fill(dy[[b, ch]] * scale);
        }
    }
    dx
}

/// Inverted dropout mask: kept units are scaled by `1 / (1 - rate)`.
pub fn dropout_mask<R: Rng>(dims: (usize, usize), rate: f32, rng: &mut R) -> Array2<f32> {
    let keep = 1.0 - rate;
    Array2::from_shape_simple_fn(dims, || if rng.random::<f32>() < keep { 1.0 / keep } else { 0.0 })
}

/// Adam with bias correction.
#[derive(Debug, Clone)]
pub struct Adam {
    pub learning_rate: f32,
    pub beta1: f32,
    pub beta2: f32,
    pub epsilon: f32,
    step: i32,
    first: Vec<ArrayD<f32>>,
    second: Vec<ArrayD<f32>>,
}

impl Adam {
    pub fn new(learning_rate: f32) -> Self {
        Self {
            learning_rate,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
            step: 0,
            first: Vec::new(),
            second: Vec::new(),
        }
    }

    pub fn steps(&self) -> i32 {
        self.step
    }

    pub fn step(&mut self, params: Vec<&mut Param>) {
        if self.first.is_empty() {
            self.first = params.iter().map(|p| ArrayD::zeros(p.value.raw_dim())).collect();
            self.second = self.first.clone();
        }
        assert_eq!(self.first.len(), params.len(), "optimizer bound to a different parameter set");
        self.step += 1;
        let c1 = 1.0 - (self.beta1 as f64).powi(self.step);
        let c2 = 1.0 - (self.beta2 as f64).powi(self.step);
        let step_size = (self.learning_rate as f64 * c2.sqrt() / c1) as f32;
        let eps_hat = (self.epsilon as f64 * c2.sqrt()) as f32;
        let (b1, b2) = (self.beta1, self.beta2);
        for ((p, m), v) in params.into_iter().zip(&mut self.first).zip(&mut self.second) {
            ndarray::Zip::from(&mut p.value).and(&p.grad).and(m).and(v).for_each(
                |w, &g, m, v| {
                    *m = b1 * *m + (1.0 - b1) * g;
                    *v = b2 * *v + (1.0 - b2) * g * g;
                    *w -= step_size * *m / (v.sqrt() + eps_hat);
                },
            );
        }
    }
}

pub fn to_f64(a: &Array2<f32>) -> Array2<f64> {
    a.mapv(|v| v as f64)
}

pub fn to_f32(a: &Array2<f64>) -> Array2<f32> {
    a.mapv(|v| v as f32)
}

pub fn column(a: &Array2<f32>, c: usize) -> Array1<f32> {
    a.column(c).to_owned()
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn rand4(rng: &mut ChaCha8Rng, dims: (usize, usize, usize, usize)) -> Array4<f32> {
        Array4::from_shape_simple_fn(dims, || rng.random_range(-1.0f32..1.0))
    }

    /// Brute-force direct convolution.
    fn naive_conv(x: &Array4<f32>, w: &Array2<f32>, b: &[f32], g: ConvGeometry, out_c: usize) -> Array4<f32> {
        let (n, c, h, wd) = x.dim();
        let (ho, wo) = (g.output_len(h), g.output_len(wd));
        let k = g.kernel;
        let mut y = Array4::zeros((n, out_c, ho, wo));
        for bi in 0..n {
            for o in 0..out_c {
                for oy in 0..ho {
                    for ox in 0..wo {
                        let mut acc = b[o];
                        for ch in 0..c {
                            for ky in 0..k {
                                for kx in 0..k {
                                    let iy = (oy * g.stride + ky) as isize - g.padding as isize;
                                    let ix = (ox * g.stride + kx) as isize - g.padding as isize;
                                    if iy >= 0 && ix >= 0 && (iy as usize) < h && (ix as usize) < wd {
                                        acc += x[[bi, ch, iy as usize, ix as usize]]
                                            * w[[o, (ch * k + ky) * k + kx]];
                                    }
                                }
                            }
                        }
                        y[[bi, o, oy, ox]] = acc;
                    }
                }
            }
        }
        y
    }

    #[test]
    fn conv_matches_direct_convolution() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let g = ConvGeometry { kernel: 3, stride: 2, padding: 1 };
        let mut conv = Conv2d::new("c", 2, 3, g, &mut rng);
        conv.bias.value = ArrayD::from_shape_vec(IxDyn(&[3]), vec![0.1, -0.2, 0.3]).unwrap();
        let x = rand4(&mut rng, (2, 2, 7, 6));
        let (y, _) = conv.forward(&x);
        let w = conv.weight.value.clone().into_dimensionality::<Ix2>().unwrap();
        let expected = naive_conv(&x, &w, &[0.1, -0.2, 0.3], g, 3);
        assert_eq!(y.dim(), expected.dim());
        for (a, b) in y.iter().zip(expected.iter()) {
            assert!((a - b).abs() < 1e-5);
        }
    }

    #[test]
    fn col2im_is_adjoint_of_im2col() {
        // <im2col(x), c> == <x, col2im(c)>
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let g = ConvGeometry { kernel: 4, stride: 2, padding: 1 };
        let x = rand4(&mut rng, (2, 3, 8, 8));
        let (cols, _, _) = im2col(&x, g);
        let c = Array2::from_shape_simple_fn(cols.dim(), || rng.random_range(-1.0f32..1.0));
        let lhs: f64 = cols.iter().zip(c.iter()).map(|(a, b)| (*a as f64) * (*b as f64)).sum();
        let back = col2im(&c, x.dim(), g);
        let rhs: f64 = x.iter().zip(back.iter()).map(|(a, b)| (*a as f64) * (*b as f64)).sum();
        assert!((lhs - rhs).abs() < 1e-3, "{lhs} vs {rhs}");
    }

    #[test]
    fn transposed_conv_doubles_resolution() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let g = ConvGeometry { kernel: 4, stride: 2, padding: 1 };
        let deconv = ConvTranspose2d::new("d", 4, 3, g, &mut rng);
        let (y, _) = deconv.forward(&rand4(&mut rng, (2, 4, 8, 8)));
        assert_eq!(y.dim(), (2, 3, 16, 16));
    }

    /// Loss = sum(y * r) for a fixed random r; checks backward against central differences.
    fn check_grad<F, B>(x: &Array4<f32>, forward: F, backward: B)
    where
        F: Fn(&Array4<f32>) -> Array4<f32>,
        B: Fn(&Array4<f32>, &Array4<f32>) -> Array4<f32>,
    {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let y = forward(x);
        let r = Array4::from_shape_simple_fn(y.dim(), || rng.random_range(-1.0f32..1.0));
        let dx = backward(x, &r);
        let h = 1e-2f32;
        for idx in [0usize, 7, 19, x.len() - 1] {
            let mut xp = x.clone();
            let mut xm = x.clone();
            xp.as_slice_mut().unwrap()[idx] += h;
            xm.as_slice_mut().unwrap()[idx] -= h;
            let fp: f64 = forward(&xp).iter().zip(r.iter()).map(|(a, b)| (*a * *b) as f64).sum();
            let fm: f64 = forward(&xm).iter().zip(r.iter()).map(|(a, b)| (*a * *b) as f64).sum();
            let numeric = (fp - fm) / (2.0 * h as f64);
            let analytic = dx.as_slice().unwrap()[idx] as f64;
            assert!(
                (numeric - analytic).abs() <= 1e-2 * (1.0 + analytic.abs()),
                "index {idx}: numeric {numeric} analytic {analytic}"
            );
        }
    }

    #[test]
    fn conv_input_gradient() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let g = ConvGeometry { kernel: 3, stride: 1, padding: 1 };
        let conv = Conv2d::new("c", 2, 3, g, &mut rng);
        let x = rand4(&mut rng, (2, 2, 5, 5));
        check_grad(&x, |x| conv.forward(x).0, |x, dy| {
            let (_, cache) = conv.forward(x);
            conv.input_grad(&cache, dy)
        });
    }

    #[test]
    fn transposed_conv_input_gradient() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let g = ConvGeometry { kernel: 4, stride: 2, padding: 1 };
        let deconv = ConvTranspose2d::new("d", 2, 3, g, &mut rng);
        let x = rand4(&mut rng, (1, 2, 4, 4));
        check_grad(&x, |x| deconv.forward(x).0, |x, dy| {
            let (_, cache) = deconv.forward(x);
            deconv.input_grad(&cache, dy)
        });
    }

    #[test]
    fn pooling_gradient_routes_to_argmax() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let x = rand4(&mut rng, (1, 2, 4, 4));
        check_grad(&x, |x| max_pool2(x).0, |x, dy| {
            let (_, cache) = max_pool2(x);
            max_pool2_grad(&cache, dy)
        });
    }

    #[test]
    fn conv_weight_gradient_matches_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let g = ConvGeometry { kernel: 3, stride: 1, padding: 1 };
        let mut conv = Conv2d::new("c", 2, 2, g, &mut rng);
        let x = rand4(&mut rng, (2, 2, 4, 4));
        let (y, cache) = conv.forward(&x);
        let r = Array4::from_shape_simple_fn(y.dim(), || rng.random_range(-1.0f32..1.0));
        conv.backward(&cache, &r);
        let h = 1e-2f32;
        for idx in [0usize, 5, 17] {
            let objective = |c: &Conv2d| -> f64 {
                c.forward(&x).0.iter().zip(r.iter()).map(|(a, b)| (*a * *b) as f64).sum()
            };
            let mut plus = conv.clone();
            plus.weight.value.as_slice_mut().unwrap()[idx] += h;
            let mut minus = conv.clone();
            minus.weight.value.as_slice_mut().unwrap()[idx] -= h;
            let numeric = (objective(&plus) - objective(&minus)) / (2.0 * h as f64);
            let analytic = conv.weight.grad.as_slice().unwrap()[idx] as f64;
            assert!((numeric - analytic).abs() < 1e-2 * (1.0 + analytic.abs()));
        }
    }

    #[test]
    fn softmax_rows_sum_to_one() {
        let logits = Array2::from_shape_vec((2, 3), vec![1.0, 2.0, 3.0, -50.0, 0.0, 50.0]).unwrap();
        let p = softmax(&logits);
        for row in p.rows() {
            assert!((row.sum() - 1.0).abs() < 1e-5);
            assert!(row.iter().all(|&v| v >= 0.0));
        }
    }

    #[test]
    fn adam_moves_against_gradient() {
        let mut p = Param::new("w", ArrayD::from_elem(IxDyn(&[2]), 1.0));
        p.grad = ArrayD::from_shape_vec(IxDyn(&[2]), vec![1.0, -1.0]).unwrap();
        let mut adam = Adam::new(0.1);
        adam.step(vec![&mut p]);
        assert!(p.value[[0]] < 1.0 && p.value[[1]] > 1.0);
        // first bias-corrected step has magnitude ~ learning rate
        assert!((p.value[[0]] - 0.9).abs() < 1e-4);
    }
}
