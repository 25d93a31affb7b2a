use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::datasets::ImageStack;
use crate::error::{precondition, Error, Result};
use crate::numerics::Matrix;
use crate::seeding::rng_from;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Activation {
    Relu,
    Sigmoid,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Resample {
    None,
    Maxpool2,
    Upsample2,
}

/// `conv3x3(in -> out)` followed by an activation and a resampling step.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct LayerSpec {
    pub in_channels: usize,
    pub out_channels: usize,
    pub activation: Activation,
    pub resample: Resample,
}

impl LayerSpec {
    pub const fn new(
        in_channels: usize,
        out_channels: usize,
        activation: Activation,
        resample: Resample,
    ) -> Self {
        Self {
            in_channels,
            out_channels,
            activation,
            resample,
        }
    }

    pub fn weight_count(&self) -> usize {
        self.out_channels * self.in_channels * 9
    }

    pub fn param_count(&self) -> usize {
        self.weight_count() + self.out_channels
    }
}

/// Layer stack plus input shape. `encoder_layers` marks where the latent
/// code is read off (0 when the network is used as a plain mapping).
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConvNetSpec {
    pub height: usize,
    pub width: usize,
    pub channels: usize,
    pub layers: Vec<LayerSpec>,
    pub encoder_layers: usize,
}

const ENCODER: [LayerSpec; 2] = [
    LayerSpec::new(1, 2, Activation::Relu, Resample::Maxpool2),
    LayerSpec::new(2, 3, Activation::Relu, Resample::Maxpool2),
];

const DECODER: [LayerSpec; 3] = [
    LayerSpec::new(3, 3, Activation::Relu, Resample::Upsample2),
    LayerSpec::new(3, 2, Activation::Relu, Resample::Upsample2),
    LayerSpec::new(2, 1, Activation::Sigmoid, Resample::None),
];

pub const ENCODER_PARAMS: usize = 77;
pub const DECODER_PARAMS: usize = 159;

impl ConvNetSpec {
    pub fn new(
        height: usize,
        width: usize,
        channels: usize,
        layers: Vec<LayerSpec>,
        encoder_layers: usize,
    ) -> Result<Self> {
        let spec = Self {
            height,
            width,
            channels,
            layers,
            encoder_layers,
        };
        spec.validate()?;
        Ok(spec)
    }

    /// Five-layer hourglass on `28 x 28 x 1`: channels 2, 3 | 3, 2, 1.
    pub fn mnist_autoencoder() -> Self {
        let spec = Self {
            height: 28,
            width: 28,
            channels: 1,
            layers: ENCODER.iter().chain(DECODER.iter()).copied().collect(),
            encoder_layers: 2,
        };
        assert_eq!(spec.encoder_param_count(), ENCODER_PARAMS);
        assert_eq!(spec.decoder_param_count(), DECODER_PARAMS);
        spec
    }

    pub fn validate(&self) -> Result<()> {
        if self.layers.is_empty() || self.encoder_layers > self.layers.len() {
            return precondition("network needs layers and a valid encoder boundary");
        }
        let (mut c, mut h, mut w) = (self.channels, self.height, self.width);
        for (l, layer) in self.layers.iter().enumerate() {
            if layer.in_channels != c {
                return precondition(format!(
                    "layer {l} expects {} channels, receives {c}",
                    layer.in_channels
                ));
            }
            if h == 0 || w == 0 {
                return precondition(format!("layer {l} receives an empty image"));
            }
            c = layer.out_channels;
            match layer.resample {
                Resample::None => {}
                Resample::Maxpool2 => {
                    if h % 2 != 0 || w % 2 != 0 {
                        return precondition(format!("layer {l} pools an odd {h}x{w} map"));
                    }
                    h /= 2;
                    w /= 2;
                }
                Resample::Upsample2 => {
                    h *= 2;
                    w *= 2;
                }
            }
        }
        Ok(())
    }

    /// `(channels, height, width)` entering layer `l` (or the output for
    /// `l = layers.len()`).
    pub fn shape_at(&self, l: usize) -> (usize, usize, usize) {
        let (mut c, mut h, mut w) = (self.channels, self.height, self.width);
        for layer in &self.layers[..l] {
            c = layer.out_channels;
            match layer.resample {
                Resample::None => {}
                Resample::Maxpool2 => {
                    h /= 2;
                    w /= 2;
                }
                Resample::Upsample2 => {
                    h *= 2;
                    w *= 2;
                }
            }
        }
        (c, h, w)
    }

    pub fn output_shape(&self) -> (usize, usize, usize) {
        self.shape_at(self.layers.len())
    }

    pub fn latent_dim(&self) -> usize {
        let (c, h, w) = self.shape_at(self.encoder_layers);
        c * h * w
    }

    pub fn param_count(&self) -> usize {
        self.layers.iter().map(LayerSpec::param_count).sum()
    }

    pub fn encoder_param_count(&self) -> usize {
        self.layers[..self.encoder_layers]
            .iter()
            .map(LayerSpec::param_count)
            .sum()
    }

    pub fn decoder_param_count(&self) -> usize {
        self.param_count() - self.encoder_param_count()
    }

    /// Offset of layer `l`'s weights in the flat parameter vector.
    pub fn param_offset(&self, l: usize) -> usize {
        self.layers[..l].iter().map(LayerSpec::param_count).sum()
    }
}

/// Batch of `count` images, each `channels x height x width`, flattened
/// image-major then channel-major then row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor {
    pub count: usize,
    pub channels: usize,
    pub height: usize,
    pub width: usize,
    pub data: Vec<f64>,
}

impl Tensor {
    pub fn zeros(count: usize, channels: usize, height: usize, width: usize) -> Self {
        Self {
            count,
            channels,
            height,
            width,
            data: vec![0.0; count * channels * height * width],
        }
    }

    pub fn from_stack(stack: &ImageStack) -> Self {
        Self {
            count: stack.count,
            channels: 1,
            height: stack.height,
            width: stack.width,
            data: stack.pixels.clone(),
        }
    }

    /// One column per sample, as used for latent codes.
    pub fn from_columns(m: &Matrix, channels: usize, height: usize, width: usize) -> Result<Self> {
        if m.nrows() != channels * height * width {
            return Err(Error::Dimension {
                context: "tensor from columns",
                expected: (channels * height * width).to_string(),
                actual: m.nrows().to_string(),
            });
        }
        Ok(Self {
            count: m.ncols(),
            channels,
            height,
            width,
            data: m.as_slice().to_vec(),
        })
    }

    pub fn sample_len(&self) -> usize {
        self.channels * self.height * self.width
    }

    pub fn sample(&self, k: usize) -> &[f64] {
        let n = self.sample_len();
        &self.data[k * n..(k + 1) * n]
    }

    pub fn to_columns(&self) -> Matrix {
        Matrix::from_column_slice(self.sample_len(), self.count, &self.data)
    }

    pub fn select(&self, idx: &[usize]) -> Tensor {
        let n = self.sample_len();
        let mut data = Vec::with_capacity(idx.len() * n);
        for &k in idx {
            data.extend_from_slice(self.sample(k));
        }
        Tensor {
            count: idx.len(),
            channels: self.channels,
            height: self.height,
            width: self.width,
            data,
        }
    }

    pub fn take(&self, count: usize) -> Tensor {
        let idx: Vec<usize> = (0..count.min(self.count)).collect();
        self.select(&idx)
    }

    fn shape(&self) -> (usize, usize, usize) {
        (self.channels, self.height, self.width)
    }
}

/// Glorot-uniform weights in `+-sqrt(6 / (fan_in + fan_out))`, zero biases.
pub fn init_params(spec: &ConvNetSpec, seed: u64) -> Vec<f64> {
    let mut rng = rng_from(seed);
    let mut params = Vec::with_capacity(spec.param_count());
    for layer in &spec.layers {
        let fan = 9.0 * (layer.in_channels + layer.out_channels) as f64;
        let limit = (6.0 / fan).sqrt();
        params.extend((0..layer.weight_count()).map(|_| rng.gen_range(-limit..=limit)));
        params.extend(std::iter::repeat_n(0.0, layer.out_channels));
    }
    params
}

/// Per-sample intermediate values retained for the backward pass.
#[derive(Debug, Clone)]
struct LayerCache {
    input: Vec<f64>,
    /// post-activation, pre-resample
    activated: Vec<f64>,
    /// flat index into `activated` chosen by each pooled output
    argmax: Vec<usize>,
}

/// Cached activations of a forward pass, one entry per sample.
#[derive(Debug, Clone)]
pub struct ForwardCache {
    samples: Vec<Vec<LayerCache>>,
}

fn conv3x3(
    input: &[f64],
    (cin, h, w): (usize, usize, usize),
    weights: &[f64],
    bias: &[f64],
    cout: usize,
) -> Vec<f64> {
    let plane = h * w;
    let mut out = vec![0.0; cout * plane];
    for o in 0..cout {
        let dst = &mut out[o * plane..(o + 1) * plane];
        dst.iter_mut().for_each(|v| *v = bias[o]);
        for i in 0..cin {
            let src = &input[i * plane..(i + 1) * plane];
            let k = &weights[(o * cin + i) * 9..(o * cin + i + 1) * 9];
            for y in 0..h {
                for ky in 0..3 {
                    let sy = y as isize + ky as isize - 1;
                    if sy < 0 || sy >= h as isize {
                        continue;
                    }
                    let srow = &src[sy as usize * w..(sy as usize + 1) * w];
                    let drow = &mut dst[y * w..(y + 1) * w];
                    for kx in 0..3 {
                        let kv = k[ky * 3 + kx];
                        // dst[x] += kv * srow[x + kx - 1]
                        let (x0, x1) = match kx {
                            0 => (1, w),
                            1 => (0, w),
                            _ => (0, w - 1),
                        };
                        for x in x0..x1 {
                            drow[x] += kv * srow[x + kx - 1];
                        }
                    }
                }
            }
        }
    }
    out
}

/// Accumulates weight/bias gradients and returns the input gradient.
fn conv3x3_backward(
    input: &[f64],
    (cin, h, w): (usize, usize, usize),
    weights: &[f64],
    cout: usize,
    grad_out: &[f64],
    grad_w: &mut [f64],
    grad_b: &mut [f64],
) -> Vec<f64> {
    let plane = h * w;
    let mut grad_in = vec![0.0; cin * plane];
    for o in 0..cout {
        let g = &grad_out[o * plane..(o + 1) * plane];
        grad_b[o] += g.iter().sum::<f64>();
        for i in 0..cin {
            let src = &input[i * plane..(i + 1) * plane];
            let gi = &mut grad_in[i * plane..(i + 1) * plane];
            let base = (o * cin + i) * 9;
            for ky in 0..3 {
                for kx in 0..3 {
                    let kv = weights[base + ky * 3 + kx];
                    let mut acc = 0.0;
                    for y in 0..h {
                        let sy = y as isize + ky as isize - 1;
                        if sy < 0 || sy >= h as isize {
                            continue;
                        }
                        let sy = sy as usize;
                        let (x0, x1) = match kx {
                            0 => (1, w),
                            1 => (0, w),
                            _ => (0, w - 1),
                        };
                        for x in x0..x1 {
                            let sx = x + kx - 1;
                            let gv = g[y * w + x];
                            acc += gv * src[sy * w + sx];
                            gi[sy * w + sx] += gv * kv;
                        }
                    }
                    grad_w[base + ky * 3 + kx] += acc;
                }
            }
        }
    }
    grad_in
}

fn activate(z: &mut [f64], act: Activation) {
    match act {
        Activation::Relu => z.iter_mut().for_each(|v| *v = v.max(0.0)),
        Activation::Sigmoid => z.iter_mut().for_each(|v| *v = 1.0 / (1.0 + (-*v).exp())),
    }
}

fn maxpool2(a: &[f64], (c, h, w): (usize, usize, usize)) -> (Vec<f64>, Vec<usize>) {
    let (oh, ow) = (h / 2, w / 2);
    let mut out = Vec::with_capacity(c * oh * ow);
    let mut arg = Vec::with_capacity(c * oh * ow);
    for ch in 0..c {
        for y in 0..oh {
            for x in 0..ow {
                // row-major scan; strict `>` keeps the first maximum
                let mut best = ch * h * w + 2 * y * w + 2 * x;
                for (dy, dx) in [(0, 1), (1, 0), (1, 1)] {
                    let idx = ch * h * w + (2 * y + dy) * w + 2 * x + dx;
                    if a[idx] > a[best] {
                        best = idx;
                    }
                }
                out.push(a[best]);
                arg.push(best);
            }
        }
    }
    (out, arg)
}

fn upsample2(a: &[f64], (c, h, w): (usize, usize, usize)) -> Vec<f64> {
    let (oh, ow) = (2 * h, 2 * w);
    let mut out = vec![0.0; c * oh * ow];
    for ch in 0..c {
        for y in 0..oh {
            for x in 0..ow {
                out[ch * oh * ow + y * ow + x] = a[ch * h * w + (y / 2) * w + x / 2];
            }
        }
    }
    out
}

fn upsample2_backward(g: &[f64], (c, h, w): (usize, usize, usize)) -> Vec<f64> {
    let (oh, ow) = (2 * h, 2 * w);
    let mut out = vec![0.0; c * h * w];
    for ch in 0..c {
        for y in 0..oh {
            for x in 0..ow {
                out[ch * h * w + (y / 2) * w + x / 2] += g[ch * oh * ow + y * ow + x];
            }
        }
    }
    out
}

fn forward_sample(
    spec: &ConvNetSpec,
    params: &[f64],
    sample: &[f64],
    layers: std::ops::Range<usize>,
    keep: bool,
) -> (Vec<f64>, Vec<LayerCache>) {
    let mut a = sample.to_vec();
    let mut caches = Vec::new();
    for l in layers {
        let layer = spec.layers[l];
        let shape = spec.shape_at(l);
        let off = spec.param_offset(l);
        let wts = &params[off..off + layer.weight_count()];
        let bias = &params[off + layer.weight_count()..off + layer.param_count()];
        let mut z = conv3x3(&a, shape, wts, bias, layer.out_channels);
        activate(&mut z, layer.activation);
        let post = (layer.out_channels, shape.1, shape.2);
        let (next, argmax) = match layer.resample {
            Resample::None => (z.clone(), Vec::new()),
            Resample::Maxpool2 => maxpool2(&z, post),
            Resample::Upsample2 => (upsample2(&z, post), Vec::new()),
        };
        if keep {
            caches.push(LayerCache {
                input: std::mem::take(&mut a),
                activated: z,
                argmax,
            });
        }
        a = next;
    }
    (a, caches)
}

fn check_input(spec: &ConvNetSpec, params: &[f64], batch: &Tensor, first: usize) -> Result<()> {
    if params.len() != spec.param_count() {
        return Err(Error::Dimension {
            context: "network parameters",
            expected: spec.param_count().to_string(),
            actual: params.len().to_string(),
        });
    }
    let expected = spec.shape_at(first);
    if batch.shape() != expected || batch.data.len() != batch.count * batch.sample_len() {
        return Err(Error::Dimension {
            context: "network input",
            expected: format!("{expected:?}"),
            actual: format!("{:?}", batch.shape()),
        });
    }
    Ok(())
}

/// Runs layers `first..last` on a batch whose samples have the shape
/// entering layer `first`.
pub fn forward_layers(
    spec: &ConvNetSpec,
    params: &[f64],
    batch: &Tensor,
    first: usize,
    last: usize,
) -> Result<Tensor> {
    check_input(spec, params, batch, first)?;
    let (c, h, w) = spec.shape_at(last);
    let outs: Vec<Vec<f64>> = (0..batch.count)
        .into_par_iter()
        .map(|k| forward_sample(spec, params, batch.sample(k), first..last, false).0)
        .collect();
    Ok(Tensor {
        count: batch.count,
        channels: c,
        height: h,
        width: w,
        data: outs.concat(),
    })
}

/// Full forward pass with cached activations.
pub fn forward(
    spec: &ConvNetSpec,
    params: &[f64],
    batch: &Tensor,
) -> Result<(Tensor, ForwardCache)> {
    check_input(spec, params, batch, 0)?;
    let (c, h, w) = spec.output_shape();
    let results: Vec<(Vec<f64>, Vec<LayerCache>)> = (0..batch.count)
        .into_par_iter()
        .map(|k| forward_sample(spec, params, batch.sample(k), 0..spec.layers.len(), true))
        .collect();
    let mut data = Vec::with_capacity(batch.count * c * h * w);
    let mut samples = Vec::with_capacity(batch.count);
    for (out, cache) in results {
        data.extend(out);
        samples.push(cache);
    }
    Ok((
        Tensor {
            count: batch.count,
            channels: c,
            height: h,
            width: w,
            data,
        },
        ForwardCache { samples },
    ))
}

fn backward_sample(
    spec: &ConvNetSpec,
    params: &[f64],
    caches: &[LayerCache],
    grad_out: Vec<f64>,
) -> Vec<f64> {
    let mut grads = vec![0.0; spec.param_count()];
    let mut g = grad_out;
    for l in (0..spec.layers.len()).rev() {
        let layer = spec.layers[l];
        let cache = &caches[l];
        let shape = spec.shape_at(l);
        let post = (layer.out_channels, shape.1, shape.2);
        // through the resampling step
        let mut g_act = match layer.resample {
            Resample::None => g,
            Resample::Maxpool2 => {
                let mut back = vec![0.0; cache.activated.len()];
                for (gv, &idx) in g.iter().zip(&cache.argmax) {
                    back[idx] += gv;
                }
                back
            }
            Resample::Upsample2 => upsample2_backward(&g, post),
        };
        // through the activation
        match layer.activation {
            Activation::Relu => g_act.iter_mut().zip(&cache.activated).for_each(|(gv, &a)| {
                if a <= 0.0 {
                    *gv = 0.0;
                }
            }),
            Activation::Sigmoid => g_act
                .iter_mut()
                .zip(&cache.activated)
                .for_each(|(gv, &s)| *gv *= s * (1.0 - s)),
        }
        let off = spec.param_offset(l);
        let wc = layer.weight_count();
        let (gw, gb) = grads[off..off + layer.param_count()].split_at_mut(wc);
        g = conv3x3_backward(
            &cache.input,
            shape,
            &params[off..off + wc],
            layer.out_channels,
            &g_act,
            gw,
            gb,
        );
    }
    grads
}

/// Mean squared error over batch and pixels, and its gradient with respect
/// to every parameter. Per-sample gradients are summed in sample order.
pub fn loss_and_grad(
    spec: &ConvNetSpec,
    params: &[f64],
    input: &Tensor,
    target: &Tensor,
) -> Result<(f64, Vec<f64>)> {
    let out_shape = spec.output_shape();
    if target.shape() != out_shape || target.count != input.count {
        return Err(Error::Dimension {
            context: "loss target",
            expected: format!("{} x {out_shape:?}", input.count),
            actual: format!("{} x {:?}", target.count, target.shape()),
        });
    }
    if input.count == 0 {
        return precondition("empty batch");
    }
    let (out, cache) = forward(spec, params, input)?;
    let denom = (out.data.len()) as f64;
    let per_sample: Vec<(f64, Vec<f64>)> = (0..input.count)
        .into_par_iter()
        .map(|k| {
            let o = out.sample(k);
            let t = target.sample(k);
            let mut sq = 0.0;
            let g: Vec<f64> = o
                .iter()
                .zip(t)
                .map(|(a, b)| {
                    let d = a - b;
                    sq += d * d;
                    2.0 * d / denom
                })
                .collect();
            (sq, backward_sample(spec, params, &cache.samples[k], g))
        })
        .collect();
    let mut total = 0.0;
    let mut grads = vec![0.0; spec.param_count()];
    for (sq, g) in per_sample {
        total += sq;
        grads.iter_mut().zip(g).for_each(|(a, b)| *a += b);
    }
    Ok((total / denom, grads))
}

/// Latent codes (one column per image) from the encoder layers.
pub fn encode_batch(spec: &ConvNetSpec, params: &[f64], batch: &Tensor) -> Result<Matrix> {
    Ok(forward_layers(spec, params, batch, 0, spec.encoder_layers)?.to_columns())
}

/// Decoder output for latent codes stored one per column.
pub fn decode_batch(spec: &ConvNetSpec, params: &[f64], latent: &Matrix) -> Result<Tensor> {
    let (c, h, w) = spec.shape_at(spec.encoder_layers);
    let z = Tensor::from_columns(latent, c, h, w)?;
    forward_layers(spec, params, &z, spec.encoder_layers, spec.layers.len())
}
