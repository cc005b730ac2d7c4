use rayon::prelude::*;

use super::Tensor;
use crate::error::{Error, Result};

/// Zero padding, in pixels, on each side of the input.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct Padding {
    pub top: usize,
    pub bottom: usize,
    pub left: usize,
    pub right: usize,
}

impl Padding {
    pub fn uniform(p: usize) -> Self {
        Self {
            top: p,
            bottom: p,
            left: p,
            right: p,
        }
    }

    /// Padding that keeps `H x W` unchanged for an odd kernel at stride 1.
    pub fn same(kernel_h: usize, kernel_w: usize) -> Self {
        Self {
            top: kernel_h / 2,
            bottom: kernel_h / 2,
            left: kernel_w / 2,
            right: kernel_w / 2,
        }
    }
}

/// Weights `(out, in, kH, kW)`, bias `(out)`, padding and stride of a 2D
/// cross-correlation.
#[derive(Debug, Clone, PartialEq)]
pub struct Conv2dParams {
    weights: Tensor,
    bias: Tensor,
    padding: Padding,
    stride: usize,
}

impl Conv2dParams {
    /// Stride 1 with "same" padding.
    pub fn new(weights: Tensor, bias: Tensor) -> Result<Self> {
        let (out_ch, _, kh, kw) = match weights.shape() {
            &[o, i, kh, kw] => (o, i, kh, kw),
            other => {
                return Err(Error::shape(format!(
                    "conv weights must be (out, in, kH, kW), got {other:?}"
                )))
            }
        };
        if kh % 2 == 0 || kw % 2 == 0 {
            return Err(Error::invalid(format!(
                "conv kernel must have odd size, got {kh}x{kw}"
            )));
        }
        if bias.shape() != [out_ch] {
            return Err(Error::shape(format!(
                "conv bias must be ({out_ch}), got {:?}",
                bias.shape()
            )));
        }
        Ok(Self {
            weights,
            bias,
            padding: Padding::same(kh, kw),
            stride: 1,
        })
    }

    pub fn with_padding(mut self, padding: Padding) -> Self {
        self.padding = padding;
        self
    }

    pub fn with_stride(mut self, stride: usize) -> Result<Self> {
        if stride == 0 {
            return Err(Error::invalid("conv stride must be positive"));
        }
        self.stride = stride;
        Ok(self)
    }

    /// All-zero weights and bias.
    pub fn zeros(out_ch: usize, in_ch: usize, kernel: usize) -> Result<Self> {
        Self::new(
            Tensor::zeros(vec![out_ch, in_ch, kernel, kernel]),
            Tensor::zeros(vec![out_ch]),
        )
    }

    /// Kernel whose output channel `o` copies input channel `select[o]`
    /// (center tap 1, everything else 0). Zero bias.
    pub fn selection(in_ch: usize, kernel: usize, select: &[usize]) -> Result<Self> {
        let out_ch = select.len();
        let mut w = Tensor::zeros(vec![out_ch, in_ch, kernel, kernel]);
        for (o, &i) in select.iter().enumerate() {
            if i >= in_ch {
                return Err(Error::invalid(format!(
                    "selection index {i} out of range for {in_ch} inputs"
                )));
            }
            w.set(&[o, i, kernel / 2, kernel / 2], 1.0);
        }
        Self::new(w, Tensor::zeros(vec![out_ch]))
    }

    /// Channel-preserving identity kernel.
    pub fn identity(channels: usize, kernel: usize) -> Result<Self> {
        let select: Vec<usize> = (0..channels).collect();
        Self::selection(channels, kernel, &select)
    }

    pub fn weights(&self) -> &Tensor {
        &self.weights
    }

    pub fn bias(&self) -> &Tensor {
        &self.bias
    }

    pub fn padding(&self) -> Padding {
        self.padding
    }

    pub fn stride(&self) -> usize {
        self.stride
    }

    pub fn out_channels(&self) -> usize {
        self.weights.shape()[0]
    }

    pub fn in_channels(&self) -> usize {
        self.weights.shape()[1]
    }

    pub fn kernel_size(&self) -> (usize, usize) {
        (self.weights.shape()[2], self.weights.shape()[3])
    }
}

/// 2D cross-correlation with zero padding. Input and output are `C x H x W`.
pub fn conv2d(input: &Tensor, params: &Conv2dParams) -> Result<Tensor> {
    let (in_ch, h, w) = input.dims3()?;
    if in_ch != params.in_channels() {
        return Err(Error::shape(format!(
            "conv expects {} input channels, got {in_ch}",
            params.in_channels()
        )));
    }
    let (kh, kw) = params.kernel_size();
    let pad = params.padding;
    let stride = params.stride;
    let padded_h = h + pad.top + pad.bottom;
    let padded_w = w + pad.left + pad.right;
    if padded_h < kh || padded_w < kw {
        return Err(Error::shape(format!(
            "{kh}x{kw} kernel does not fit a padded {padded_h}x{padded_w} input"
        )));
    }
    let out_h = (padded_h - kh) / stride + 1;
    let out_w = (padded_w - kw) / stride + 1;
    let out_ch = params.out_channels();
    let weights = params.weights.data();
    let bias = params.bias.data();
    let src = input.data();

    let mut out = vec![0.0; out_ch * out_h * out_w];
    out.par_chunks_mut((out_h * out_w).max(1))
        .enumerate()
        .for_each(|(o, plane)| {
            let w_o = &weights[o * in_ch * kh * kw..(o + 1) * in_ch * kh * kw];
            for oy in 0..out_h {
                for ox in 0..out_w {
                    let mut acc = bias[o];
                    for c in 0..in_ch {
                        let w_oc = &w_o[c * kh * kw..(c + 1) * kh * kw];
                        let src_c = &src[c * h * w..(c + 1) * h * w];
                        for ky in 0..kh {
                            let iy = (oy * stride + ky) as isize - pad.top as isize;
                            if iy < 0 || iy >= h as isize {
                                continue;
                            }
                            let row = &src_c[iy as usize * w..(iy as usize + 1) * w];
                            for kx in 0..kw {
                                let ix = (ox * stride + kx) as isize - pad.left as isize;
                                if ix < 0 || ix >= w as isize {
                                    continue;
                                }
                                acc += w_oc[ky * kw + kx] * row[ix as usize];
                            }
                        }
                    }
                    plane[oy * out_w + ox] = acc;
                }
            }
        });
    Tensor::new(vec![out_ch, out_h, out_w], out)
}

/// Affine layer `y = W x + b` with `W` of shape `(out, in)`.
#[derive(Debug, Clone, PartialEq)]
pub struct Linear {
    weight: Tensor,
    bias: Tensor,
}

impl Linear {
    pub fn new(weight: Tensor, bias: Tensor) -> Result<Self> {
        let out = match weight.shape() {
            &[o, _] => o,
            other => {
                return Err(Error::shape(format!(
                    "linear weight must be (out, in), got {other:?}"
                )))
            }
        };
        if bias.shape() != [out] {
            return Err(Error::shape(format!(
                "linear bias must be ({out}), got {:?}",
                bias.shape()
            )));
        }
        Ok(Self { weight, bias })
    }

    pub fn zeros(out: usize, input: usize) -> Self {
        Self {
            weight: Tensor::zeros(vec![out, input]),
            bias: Tensor::zeros(vec![out]),
        }
    }

    pub fn in_features(&self) -> usize {
        self.weight.shape()[1]
    }

    pub fn out_features(&self) -> usize {
        self.weight.shape()[0]
    }

    pub fn weight(&self) -> &Tensor {
        &self.weight
    }

    pub fn bias(&self) -> &Tensor {
        &self.bias
    }

    pub fn forward(&self, x: &[f64]) -> Result<Vec<f64>> {
        linear(x, self)
    }
}

pub fn linear(x: &[f64], layer: &Linear) -> Result<Vec<f64>> {
    let n_in = layer.in_features();
    if x.len() != n_in {
        return Err(Error::shape(format!(
            "linear layer expects {n_in} inputs, got {}",
            x.len()
        )));
    }
    let w = layer.weight.data();
    Ok(layer
        .bias
        .data()
        .iter()
        .enumerate()
        .map(|(o, &b)| {
            w[o * n_in..(o + 1) * n_in]
                .iter()
                .zip(x)
                .fold(b, |acc, (wi, xi)| acc + wi * xi)
        })
        .collect())
}

/// Stack of linear layers with a rectifier between consecutive layers (none
/// after the last one).
#[derive(Debug, Clone, PartialEq)]
pub struct Mlp {
    layers: Vec<Linear>,
}

impl Mlp {
    pub fn new(layers: Vec<Linear>) -> Result<Self> {
        if layers.is_empty() {
            return Err(Error::invalid("an MLP needs at least one layer"));
        }
        for (j, pair) in layers.windows(2).enumerate() {
            if pair[0].out_features() != pair[1].in_features() {
                return Err(Error::shape(format!(
                    "layer {j} outputs {} features but layer {} expects {}",
                    pair[0].out_features(),
                    j + 1,
                    pair[1].in_features()
                )));
            }
        }
        Ok(Self { layers })
    }

    pub fn layers(&self) -> &[Linear] {
        &self.layers
    }

    pub fn in_features(&self) -> usize {
        self.layers[0].in_features()
    }

    pub fn out_features(&self) -> usize {
        self.layers[self.layers.len() - 1].out_features()
    }

    pub fn forward(&self, x: &[f64]) -> Result<Vec<f64>> {
        let mut h = x.to_vec();
        let last = self.layers.len() - 1;
        for (j, layer) in self.layers.iter().enumerate() {
            h = linear(&h, layer)?;
            if j < last {
                h.iter_mut().for_each(|v| *v = relu(*v));
            }
        }
        Ok(h)
    }
}

pub fn relu(x: f64) -> f64 {
    x.max(0.0)
}

pub fn sigmoid_scalar(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

pub fn sigmoid(input: &Tensor) -> Tensor {
    input.map(sigmoid_scalar)
}

/// Softmax along `axis`, with the per-slice maximum subtracted first.
pub fn softmax(input: &Tensor, axis: usize) -> Result<Tensor> {
    let shape = input.shape();
    if axis >= shape.len() {
        return Err(Error::invalid(format!(
            "softmax axis {axis} out of range for rank {}",
            shape.len()
        )));
    }
    let n = shape[axis];
    let inner: usize = shape[axis + 1..].iter().product();
    let outer: usize = shape[..axis].iter().product();
    let src = input.data();
    let mut out = vec![0.0; src.len()];
    for o in 0..outer {
        for i in 0..inner {
            let at = |k: usize| (o * n + k) * inner + i;
            let max = (0..n).map(|k| src[at(k)]).fold(f64::NEG_INFINITY, f64::max);
            let mut sum = 0.0;
            for k in 0..n {
                let e = (src[at(k)] - max).exp();
                out[at(k)] = e;
                sum += e;
            }
            for k in 0..n {
                out[at(k)] /= sum;
            }
        }
    }
    Tensor::new(shape.to_vec(), out)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Pool {
    Avg,
    Max,
}

/// Per-channel mean or maximum over all spatial positions of `C x H x W`.
pub fn global_pool(input: &Tensor, mode: Pool) -> Result<Vec<f64>> {
    let (c, h, w) = input.dims3()?;
    if h == 0 || w == 0 {
        return Err(Error::shape(
            "global pooling needs a non-empty spatial extent",
        ));
    }
    Ok((0..c)
        .map(|ch| {
            let plane = input.channel(ch);
            match mode {
                Pool::Avg => plane.iter().sum::<f64>() / plane.len() as f64,
                Pool::Max => plane.iter().copied().fold(f64::NEG_INFINITY, f64::max),
            }
        })
        .collect())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ChannelReduce {
    Max,
    Mean,
}

/// Reduces `C x H x W` across channels to `1 x H x W`.
pub fn channel_reduce(input: &Tensor, mode: ChannelReduce) -> Result<Tensor> {
    let (c, h, w) = input.dims3()?;
    if c == 0 {
        return Err(Error::shape("channel reduction needs at least one channel"));
    }
    let plane = h * w;
    let src = input.data();
    let out = (0..plane)
        .map(|p| {
            let values = (0..c).map(|ch| src[ch * plane + p]);
            match mode {
                ChannelReduce::Max => values.fold(f64::NEG_INFINITY, f64::max),
                ChannelReduce::Mean => values.sum::<f64>() / c as f64,
            }
        })
        .collect();
    Tensor::new(vec![1, h, w], out)
}
