//! 1-D convolution, transposed convolution and dense layers with explicit
//! forward caches.
//!
//! Convolution layers take `[B, C, L]` (or unbatched `[C, L]`) tensors and
//! use the cross-correlation convention. Dense layers take `[B, F]` or `[F]`.

use super::tensor::{gemm, Tensor};
use crate::error::{Error, Result};

pub const LRELU_SLOPE: f64 = 0.2;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LayerKind {
    Conv1d,
    Deconv1d,
    Dense,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Padding {
    /// Zero padding totalling `kernel - 1`, the odd sample on the right.
    Same,
    Valid,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Activation {
    LRelu,
    Linear,
    Sigmoid,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct LayerSpec {
    pub kind: LayerKind,
    pub in_channels: usize,
    pub out_channels: usize,
    pub kernel: usize,
    pub stride: usize,
    pub padding: Padding,
    pub activation: Activation,
}

impl LayerSpec {
    pub fn conv1d(in_channels: usize, out_channels: usize, kernel: usize, stride: usize) -> Self {
        Self {
            kind: LayerKind::Conv1d,
            in_channels,
            out_channels,
            kernel,
            stride,
            padding: Padding::Same,
            activation: Activation::LRelu,
        }
    }

    pub fn deconv1d(in_channels: usize, out_channels: usize, kernel: usize, stride: usize) -> Self {
        Self {
            kind: LayerKind::Deconv1d,
            ..Self::conv1d(in_channels, out_channels, kernel, stride)
        }
    }

    pub fn dense(inputs: usize, outputs: usize) -> Self {
        Self {
            kind: LayerKind::Dense,
            ..Self::conv1d(inputs, outputs, 1, 1)
        }
    }

    pub fn with_activation(mut self, activation: Activation) -> Self {
        self.activation = activation;
        self
    }

    pub fn with_padding(mut self, padding: Padding) -> Self {
        self.padding = padding;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.kernel == 0 || self.stride == 0 {
            return Err(Error::Shape("kernel and stride must be >= 1".into()));
        }
        if self.in_channels == 0 || self.out_channels == 0 {
            return Err(Error::Shape("channel counts must be >= 1".into()));
        }
        Ok(())
    }

    pub fn weight_shape(&self) -> Vec<usize> {
        match self.kind {
            LayerKind::Conv1d => vec![self.out_channels, self.in_channels, self.kernel],
            LayerKind::Deconv1d => vec![self.in_channels, self.out_channels, self.kernel],
            LayerKind::Dense => vec![self.out_channels, self.in_channels],
        }
    }

    pub fn bias_shape(&self) -> Vec<usize> {
        vec![self.out_channels]
    }

    /// `(fan_in, fan_out)` for scaled-uniform initialization: the number of
    /// terms feeding one output and the number of outputs one input reaches.
    /// Strided layers only touch every `stride`-th position.
    pub fn fans(&self) -> (usize, usize) {
        let taps = |c: usize| (c * self.kernel).div_ceil(self.stride).max(1);
        match self.kind {
            LayerKind::Dense => (self.in_channels, self.out_channels),
            LayerKind::Conv1d => (self.in_channels * self.kernel, taps(self.out_channels)),
            LayerKind::Deconv1d => (taps(self.in_channels), self.out_channels * self.kernel),
        }
    }

    fn pad_left(&self) -> usize {
        match self.padding {
            Padding::Same => (self.kernel - 1) / 2,
            Padding::Valid => 0,
        }
    }

    /// Output length along the sequence axis for an input of length `len`.
    pub fn output_len(&self, len: usize) -> Result<usize> {
        match (self.kind, self.padding) {
            (LayerKind::Dense, _) => Ok(1),
            (LayerKind::Conv1d, Padding::Same) => Ok(len.div_ceil(self.stride)),
            (LayerKind::Conv1d, Padding::Valid) => {
                if len < self.kernel {
                    Err(Error::Shape(format!(
                        "valid convolution needs length >= {}, got {len}",
                        self.kernel
                    )))
                } else {
                    Ok((len - self.kernel) / self.stride + 1)
                }
            }
            (LayerKind::Deconv1d, Padding::Same) => Ok(len * self.stride),
            (LayerKind::Deconv1d, Padding::Valid) => Ok((len - 1) * self.stride + self.kernel),
        }
    }
}

/// Borrowed layer weights.
#[derive(Debug, Clone, Copy)]
pub struct LayerParams<'a> {
    pub weight: &'a Tensor,
    pub bias: &'a Tensor,
}

#[derive(Debug, Clone)]
pub struct LayerGrads {
    pub input: Tensor,
    pub weight: Tensor,
    pub bias: Tensor,
}

/// Everything the backward pass needs from a forward call.
#[derive(Debug, Clone)]
pub struct LayerCache {
    spec: LayerSpec,
    input_shape: Vec<usize>,
    batch: usize,
    in_len: usize,
    out_len: usize,
    /// im2col matrix (conv), permuted input (deconv) or input (dense).
    saved: Vec<f64>,
    pre_activation: Option<Vec<f64>>,
}

impl LayerCache {
    pub fn spec(&self) -> &LayerSpec {
        &self.spec
    }
}

pub fn lrelu(x: &Tensor, slope: f64) -> Tensor {
    x.map(|v| if v >= 0.0 { v } else { slope * v })
}

fn sigmoid(v: f64) -> f64 {
    1.0 / (1.0 + (-v).exp())
}

fn activate(act: Activation, v: f64) -> f64 {
    match act {
        Activation::LRelu => {
            if v >= 0.0 {
                v
            } else {
                LRELU_SLOPE * v
            }
        }
        Activation::Linear => v,
        Activation::Sigmoid => sigmoid(v),
    }
}

fn activation_grad(act: Activation, pre: f64) -> f64 {
    match act {
        Activation::LRelu => {
            if pre >= 0.0 {
                1.0
            } else {
                LRELU_SLOPE
            }
        }
        Activation::Linear => 1.0,
        Activation::Sigmoid => {
            let s = sigmoid(pre);
            s * (1.0 - s)
        }
    }
}

/// Unfolds `[B, C, L]` into rows of receptive fields, `[B * out_len, C * k]`.
#[allow(clippy::too_many_arguments)]
fn im2col(
    x: &[f64],
    b: usize,
    c: usize,
    l: usize,
    k: usize,
    s: usize,
    pl: usize,
    out_len: usize,
) -> Vec<f64> {
    let row = c * k;
    let mut cols = vec![0.0; b * out_len * row];
    for bi in 0..b {
        for n in 0..out_len {
            let dst = &mut cols[(bi * out_len + n) * row..][..row];
            let origin = (n * s) as isize - pl as isize;
            let t_lo = (-origin).max(0) as usize;
            let t_hi = ((l as isize - origin).min(k as isize)).max(0) as usize;
            if t_lo >= t_hi {
                continue;
            }
            for ci in 0..c {
                let src = &x[(bi * c + ci) * l..][..l];
                let start = (origin + t_lo as isize) as usize;
                dst[ci * k + t_lo..ci * k + t_hi]
                    .copy_from_slice(&src[start..start + (t_hi - t_lo)]);
            }
        }
    }
    cols
}

/// Adjoint of [`im2col`]: scatter-adds rows back into `[B, C, L]`.
#[allow(clippy::too_many_arguments)]
fn col2im(
    cols: &[f64],
    b: usize,
    c: usize,
    l: usize,
    k: usize,
    s: usize,
    pl: usize,
    out_len: usize,
) -> Vec<f64> {
    let row = c * k;
    let mut x = vec![0.0; b * c * l];
    for bi in 0..b {
        for n in 0..out_len {
            let src = &cols[(bi * out_len + n) * row..][..row];
            let origin = (n * s) as isize - pl as isize;
            let t_lo = (-origin).max(0) as usize;
            let t_hi = ((l as isize - origin).min(k as isize)).max(0) as usize;
            if t_lo >= t_hi {
                continue;
            }
            for ci in 0..c {
                let start = (origin + t_lo as isize) as usize;
                let dst = &mut x[(bi * c + ci) * l + start..][..t_hi - t_lo];
                for (d, v) in dst.iter_mut().zip(&src[ci * k + t_lo..ci * k + t_hi]) {
                    *d += v;
                }
            }
        }
    }
    x
}

/// `[B, C, L]` to `[B * L, C]`.
fn channels_last(x: &[f64], b: usize, c: usize, l: usize) -> Vec<f64> {
    let mut out = vec![0.0; x.len()];
    for bi in 0..b {
        for ci in 0..c {
            for j in 0..l {
                out[(bi * l + j) * c + ci] = x[(bi * c + ci) * l + j];
            }
        }
    }
    out
}

/// `[B * L, C]` to `[B, C, L]`.
fn channels_first(x: &[f64], b: usize, c: usize, l: usize) -> Vec<f64> {
    let mut out = vec![0.0; x.len()];
    for bi in 0..b {
        for j in 0..l {
            for ci in 0..c {
                out[(bi * c + ci) * l + j] = x[(bi * l + j) * c + ci];
            }
        }
    }
    out
}

fn check_params(spec: &LayerSpec, p: &LayerParams) -> Result<()> {
    if p.weight.shape() != spec.weight_shape().as_slice() {
        return Err(Error::Shape(format!(
            "weight {:?}, layer expects {:?}",
            p.weight.shape(),
            spec.weight_shape()
        )));
    }
    if p.bias.shape() != spec.bias_shape().as_slice() {
        return Err(Error::Shape(format!(
            "bias {:?}, layer expects {:?}",
            p.bias.shape(),
            spec.bias_shape()
        )));
    }
    Ok(())
}

/// Returns `(batch, length)` after checking the input against the layer.
fn batch_dims(spec: &LayerSpec, x: &Tensor) -> Result<(usize, usize)> {
    let s = x.shape();
    match spec.kind {
        LayerKind::Dense => match s {
            [f] if *f == spec.in_channels => Ok((1, 1)),
            [b, f] if *f == spec.in_channels => Ok((*b, 1)),
            _ => Err(Error::Shape(format!(
                "dense layer expects [B, {}], got {s:?}",
                spec.in_channels
            ))),
        },
        _ => match s {
            [c, l] if *c == spec.in_channels => Ok((1, *l)),
            [b, c, l] if *c == spec.in_channels => Ok((*b, *l)),
            _ => Err(Error::Shape(format!(
                "convolution expects [B, {}, L], got {s:?}",
                spec.in_channels
            ))),
        },
    }
}

/// Applies one layer (affine map plus activation).
pub fn layer_forward(
    x: &Tensor,
    spec: &LayerSpec,
    params: &LayerParams,
) -> Result<(Tensor, LayerCache)> {
    spec.validate()?;
    check_params(spec, params)?;
    let (b, l) = batch_dims(spec, x)?;
    let out_len = spec.output_len(l)?;
    let (cin, cout, k, s, pl) = (
        spec.in_channels,
        spec.out_channels,
        spec.kernel,
        spec.stride,
        spec.pad_left(),
    );
    let w = params.weight.data();
    let bias = params.bias.data();
    let (mut y, saved) = match spec.kind {
        LayerKind::Conv1d => {
            let cols = im2col(x.data(), b, cin, l, k, s, pl, out_len);
            let mut tmp = vec![0.0; b * out_len * cout];
            gemm(
                b * out_len,
                cin * k,
                cout,
                1.0,
                &cols,
                (cin * k, 1),
                w,
                (1, cin * k),
                0.0,
                &mut tmp,
                (cout, 1),
            );
            let mut y = channels_first(&tmp, b, cout, out_len);
            for bi in 0..b {
                for co in 0..cout {
                    y[(bi * cout + co) * out_len..][..out_len]
                        .iter_mut()
                        .for_each(|v| *v += bias[co]);
                }
            }
            (y, cols)
        }
        LayerKind::Deconv1d => {
            let xt = channels_last(x.data(), b, cin, l);
            let mut cols = vec![0.0; b * l * cout * k];
            gemm(
                b * l,
                cin,
                cout * k,
                1.0,
                &xt,
                (cin, 1),
                w,
                (cout * k, 1),
                0.0,
                &mut cols,
                (cout * k, 1),
            );
            let mut y = col2im(&cols, b, cout, out_len, k, s, pl, l);
            for bi in 0..b {
                for co in 0..cout {
                    y[(bi * cout + co) * out_len..][..out_len]
                        .iter_mut()
                        .for_each(|v| *v += bias[co]);
                }
            }
            (y, xt)
        }
        LayerKind::Dense => {
            let mut y = vec![0.0; b * cout];
            for row in y.chunks_mut(cout) {
                row.copy_from_slice(bias);
            }
            gemm(
                b,
                cin,
                cout,
                1.0,
                x.data(),
                (cin, 1),
                w,
                (1, cin),
                1.0,
                &mut y,
                (cout, 1),
            );
            (y, x.data().to_vec())
        }
    };
    let pre_activation = if spec.activation == Activation::Linear {
        None
    } else {
        let pre = y.clone();
        y.iter_mut()
            .for_each(|v| *v = activate(spec.activation, *v));
        Some(pre)
    };
    let out_shape = match (spec.kind, x.ndim()) {
        (LayerKind::Dense, 1) => vec![cout],
        (LayerKind::Dense, _) => vec![b, cout],
        (_, 2) => vec![cout, out_len],
        _ => vec![b, cout, out_len],
    };
    let out = Tensor::new(out_shape, y)?;
    out.check_finite("layer output")?;
    Ok((
        out,
        LayerCache {
            spec: *spec,
            input_shape: x.shape().to_vec(),
            batch: b,
            in_len: l,
            out_len,
            saved,
            pre_activation,
        },
    ))
}

/// Exact gradients of `<grad_out, layer_forward(x)>` with respect to the
/// input, weight and bias.
pub fn layer_backward(
    grad_out: &Tensor,
    cache: Option<&LayerCache>,
    params: &LayerParams,
) -> Result<LayerGrads> {
    let cache = cache.ok_or(Error::MissingCache)?;
    let spec = &cache.spec;
    check_params(spec, params)?;
    let (b, l, out_len) = (cache.batch, cache.in_len, cache.out_len);
    let (cin, cout, k, s, pl) = (
        spec.in_channels,
        spec.out_channels,
        spec.kernel,
        spec.stride,
        spec.pad_left(),
    );
    let expected = b * cout * out_len;
    if grad_out.len() != expected {
        return Err(Error::Shape(format!(
            "upstream gradient has {} values, layer output has {expected}",
            grad_out.len()
        )));
    }
    let mut g = grad_out.data().to_vec();
    if let Some(pre) = &cache.pre_activation {
        g.iter_mut()
            .zip(pre)
            .for_each(|(gv, &p)| *gv *= activation_grad(spec.activation, p));
    }
    let w = params.weight.data();
    let mut gb = vec![0.0; cout];
    let (gx, gw) = match spec.kind {
        LayerKind::Conv1d => {
            for bi in 0..b {
                for co in 0..cout {
                    gb[co] += g[(bi * cout + co) * out_len..][..out_len]
                        .iter()
                        .sum::<f64>();
                }
            }
            let gt = channels_last(&g, b, cout, out_len);
            let mut gw = vec![0.0; cout * cin * k];
            gemm(
                cout,
                b * out_len,
                cin * k,
                1.0,
                &gt,
                (1, cout),
                &cache.saved,
                (cin * k, 1),
                0.0,
                &mut gw,
                (cin * k, 1),
            );
            let mut gcols = vec![0.0; b * out_len * cin * k];
            gemm(
                b * out_len,
                cout,
                cin * k,
                1.0,
                &gt,
                (cout, 1),
                w,
                (cin * k, 1),
                0.0,
                &mut gcols,
                (cin * k, 1),
            );
            (col2im(&gcols, b, cin, l, k, s, pl, out_len), gw)
        }
        LayerKind::Deconv1d => {
            for bi in 0..b {
                for co in 0..cout {
                    gb[co] += g[(bi * cout + co) * out_len..][..out_len]
                        .iter()
                        .sum::<f64>();
                }
            }
            let gcols = im2col(&g, b, cout, out_len, k, s, pl, l);
            let mut gxt = vec![0.0; b * l * cin];
            gemm(
                b * l,
                cout * k,
                cin,
                1.0,
                &gcols,
                (cout * k, 1),
                w,
                (1, cout * k),
                0.0,
                &mut gxt,
                (cin, 1),
            );
            let mut gw = vec![0.0; cin * cout * k];
            gemm(
                cin,
                b * l,
                cout * k,
                1.0,
                &cache.saved,
                (1, cin),
                &gcols,
                (cout * k, 1),
                0.0,
                &mut gw,
                (cout * k, 1),
            );
            (channels_first(&gxt, b, cin, l), gw)
        }
        LayerKind::Dense => {
            for row in g.chunks(cout) {
                gb.iter_mut().zip(row).for_each(|(a, v)| *a += v);
            }
            let mut gw = vec![0.0; cout * cin];
            gemm(
                cout,
                b,
                cin,
                1.0,
                &g,
                (1, cout),
                &cache.saved,
                (cin, 1),
                0.0,
                &mut gw,
                (cin, 1),
            );
            let mut gx = vec![0.0; b * cin];
            gemm(
                b,
                cout,
                cin,
                1.0,
                &g,
                (cout, 1),
                w,
                (cin, 1),
                0.0,
                &mut gx,
                (cin, 1),
            );
            (gx, gw)
        }
    };
    let grads = LayerGrads {
        input: Tensor::new(cache.input_shape.clone(), gx)?,
        weight: Tensor::new(spec.weight_shape(), gw)?,
        bias: Tensor::new(spec.bias_shape(), gb)?,
    };
    grads.input.check_finite("input gradient")?;
    Ok(grads)
}

fn expect_kind(spec: &LayerSpec, kind: LayerKind) -> Result<()> {
    if spec.kind != kind {
        return Err(Error::Shape(format!(
            "expected a {kind:?} layer, got {:?}",
            spec.kind
        )));
    }
    Ok(())
}

pub fn conv1d_forward(
    x: &Tensor,
    spec: &LayerSpec,
    params: &LayerParams,
) -> Result<(Tensor, LayerCache)> {
    expect_kind(spec, LayerKind::Conv1d)?;
    layer_forward(x, spec, params)
}

pub fn conv1d_backward(
    grad_out: &Tensor,
    cache: Option<&LayerCache>,
    params: &LayerParams,
) -> Result<LayerGrads> {
    if let Some(c) = cache {
        expect_kind(&c.spec, LayerKind::Conv1d)?;
    }
    layer_backward(grad_out, cache, params)
}

pub fn deconv1d_forward(
    x: &Tensor,
    spec: &LayerSpec,
    params: &LayerParams,
) -> Result<(Tensor, LayerCache)> {
    expect_kind(spec, LayerKind::Deconv1d)?;
    layer_forward(x, spec, params)
}

pub fn deconv1d_backward(
    grad_out: &Tensor,
    cache: Option<&LayerCache>,
    params: &LayerParams,
) -> Result<LayerGrads> {
    if let Some(c) = cache {
        expect_kind(&c.spec, LayerKind::Deconv1d)?;
    }
    layer_backward(grad_out, cache, params)
}

pub fn dense_forward(
    x: &Tensor,
    spec: &LayerSpec,
    params: &LayerParams,
) -> Result<(Tensor, LayerCache)> {
    expect_kind(spec, LayerKind::Dense)?;
    layer_forward(x, spec, params)
}

pub fn dense_backward(
    grad_out: &Tensor,
    cache: Option<&LayerCache>,
    params: &LayerParams,
) -> Result<LayerGrads> {
    if let Some(c) = cache {
        expect_kind(&c.spec, LayerKind::Dense)?;
    }
    layer_backward(grad_out, cache, params)
}
