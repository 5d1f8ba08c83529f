//! Forward and backward kernels for the individual layer types.
//!
//! Batched tensors are batch-major: dense activations are `[n, features]`,
//! feature maps are `[n, channels, height, width]`.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use rand::Rng as _;

use crate::error::{Error, Result};
use crate::rng::Rng;
use crate::tensor::Tensor;

use super::config::POOL_SIZE;

pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + libm::exp(-x))
    } else {
        let e = libm::exp(x);
        e / (1.0 + e)
    }
}

pub fn relu(x: f64) -> f64 {
    if x > 0.0 {
        x
    } else {
        0.0
    }
}

/// Zero at the kink.
pub fn relu_grad(x: f64) -> f64 {
    if x > 0.0 {
        1.0
    } else {
        0.0
    }
}

/// Max-subtracted softmax of one logit vector.
pub fn softmax(logits: &[f64]) -> Vec<f64> {
    let mut out = logits.to_vec();
    softmax_in_place(&mut out);
    out
}

pub(crate) fn softmax_in_place(row: &mut [f64]) {
    let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut sum = 0.0;
    for v in row.iter_mut() {
        *v = libm::exp(*v - max);
        sum += *v;
    }
    for v in row.iter_mut() {
        *v /= sum;
    }
}

/// Row-wise softmax over `[n, classes]`.
pub fn softmax_rows(logits: &Tensor) -> Tensor {
    let mut out = logits.clone();
    let w = out.row_len();
    for row in out.data_mut().chunks_mut(w) {
        softmax_in_place(row);
    }
    out
}

/// `z = input · weightsᵀ + bias` for `input: [n, in]`, `weights: [out, in]`.
pub fn dense_forward(weights: &Tensor, bias: &Tensor, input: &Tensor) -> Result<Tensor> {
    let (out_dim, in_dim) = match weights.shape() {
        &[o, i] => (o, i),
        s => return Err(Error::ShapeMismatch(format!("dense weights must be rank 2, got {s:?}"))),
    };
    if bias.len() != out_dim {
        return Err(Error::ShapeMismatch(format!("bias has {} entries, expected {out_dim}", bias.len())));
    }
    if input.row_len() != in_dim {
        return Err(Error::ShapeMismatch(format!(
            "input rows have {} features, weights expect {in_dim}",
            input.row_len()
        )));
    }
    let n = input.rows();
    let w = weights.data();
    let mut out = vec![0.0; n * out_dim];
    for r in 0..n {
        let x = input.row(r);
        let z = &mut out[r * out_dim..(r + 1) * out_dim];
        for (o, zo) in z.iter_mut().enumerate() {
            let wrow = &w[o * in_dim..(o + 1) * in_dim];
            *zo = bias.data()[o] + wrow.iter().zip(x).map(|(a, b)| a * b).sum::<f64>();
        }
    }
    Tensor::from_vec(&[n, out_dim], out)
}

pub struct DenseGrads {
    pub weights: Tensor,
    pub bias: Tensor,
    pub input: Option<Tensor>,
}

/// Gradients of a dense layer given `delta = ∂J/∂z` of shape `[n, out]`.
pub fn dense_backward(weights: &Tensor, input: &Tensor, delta: &Tensor, want_input: bool) -> Result<DenseGrads> {
    let (out_dim, in_dim) = (weights.shape()[0], weights.shape()[1]);
    let n = input.rows();
    if delta.rows() != n || delta.row_len() != out_dim || input.row_len() != in_dim {
        return Err(Error::ShapeMismatch(format!(
            "dense backward: input {:?}, delta {:?}, weights {:?}",
            input.shape(),
            delta.shape(),
            weights.shape()
        )));
    }
    let mut dw = vec![0.0; out_dim * in_dim];
    let mut db = vec![0.0; out_dim];
    for r in 0..n {
        let x = input.row(r);
        for (o, &d) in delta.row(r).iter().enumerate() {
            db[o] += d;
            if d == 0.0 {
                continue;
            }
            for (g, &xi) in dw[o * in_dim..(o + 1) * in_dim].iter_mut().zip(x) {
                *g += d * xi;
            }
        }
    }
    let input_grad = if want_input {
        let w = weights.data();
        let mut di = vec![0.0; n * in_dim];
        for r in 0..n {
            let row = &mut di[r * in_dim..(r + 1) * in_dim];
            for (o, &d) in delta.row(r).iter().enumerate() {
                if d == 0.0 {
                    continue;
                }
                for (g, &wv) in row.iter_mut().zip(&w[o * in_dim..(o + 1) * in_dim]) {
                    *g += d * wv;
                }
            }
        }
        Some(Tensor::from_vec(input.shape(), di)?)
    } else {
        None
    };
    Ok(DenseGrads {
        weights: Tensor::from_vec(&[out_dim, in_dim], dw)?,
        bias: Tensor::from_vec(&[out_dim], db)?,
        input: input_grad,
    })
}

#[derive(Clone, Copy)]
struct ConvGeometry {
    batch: usize,
    channels: usize,
    height: usize,
    width: usize,
    maps: usize,
    kh: usize,
    kw: usize,
    oh: usize,
    ow: usize,
}

fn conv_geometry(kernels: &Tensor, input: &Tensor) -> Result<ConvGeometry> {
    let (maps, kc, kh, kw) = match kernels.shape() {
        &[m, c, h, w] => (m, c, h, w),
        &[m, h, w] => (m, 1, h, w),
        s => return Err(Error::ShapeMismatch(format!("kernels must be [maps, channels, kh, kw], got {s:?}"))),
    };
    let (batch, channels, height, width) = match input.shape() {
        &[n, c, h, w] => (n, c, h, w),
        &[c, h, w] => (1, c, h, w),
        s => return Err(Error::ShapeMismatch(format!("conv input must be [n, c, h, w] or [c, h, w], got {s:?}"))),
    };
    if kc != channels {
        return Err(Error::ShapeMismatch(format!("kernels expect {kc} channels, input has {channels}")));
    }
    if height < kh || width < kw {
        return Err(Error::ShapeMismatch(format!("{kh}x{kw} kernel is larger than the {height}x{width} input")));
    }
    Ok(ConvGeometry { batch, channels, height, width, maps, kh, kw, oh: height - kh + 1, ow: width - kw + 1 })
}

/// Valid cross-correlation, stride 1. Each feature map has one kernel per
/// input channel and the channel responses are summed before the bias.
///
/// Accepts `[c, h, w]` (returns `[maps, oh, ow]`) or `[n, c, h, w]` (returns
/// `[n, maps, oh, ow]`).
pub fn conv_forward(kernels: &Tensor, bias: &Tensor, input: &Tensor) -> Result<Tensor> {
    let g = conv_geometry(kernels, input)?;
    if bias.len() != g.maps {
        return Err(Error::ShapeMismatch(format!("bias has {} entries, expected {}", bias.len(), g.maps)));
    }
    let k = kernels.data();
    let x = input.data();
    let plane = g.height * g.width;
    let out_plane = g.oh * g.ow;
    let mut out = vec![0.0; g.batch * g.maps * out_plane];
    for b in 0..g.batch {
        for m in 0..g.maps {
            let o = &mut out[(b * g.maps + m) * out_plane..][..out_plane];
            o.fill(bias.data()[m]);
            for c in 0..g.channels {
                let xin = &x[(b * g.channels + c) * plane..][..plane];
                let kern = &k[(m * g.channels + c) * g.kh * g.kw..][..g.kh * g.kw];
                for ki in 0..g.kh {
                    for kj in 0..g.kw {
                        let wv = kern[ki * g.kw + kj];
                        for y in 0..g.oh {
                            let src = &xin[(y + ki) * g.width + kj..][..g.ow];
                            for (ov, &xv) in o[y * g.ow..][..g.ow].iter_mut().zip(src) {
                                *ov += wv * xv;
                            }
                        }
                    }
                }
            }
        }
    }
    let shape: Vec<usize> =
        if input.rank() == 3 { vec![g.maps, g.oh, g.ow] } else { vec![g.batch, g.maps, g.oh, g.ow] };
    Tensor::from_vec(&shape, out)
}

pub struct ConvGrads {
    pub kernels: Tensor,
    pub bias: Tensor,
    pub input: Option<Tensor>,
}

/// Weight gradients accumulate over every spatial position the kernel
/// visited, which is where weight sharing enters backpropagation.
pub fn conv_backward(kernels: &Tensor, input: &Tensor, delta: &Tensor, want_input: bool) -> Result<ConvGrads> {
    let g = conv_geometry(kernels, input)?;
    let out_plane = g.oh * g.ow;
    if delta.len() != g.batch * g.maps * out_plane {
        return Err(Error::ShapeMismatch(format!(
            "conv delta {:?} does not match output of input {:?}",
            delta.shape(),
            input.shape()
        )));
    }
    let k = kernels.data();
    let x = input.data();
    let d = delta.data();
    let plane = g.height * g.width;
    let ksz = g.kh * g.kw;
    let mut dk = vec![0.0; kernels.len()];
    let mut db = vec![0.0; g.maps];
    let mut dx = if want_input { vec![0.0; x.len()] } else { Vec::new() };
    for b in 0..g.batch {
        for m in 0..g.maps {
            let dm = &d[(b * g.maps + m) * out_plane..][..out_plane];
            db[m] += dm.iter().sum::<f64>();
            for c in 0..g.channels {
                let xin = &x[(b * g.channels + c) * plane..][..plane];
                let base = (m * g.channels + c) * ksz;
                for ki in 0..g.kh {
                    for kj in 0..g.kw {
                        let mut acc = 0.0;
                        for y in 0..g.oh {
                            let src = &xin[(y + ki) * g.width + kj..][..g.ow];
                            acc += dm[y * g.ow..][..g.ow].iter().zip(src).map(|(a, b)| a * b).sum::<f64>();
                        }
                        dk[base + ki * g.kw + kj] += acc;
                        if want_input {
                            let wv = k[base + ki * g.kw + kj];
                            let dxin = &mut dx[(b * g.channels + c) * plane..][..plane];
                            for y in 0..g.oh {
                                let dst = &mut dxin[(y + ki) * g.width + kj..][..g.ow];
                                for (t, &dv) in dst.iter_mut().zip(&dm[y * g.ow..][..g.ow]) {
                                    *t += wv * dv;
                                }
                            }
                        }
                    }
                }
            }
        }
    }
    Ok(ConvGrads {
        kernels: Tensor::from_vec(kernels.shape(), dk)?,
        bias: Tensor::from_vec(&[g.maps], db)?,
        input: if want_input { Some(Tensor::from_vec(input.shape(), dx)?) } else { None },
    })
}

/// Non-overlapping 2x2 max pooling over the last two axes. Trailing odd rows
/// and columns are dropped. Returns the pooled tensor and, per output
/// element, the flat index of the winning input element (first maximum in
/// row-major window order).
pub fn maxpool_forward(input: &Tensor) -> Result<(Tensor, Vec<usize>)> {
    let rank = input.rank();
    if rank < 2 {
        return Err(Error::ShapeMismatch(format!("pooling needs at least 2 axes, got {:?}", input.shape())));
    }
    let (h, w) = (input.shape()[rank - 2], input.shape()[rank - 1]);
    if h < POOL_SIZE || w < POOL_SIZE {
        return Err(Error::ShapeMismatch(format!("{h}x{w} map is smaller than the pooling window")));
    }
    let (oh, ow) = (h / POOL_SIZE, w / POOL_SIZE);
    let planes = input.len() / (h * w);
    let x = input.data();
    let mut out = Vec::with_capacity(planes * oh * ow);
    let mut argmax = Vec::with_capacity(planes * oh * ow);
    for p in 0..planes {
        let base = p * h * w;
        for y in 0..oh {
            for xo in 0..ow {
                let mut best = base + (y * POOL_SIZE) * w + xo * POOL_SIZE;
                for dy in 0..POOL_SIZE {
                    for dx in 0..POOL_SIZE {
                        let idx = base + (y * POOL_SIZE + dy) * w + xo * POOL_SIZE + dx;
                        if x[idx] > x[best] {
                            best = idx;
                        }
                    }
                }
                out.push(x[best]);
                argmax.push(best);
            }
        }
    }
    let mut shape = input.shape().to_vec();
    shape[rank - 2] = oh;
    shape[rank - 1] = ow;
    Ok((Tensor::from_vec(&shape, out)?, argmax))
}

/// Routes each output gradient to the input element that won the max.
pub fn maxpool_backward(delta: &Tensor, argmax: &[usize], input_shape: &[usize]) -> Result<Tensor> {
    if delta.len() != argmax.len() {
        return Err(Error::Internal(format!(
            "pool delta has {} entries but {} argmax indices were recorded",
            delta.len(),
            argmax.len()
        )));
    }
    let mut dx = Tensor::zeros(input_shape)?;
    let buf = dx.data_mut();
    for (&i, &d) in argmax.iter().zip(delta.data()) {
        buf[i] += d;
    }
    Ok(dx)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Phase {
    Train,
    Eval,
}

/// Inverted dropout. The returned mask holds the multiplier applied to each
/// element: `0` for dropped units and `1/(1-p)` for survivors in training,
/// all ones in evaluation.
pub fn dropout_forward(input: &Tensor, p: f64, phase: Phase, rng: &mut Rng) -> Result<(Tensor, Tensor)> {
    if !(0.0..1.0).contains(&p) {
        return Err(Error::InvalidArgument(format!("dropout p must be in [0, 1), got {p}")));
    }
    if phase == Phase::Eval || p == 0.0 {
        return Ok((input.clone(), Tensor::filled(input.shape(), 1.0)?));
    }
    let scale = 1.0 / (1.0 - p);
    let mask: Vec<f64> = (0..input.len()).map(|_| if rng.random::<f64>() < p { 0.0 } else { scale }).collect();
    let mask = Tensor::from_vec(input.shape(), mask)?;
    let out = apply_mask(input, &mask);
    Ok((out, mask))
}

pub(crate) fn apply_mask(input: &Tensor, mask: &Tensor) -> Tensor {
    let data = input.data().iter().zip(mask.data()).map(|(a, m)| a * m).collect();
    Tensor::from_vec(input.shape(), data).expect("mask shape matches input")
}
