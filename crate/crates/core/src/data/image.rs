use alloc::format;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// Mouth bounding box size `(height, width)` on aligned faces.
pub const MOUTH_BOX: (usize, usize) = (128, 104);
/// Both mouth dimensions are scaled to two thirds before training.
pub const MOUTH_SCALE: f64 = 2.0 / 3.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct CropBox {
    pub top: usize,
    pub left: usize,
    pub height: usize,
    pub width: usize,
}

impl CropBox {
    /// A `height × width` box centred in an `image_h × image_w` image.
    pub fn centered(image_h: usize, image_w: usize, height: usize, width: usize) -> Self {
        Self { top: image_h.saturating_sub(height) / 2, left: image_w.saturating_sub(width) / 2, height, width }
    }
}

fn dims(image: &Tensor) -> Result<(usize, usize)> {
    match image.shape() {
        &[h, w] => Ok((h, w)),
        s => Err(Error::InvalidShape(format!("expected a [h, w] image, got {s:?}"))),
    }
}

pub fn crop(image: &Tensor, b: CropBox) -> Result<Tensor> {
    let (h, w) = dims(image)?;
    if b.height == 0 || b.width == 0 || b.top + b.height > h || b.left + b.width > w {
        return Err(Error::InvalidArgument(format!("crop box {b:?} is outside the {h}x{w} image")));
    }
    let mut out = Vec::with_capacity(b.height * b.width);
    for r in b.top..b.top + b.height {
        out.extend_from_slice(&image.data()[r * w + b.left..r * w + b.left + b.width]);
    }
    Tensor::from_vec(&[b.height, b.width], out)
}

/// `⌊h·factor⌋ × ⌊w·factor⌋`, never below 1.
pub fn scaled_dims(h: usize, w: usize, factor: f64) -> (usize, usize) {
    let f = |d: usize| (libm::floor(d as f64 * factor + 1e-9) as usize).max(1);
    (f(h), f(w))
}

/// Source coordinate for output index `i` with corners aligned; a single
/// output sample reads the centre.
fn source_coord(i: usize, out: usize, input: usize) -> f64 {
    if out == 1 {
        (input - 1) as f64 / 2.0
    } else {
        i as f64 * (input - 1) as f64 / (out - 1) as f64
    }
}

/// Bilinear resampling with corner-aligned source coordinates. Each output
/// value is clamped to the range of its four source neighbours so the result
/// never leaves `[min(input), max(input)]`.
pub fn resize_bilinear(image: &Tensor, out_h: usize, out_w: usize) -> Result<Tensor> {
    let (h, w) = dims(image)?;
    if out_h == 0 || out_w == 0 {
        return Err(Error::InvalidArgument(format!("cannot resize to {out_h}x{out_w}")));
    }
    let src = image.data();
    let mut out = Vec::with_capacity(out_h * out_w);
    for i in 0..out_h {
        let y = source_coord(i, out_h, h);
        let y0 = (libm::floor(y) as usize).min(h - 1);
        let y1 = (y0 + 1).min(h - 1);
        let ty = y - y0 as f64;
        for j in 0..out_w {
            let x = source_coord(j, out_w, w);
            let x0 = (libm::floor(x) as usize).min(w - 1);
            let x1 = (x0 + 1).min(w - 1);
            let tx = x - x0 as f64;
            let (a, b) = (src[y0 * w + x0], src[y0 * w + x1]);
            let (c, d) = (src[y1 * w + x0], src[y1 * w + x1]);
            let top = a * (1.0 - tx) + b * tx;
            let bottom = c * (1.0 - tx) + d * tx;
            let v = top * (1.0 - ty) + bottom * ty;
            let lo = a.min(b).min(c).min(d);
            let hi = a.max(b).max(c).max(d);
            out.push(v.clamp(lo, hi));
        }
    }
    Tensor::from_vec(&[out_h, out_w], out)
}
