//! Binary PGM (P5, maxval 255) export for eyeballing images.

use std::io::Write;
use std::path::Path;

use smilenet_core::Tensor;

use crate::error::{Error, Result};

/// Writes a `[h, w]` image, mapping `[0, 1]` to `0..=255` with clamping.
pub fn write_pgm<W: Write>(w: &mut W, image: &Tensor) -> Result<()> {
    let &[h, width] = image.shape() else {
        return Err(
            smilenet_core::Error::InvalidShape(format!("PGM needs a [h, w] image, got {:?}", image.shape())).into()
        );
    };
    write!(w, "P5\n{width} {h}\n255\n")?;
    let pixels: Vec<u8> = image.data().iter().map(|&v| (v.clamp(0.0, 1.0) * 255.0).round() as u8).collect();
    w.write_all(&pixels)?;
    Ok(())
}

pub fn save_pgm(path: &Path, image: &Tensor) -> Result<()> {
    let mut buf = Vec::new();
    write_pgm(&mut buf, image)?;
    std::fs::write(path, buf).map_err(|e| Error::io(path, e))
}
