//! `TNSRv001` binary tensors: magic, `u32` rank, `rank × u32` dims, then the
//! raw `f64` payload, all little-endian.

use std::io::{Read, Write};

use smilenet_core::Tensor;

use crate::binio::{checked_u32, put_f64, put_u32, Reader};
use crate::error::Result;

pub const TENSOR_MAGIC: &[u8; 8] = b"TNSRv001";

pub fn write_tensor<W: Write>(w: &mut W, t: &Tensor) -> Result<()> {
    w.write_all(TENSOR_MAGIC)?;
    put_u32(w, checked_u32(t.rank(), "rank")?)?;
    for &d in t.shape() {
        put_u32(w, checked_u32(d, "dimension")?)?;
    }
    let mut buf = Vec::with_capacity(t.len() * 8);
    for v in t.data() {
        buf.extend_from_slice(&v.to_le_bytes());
    }
    w.write_all(&buf)?;
    Ok(())
}

pub fn read_tensor<R: Read>(r: &mut Reader<R>) -> Result<Tensor> {
    r.magic(TENSOR_MAGIC)?;
    let rank = r.u32("tensor rank")? as usize;
    if rank == 0 || rank > 8 {
        return Err(r.malformed(format!("unsupported tensor rank {rank}")));
    }
    let mut shape = Vec::with_capacity(rank);
    for _ in 0..rank {
        let d = r.u32("tensor dimension")? as usize;
        if d == 0 {
            return Err(r.malformed("zero tensor dimension"));
        }
        shape.push(d);
    }
    let n = shape
        .iter()
        .try_fold(1usize, |a, &d| a.checked_mul(d))
        .filter(|&n| n <= (1 << 32))
        .ok_or_else(|| r.malformed(format!("tensor shape {shape:?} is too large")))?;
    let mut raw = vec![0u8; n * 8];
    r.fill(&mut raw, "tensor payload")?;
    let data = raw.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().unwrap())).collect();
    Ok(Tensor::from_vec(&shape, data)?)
}

pub fn put_f64_slice<W: Write>(w: &mut W, values: &[f64]) -> Result<()> {
    for &v in values {
        put_f64(w, v)?;
    }
    Ok(())
}
