//! `DSETv001` datasets: magic, `u32` sample count, then per sample a
//! `TNSRv001` image, `u8` AU12 intensity, `u8` any-AU flag, `u16` video-id
//! length with its UTF-8 bytes, and `u32` frame index.
//!
//! The format carries no provenance tag; callers say what the file holds.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use smilenet_core::data::{Dataset, Provenance, Sample};

use crate::binio::{checked_u32, put_u32, Reader};
use crate::error::{Error, Result};
use crate::tensor_io::{read_tensor, write_tensor};

pub const DATASET_MAGIC: &[u8; 8] = b"DSETv001";

pub fn write_dataset<W: Write>(w: &mut W, ds: &Dataset) -> Result<()> {
    w.write_all(DATASET_MAGIC)?;
    put_u32(w, checked_u32(ds.len(), "sample count")?)?;
    for s in ds.samples() {
        write_tensor(w, &s.image)?;
        w.write_all(&[s.au12_intensity, u8::from(s.any_au_set)])?;
        let id = s.video_id.as_bytes();
        let len = u16::try_from(id.len())
            .map_err(|_| Error::Malformed { offset: 0, reason: format!("video id {:?} is too long", s.video_id) })?;
        w.write_all(&len.to_le_bytes())?;
        w.write_all(id)?;
        put_u32(w, s.frame_index)?;
    }
    Ok(())
}

pub fn read_dataset<R: Read>(r: R, provenance: Provenance) -> Result<Dataset> {
    let mut r = Reader::new(r);
    r.magic(DATASET_MAGIC)?;
    let count = r.u32("sample count")? as usize;
    let mut samples = Vec::with_capacity(count.min(1 << 20));
    for i in 0..count {
        let start = r.offset();
        let image = read_tensor(&mut r)?;
        if image.rank() != 2 {
            return Err(Error::Malformed { offset: start, reason: format!("sample {i} image is not [h, w]") });
        }
        if let Some(first) = samples.first().map(|s: &Sample| s.image.shape().to_vec()) {
            if image.shape() != first.as_slice() {
                return Err(Error::Malformed {
                    offset: start,
                    reason: format!("sample {i} has shape {:?}, expected {first:?}", image.shape()),
                });
            }
        }
        let au12_intensity = r.u8("intensity")?;
        let flag = r.u8("AU flag")?;
        if flag > 1 {
            return Err(r.malformed(format!("AU flag must be 0 or 1, got {flag}")));
        }
        let len = r.u16("video id length")? as usize;
        let mut id = vec![0u8; len];
        r.fill(&mut id, "video id")?;
        let video_id = String::from_utf8(id).map_err(|_| r.malformed("video id is not UTF-8"))?;
        let frame_index = r.u32("frame index")?;
        samples.push(Sample { image, au12_intensity, any_au_set: flag == 1, video_id, frame_index });
    }
    if !r.at_end()? {
        return Err(r.malformed("trailing bytes after the last sample"));
    }
    let end = r.offset();
    Dataset::new(samples, provenance).map_err(|e| Error::Malformed { offset: end, reason: e.to_string() })
}

pub fn save_dataset(path: &Path, ds: &Dataset) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    write_dataset(&mut w, ds)?;
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn load_dataset(path: &Path, provenance: Provenance) -> Result<Dataset> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    read_dataset(BufReader::new(file), provenance)
}
