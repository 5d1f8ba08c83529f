//! Annotation CSV: header `video_id,frame,au,intensity`, one row per
//! (frame, action unit) with intensity 0–5.

use std::io::{Read, Write};

use smilenet_core::data::MAX_INTENSITY;
use smilenet_core::stats::AnnotationRecord;

use crate::error::{Error, Result};

const COLUMNS: [&str; 4] = ["video_id", "frame", "au", "intensity"];

pub fn parse_annotations<R: Read>(input: R) -> Result<Vec<AnnotationRecord>> {
    let mut reader = csv::ReaderBuilder::new().has_headers(true).trim(csv::Trim::All).from_reader(input);
    let header_err = |reason: String| Error::Parse { line: 1, reason };
    let headers = reader.headers().map_err(|e| header_err(e.to_string()))?.clone();
    if headers.is_empty() {
        return Err(header_err("missing header row".into()));
    }
    let mut index = [0usize; 4];
    for (slot, name) in index.iter_mut().zip(COLUMNS) {
        *slot = headers.iter().position(|h| h == name).ok_or_else(|| header_err(format!("missing column {name:?}")))?;
    }

    let mut records = Vec::new();
    for row in reader.records() {
        let row =
            row.map_err(|e| Error::Parse { line: e.position().map_or(0, |p| p.line()), reason: e.to_string() })?;
        let line = row.position().map_or(0, |p| p.line());
        let bad = |reason: String| Error::Parse { line, reason };
        let field = |i: usize| row.get(index[i]).ok_or_else(|| bad(format!("missing column {:?}", COLUMNS[i])));

        let video_id = field(0)?.to_string();
        if video_id.is_empty() {
            return Err(bad("empty video_id".into()));
        }
        let frame = field(1)?;
        let frame_index: u32 =
            frame.parse().map_err(|_| bad(format!("frame {frame:?} is not a non-negative integer")))?;
        let au = field(2)?.to_string();
        if au.is_empty() {
            return Err(bad("empty au".into()));
        }
        let raw = field(3)?;
        let intensity = raw
            .parse::<u8>()
            .ok()
            .filter(|&i| i <= MAX_INTENSITY)
            .ok_or_else(|| bad(format!("intensity {raw:?} is not in 0..=5")))?;
        records.push(AnnotationRecord { video_id, frame_index, au, intensity, line: line as usize });
    }
    Ok(records)
}

pub fn write_annotations<W: Write>(out: W, records: &[AnnotationRecord]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let csv_err = |e: csv::Error| Error::RawIo(e.into());
    w.write_record(COLUMNS).map_err(csv_err)?;
    for r in records {
        w.write_record([r.video_id.as_str(), &r.frame_index.to_string(), &r.au, &r.intensity.to_string()])
            .map_err(csv_err)?;
    }
    w.flush()?;
    Ok(())
}
