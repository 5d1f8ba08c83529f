//! Frame counts and intensity histograms per action unit.

use alloc::collections::BTreeMap;
use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;
use core::fmt::Write as _;

use rand::seq::SliceRandom;
use rand::Rng as _;

use crate::data::{DISFA_AU12_COUNTS, FRAMES_PER_VIDEO, SMILE_AU};
use crate::rng::seeded;

/// One `(video, frame, action unit, intensity)` annotation row.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AnnotationRecord {
    pub video_id: String,
    pub frame_index: u32,
    pub au: String,
    pub intensity: u8,
    /// 1-based source line, 0 when not read from a file.
    pub line: usize,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Scope {
    All,
    Video(String),
}

impl Scope {
    pub fn includes(&self, record: &AnnotationRecord) -> bool {
        match self {
            Scope::All => true,
            Scope::Video(v) => record.video_id == *v,
        }
    }
}

/// Frame counts for intensities 0..=5.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct IntensityHistogram(pub [u64; 6]);

impl IntensityHistogram {
    pub fn total(&self) -> u64 {
        self.0.iter().sum()
    }

    /// Frames with the unit set, i.e. bins 1..=5.
    pub fn set_count(&self) -> u64 {
        self.0[1..].iter().sum()
    }

    /// Bins 1..=5 only.
    pub fn positive(&self) -> [u64; 5] {
        [self.0[1], self.0[2], self.0[3], self.0[4], self.0[5]]
    }

    pub fn add(&mut self, other: &IntensityHistogram) {
        for (a, b) in self.0.iter_mut().zip(other.0) {
            *a += b;
        }
    }
}

/// Frames with intensity > 0 per action unit within `scope`. Units that only
/// appear with intensity 0 map to 0.
pub fn binary_counts(records: &[AnnotationRecord], scope: &Scope) -> BTreeMap<String, u64> {
    let mut out = BTreeMap::new();
    for r in records.iter().filter(|r| scope.includes(r)) {
        let c = out.entry(r.au.clone()).or_insert(0);
        if r.intensity > 0 {
            *c += 1;
        }
    }
    out
}

pub fn intensity_histogram(records: &[AnnotationRecord], au: &str, scope: &Scope) -> IntensityHistogram {
    let mut h = IntensityHistogram::default();
    for r in records.iter().filter(|r| r.au == au && scope.includes(r)) {
        h.0[r.intensity.min(5) as usize] += 1;
    }
    h
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct StatsReport {
    pub scope: Scope,
    /// `None` marks a requested unit with no rows in scope.
    pub units: BTreeMap<String, Option<IntensityHistogram>>,
}

impl StatsReport {
    /// Histograms for every unit in scope, or only for `aus` when given.
    pub fn build(records: &[AnnotationRecord], scope: Scope, aus: Option<&[String]>) -> Self {
        let mut all: BTreeMap<String, IntensityHistogram> = BTreeMap::new();
        for r in records.iter().filter(|r| scope.includes(r)) {
            all.entry(r.au.clone()).or_default().0[r.intensity.min(5) as usize] += 1;
        }
        let units = match aus {
            None => all.into_iter().map(|(k, v)| (k, Some(v))).collect(),
            Some(list) => list.iter().map(|au| (au.clone(), all.get(au).copied())).collect(),
        };
        Self { scope, units }
    }

    pub fn binary_count(&self, au: &str) -> Option<u64> {
        self.units.get(au).copied().flatten().map(|h| h.set_count())
    }
}

const HEADER: [&str; 8] = ["AU", "set", "0", "1", "2", "3", "4", "5"];

/// Fixed-width text table, one row per unit in lexicographic order, `-` for
/// units without data.
pub fn render_report(report: &StatsReport) -> String {
    let mut rows: Vec<[String; 8]> = Vec::new();
    for (au, hist) in &report.units {
        let mut row: [String; 8] = Default::default();
        row[0] = au.clone();
        match hist {
            Some(h) => {
                row[1] = format!("{}", h.set_count());
                for i in 0..6 {
                    row[i + 2] = format!("{}", h.0[i]);
                }
            }
            None => row[1..].iter_mut().for_each(|c| *c = "-".into()),
        }
        rows.push(row);
    }
    let mut widths = HEADER.map(str::len);
    for row in &rows {
        for (w, cell) in widths.iter_mut().zip(row) {
            *w = (*w).max(cell.len());
        }
    }
    let mut out = String::new();
    let mut line = |cells: &[&str]| {
        for (i, (cell, w)) in cells.iter().zip(&widths).enumerate() {
            if i == 0 {
                let _ = write!(out, "{cell:<w$}");
            } else {
                let _ = write!(out, "  {cell:>w$}");
            }
        }
        out.push('\n');
    };
    line(&HEADER);
    for row in &rows {
        let cells: Vec<&str> = row.iter().map(String::as_str).collect();
        line(&cells);
    }
    out
}

/// `au,set,i0,...,i5` with `-` for units without data.
pub fn render_csv(report: &StatsReport) -> String {
    let mut out = String::from("au,set,i0,i1,i2,i3,i4,i5\n");
    for (au, hist) in &report.units {
        match hist {
            Some(h) => {
                let _ = write!(out, "{au},{}", h.set_count());
                for c in h.0 {
                    let _ = write!(out, ",{c}");
                }
                out.push('\n');
            }
            None => {
                let _ = writeln!(out, "{au},-,-,-,-,-,-,-");
            }
        }
    }
    out
}

pub const FIXTURE_VIDEOS: u32 = 27;
/// Second unit in the fixture, standing in for every non-smile action unit.
pub const FIXTURE_OTHER_AU: &str = "AU25";
/// Frames with no action unit at all.
pub const FIXTURE_NEUTRAL_FRAMES: u64 = 48_612;
const FIXTURE_SEED: u64 = 0x0D15_FA00;

/// Annotation rows whose aggregates match the real corpus: 27 videos of
/// 4,844 frames, the AU12 histogram in [`DISFA_AU12_COUNTS`], 82,176 frames
/// with some unit set and 48,612 neutral frames. Each frame has one AU12 row
/// and one AU25 row. Placement of intensities across frames is a fixed
/// shuffle; only the aggregates are meaningful.
pub fn disfa_fixture_records() -> Vec<AnnotationRecord> {
    let frames = (FIXTURE_VIDEOS * FRAMES_PER_VIDEO) as usize;
    let mut au12: Vec<u8> = Vec::with_capacity(frames);
    for (level, &count) in DISFA_AU12_COUNTS.iter().enumerate() {
        au12.extend(core::iter::repeat_n(level as u8, count as usize));
    }
    debug_assert_eq!(au12.len(), frames);
    let mut rng = seeded(FIXTURE_SEED);
    au12.shuffle(&mut rng);

    let zero_frames: Vec<usize> = (0..frames).filter(|&i| au12[i] == 0).collect();
    let other_set = zero_frames.len() - FIXTURE_NEUTRAL_FRAMES as usize;
    let mut other = alloc::vec![0u8; frames];
    let mut chosen = zero_frames;
    chosen.shuffle(&mut rng);
    for &i in &chosen[..other_set] {
        other[i] = rng.random_range(1..=5);
    }

    let mut records = Vec::with_capacity(2 * frames);
    for i in 0..frames {
        let video_id = format!("{:03}", i as u32 / FRAMES_PER_VIDEO + 1);
        let frame_index = i as u32 % FRAMES_PER_VIDEO;
        for (au, intensity) in [(SMILE_AU, au12[i]), (FIXTURE_OTHER_AU, other[i])] {
            records.push(AnnotationRecord {
                video_id: video_id.clone(),
                frame_index,
                au: au.into(),
                intensity,
                line: records.len() + 2,
            });
        }
    }
    records
}
