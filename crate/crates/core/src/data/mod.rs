//! Samples, datasets and the subset constructions used by the experiments.
//!
//! Subsetting always happens before splitting, and every fractional count is
//! floored.

mod image;
mod synth;

use alloc::collections::{BTreeMap, BTreeSet};
use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use rand::seq::{index, SliceRandom};

use crate::error::{Error, Result};
use crate::optim::{Examples, Splits};
use crate::rng::Rng;
use crate::stats::AnnotationRecord;
use crate::tensor::Tensor;

pub use image::{crop, resize_bilinear, scaled_dims, CropBox, MOUTH_BOX, MOUTH_SCALE};
pub use synth::{synth_generate, synth_sample, Histogram, DISFA_AU12_COUNTS, DISFA_OTHER_AU_RATE, FRAMES_PER_VIDEO};

/// Annotation tag carrying the smile intensity.
pub const SMILE_AU: &str = "AU12";
pub const MAX_INTENSITY: u8 = 5;
/// Neutral frames kept by the reduced dataset.
pub const REDUCED_NEUTRAL_FRACTION: f64 = 0.30;

#[derive(Debug, Clone, PartialEq)]
pub struct Sample {
    /// `[height, width]`, grayscale in `[0, 1]`.
    pub image: Tensor,
    pub au12_intensity: u8,
    pub any_au_set: bool,
    pub video_id: String,
    pub frame_index: u32,
}

impl Sample {
    pub fn is_neutral(&self) -> bool {
        !self.any_au_set
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Provenance {
    Full,
    Reduced,
    Low,
    High,
    LowVsHigh,
    Synthetic,
}

impl Provenance {
    pub fn as_str(self) -> &'static str {
        match self {
            Provenance::Full => "full",
            Provenance::Reduced => "reduced",
            Provenance::Low => "low",
            Provenance::High => "high",
            Provenance::LowVsHigh => "low_vs_high",
            Provenance::Synthetic => "synthetic",
        }
    }

    pub fn code(self) -> u8 {
        self as u8
    }

    pub fn from_code(code: u8) -> Option<Self> {
        use Provenance::*;
        [Full, Reduced, Low, High, LowVsHigh, Synthetic].get(code as usize).copied()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    samples: Vec<Sample>,
    provenance: Provenance,
}

impl Dataset {
    /// Checks that all images share one shape, intensities are in range,
    /// AU12 implies "some AU set", and `(video, frame)` pairs are unique.
    pub fn new(samples: Vec<Sample>, provenance: Provenance) -> Result<Self> {
        if let Some(first) = samples.first() {
            let shape = first.image.shape();
            if shape.len() != 2 {
                return Err(Error::InvalidShape(format!("images must be [h, w], got {shape:?}")));
            }
            let mut seen = BTreeSet::new();
            for (i, s) in samples.iter().enumerate() {
                if s.image.shape() != shape {
                    return Err(Error::ShapeMismatch(format!(
                        "sample {i} has shape {:?}, expected {shape:?}",
                        s.image.shape()
                    )));
                }
                if s.au12_intensity > MAX_INTENSITY {
                    return Err(Error::InvalidArgument(format!(
                        "sample {i}: intensity {} out of range",
                        s.au12_intensity
                    )));
                }
                if s.au12_intensity > 0 && !s.any_au_set {
                    return Err(Error::InvalidArgument(format!("sample {i}: AU12 set but no AU flagged")));
                }
                if !seen.insert((s.video_id.as_str(), s.frame_index)) {
                    return Err(Error::InvalidArgument(format!(
                        "duplicate frame {} of video {}",
                        s.frame_index, s.video_id
                    )));
                }
            }
        }
        Ok(Self { samples, provenance })
    }

    pub fn samples(&self) -> &[Sample] {
        &self.samples
    }

    pub fn into_samples(self) -> Vec<Sample> {
        self.samples
    }

    pub fn provenance(&self) -> Provenance {
        self.provenance
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn image_shape(&self) -> Option<(usize, usize)> {
        self.samples.first().map(|s| (s.image.shape()[0], s.image.shape()[1]))
    }

    /// Binary class: smile present, except for the low-vs-high subset where
    /// class 1 means high intensity.
    pub fn label(&self, sample: &Sample) -> usize {
        match self.provenance {
            Provenance::LowVsHigh => usize::from(sample.au12_intensity >= 4),
            _ => usize::from(sample.au12_intensity > 0),
        }
    }

    pub fn intensity_counts(&self) -> [usize; 6] {
        let mut counts = [0; 6];
        for s in &self.samples {
            counts[s.au12_intensity as usize] += 1;
        }
        counts
    }

    pub fn neutral_count(&self) -> usize {
        self.samples.iter().filter(|s| s.is_neutral()).count()
    }

    fn derived(&self, samples: Vec<Sample>, provenance: Provenance) -> Self {
        Self { samples, provenance }
    }

    /// Stacks images into `[n, h, w]` with labels per [`Dataset::label`].
    pub fn to_examples(&self) -> Result<Examples> {
        let (h, w) = self
            .image_shape()
            .ok_or_else(|| Error::EmptyDataset(format!("{} dataset has no samples", self.provenance.as_str())))?;
        let mut data = Vec::with_capacity(self.len() * h * w);
        for s in &self.samples {
            data.extend_from_slice(s.image.data());
        }
        let labels = self.samples.iter().map(|s| self.label(s)).collect();
        Examples::new(Tensor::from_vec(&[self.len(), h, w], data)?, labels, 2)
    }

    /// Applies `f` to every image, e.g. to resize a whole dataset.
    pub fn map_images(&self, f: impl Fn(&Tensor) -> Result<Tensor>) -> Result<Self> {
        let samples =
            self.samples.iter().map(|s| Ok(Sample { image: f(&s.image)?, ..s.clone() })).collect::<Result<Vec<_>>>()?;
        Dataset::new(samples, self.provenance)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SplitSpec {
    pub train_frac: f64,
    pub val_frac: f64,
    pub test_frac: f64,
    pub seed: u64,
}

impl SplitSpec {
    pub fn standard(seed: u64) -> Self {
        Self { train_frac: 0.6, val_frac: 0.2, test_frac: 0.2, seed }
    }

    /// `(train, val, test)` sizes for `n` samples: floors for the first two,
    /// the remainder for test.
    pub fn sizes(&self, n: usize) -> (usize, usize, usize) {
        let floor = |f: f64| libm::floor(f * n as f64 + 1e-9) as usize;
        let train = floor(self.train_frac).min(n);
        let val = floor(self.val_frac).min(n - train);
        (train, val, n - train - val)
    }
}

/// Seeded shuffle, then contiguous cut into train/validation/test.
pub fn split(dataset: &Dataset, spec: &SplitSpec) -> Result<(Dataset, Dataset, Dataset)> {
    let fracs = [spec.train_frac, spec.val_frac, spec.test_frac];
    if fracs.iter().any(|f| !(0.0..=1.0).contains(f)) || (fracs.iter().sum::<f64>() - 1.0).abs() > 1e-9 {
        return Err(Error::InvalidArgument(format!("split fractions {fracs:?} must sum to 1")));
    }
    if dataset.len() < 5 {
        return Err(Error::InvalidArgument(format!("need at least 5 samples to split, got {}", dataset.len())));
    }
    let mut order: Vec<usize> = (0..dataset.len()).collect();
    order.shuffle(&mut crate::rng::seeded(spec.seed));
    let (ntrain, nval, _) = spec.sizes(dataset.len());
    let pick =
        |idx: &[usize]| dataset.derived(idx.iter().map(|&i| dataset.samples[i].clone()).collect(), dataset.provenance);
    Ok((pick(&order[..ntrain]), pick(&order[ntrain..ntrain + nval]), pick(&order[ntrain + nval..])))
}

/// Splits and converts each part to training examples.
pub fn split_examples(dataset: &Dataset, spec: &SplitSpec) -> Result<Splits> {
    let (train, val, test) = split(dataset, spec)?;
    Ok(Splits { train: train.to_examples()?, val: val.to_examples()?, test: test.to_examples()? })
}

/// Keeps every sample with some AU set and `⌊keep_fraction × #neutral⌋`
/// neutral samples drawn without replacement. Survivors keep their order.
pub fn reduce_neutral(dataset: &Dataset, keep_fraction: f64, rng: &mut Rng) -> Result<Dataset> {
    if !(keep_fraction > 0.0 && keep_fraction <= 1.0) {
        return Err(Error::InvalidArgument(format!("keep fraction must be in (0, 1], got {keep_fraction}")));
    }
    let neutral: Vec<usize> = (0..dataset.len()).filter(|&i| dataset.samples[i].is_neutral()).collect();
    let keep = libm::floor(keep_fraction * neutral.len() as f64 + 1e-9) as usize;
    let mut keep_mask = alloc::vec![true; dataset.len()];
    for &i in &neutral {
        keep_mask[i] = false;
    }
    for pos in index::sample(rng, neutral.len(), keep.min(neutral.len())).into_iter() {
        keep_mask[neutral[pos]] = true;
    }
    let samples = dataset.samples.iter().zip(&keep_mask).filter(|(_, &k)| k).map(|(s, _)| s.clone()).collect();
    let provenance = match dataset.provenance {
        p @ (Provenance::Low | Provenance::High | Provenance::LowVsHigh) => p,
        _ => Provenance::Reduced,
    };
    Ok(dataset.derived(samples, provenance))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum IntensityBand {
    /// Smile intensities 1 and 2.
    Low,
    /// Smile intensities 4 and 5.
    High,
}

impl IntensityBand {
    pub fn contains(self, intensity: u8) -> bool {
        match self {
            IntensityBand::Low => matches!(intensity, 1 | 2),
            IntensityBand::High => matches!(intensity, 4 | 5),
        }
    }
}

/// Drops smile frames outside `band`. Frames without AU12 stay.
pub fn filter_intensity_band(dataset: &Dataset, band: IntensityBand) -> Dataset {
    let samples =
        dataset.samples.iter().filter(|s| s.au12_intensity == 0 || band.contains(s.au12_intensity)).cloned().collect();
    let provenance = match band {
        IntensityBand::Low => Provenance::Low,
        IntensityBand::High => Provenance::High,
    };
    dataset.derived(samples, provenance)
}

/// Keeps only smile intensities 1, 2, 4 and 5; class 1 becomes "high".
pub fn select_low_vs_high(dataset: &Dataset) -> Result<Dataset> {
    let samples: Vec<Sample> = dataset
        .samples
        .iter()
        .filter(|s| IntensityBand::Low.contains(s.au12_intensity) || IntensityBand::High.contains(s.au12_intensity))
        .cloned()
        .collect();
    if samples.is_empty() {
        return Err(Error::EmptyDataset("no low or high intensity smile frames".into()));
    }
    Ok(dataset.derived(samples, Provenance::LowVsHigh))
}

/// Per-frame labels distilled from annotation rows.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FrameLabel {
    pub video_id: String,
    pub frame_index: u32,
    pub au12_intensity: u8,
    pub any_au_set: bool,
}

/// One label per distinct `(video, frame)`, sorted by video then frame.
/// A frame counts as "some AU set" if any of its rows has intensity > 0.
pub fn frame_labels(records: &[AnnotationRecord]) -> Vec<FrameLabel> {
    let mut frames: BTreeMap<(&str, u32), (u8, bool)> = BTreeMap::new();
    for r in records {
        let entry = frames.entry((r.video_id.as_str(), r.frame_index)).or_insert((0, false));
        if r.intensity > 0 {
            entry.1 = true;
        }
        if r.au == SMILE_AU {
            entry.0 = entry.0.max(r.intensity);
        }
    }
    frames
        .into_iter()
        .map(|((video, frame), (au12, any))| FrameLabel {
            video_id: video.into(),
            frame_index: frame,
            au12_intensity: au12,
            any_au_set: any,
        })
        .collect()
}

/// Builds a dataset from frame labels, pairing each with `image(label)`.
pub fn dataset_from_frames(
    frames: &[FrameLabel],
    provenance: Provenance,
    mut image: impl FnMut(&FrameLabel) -> Result<Tensor>,
) -> Result<Dataset> {
    let samples = frames
        .iter()
        .map(|f| {
            Ok(Sample {
                image: image(f)?,
                au12_intensity: f.au12_intensity,
                any_au_set: f.any_au_set,
                video_id: f.video_id.clone(),
                frame_index: f.frame_index,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Dataset::new(samples, provenance)
}
