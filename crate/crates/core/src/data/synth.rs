//! Procedural stand-in for aligned face crops.
//!
//! A bright elliptical head on a dark background, two dark eye blobs and a
//! bright mouth arc. The arc's width, sag and stroke thickness all grow with
//! the smile intensity, so mean mouth-region brightness increases with it.
//! Every image gets Gaussian pixel noise (σ = 0.05) and a random translation
//! of up to 3 pixels in each direction.

use alloc::format;
use alloc::string::ToString;
use alloc::vec::Vec;

use rand::Rng as _;
use rand_distr::{Distribution, Normal};

use super::{Dataset, Provenance, Sample};
use crate::error::{Error, Result};
use crate::rng::Rng;
use crate::tensor::Tensor;

/// AU12 frame counts per intensity 0..=5 over the 27 × 4,844 frame corpus.
pub const DISFA_AU12_COUNTS: [u64; 6] = [99_996, 13_942, 6_868, 7_233, 2_577, 172];
/// Fraction of AU12-free frames that still carry some other action unit:
/// 51,384 of 99,996 (82,176 AU-set frames minus the 30,792 smiles).
pub const DISFA_OTHER_AU_RATE: f64 = 51_384.0 / 99_996.0;
pub const FRAMES_PER_VIDEO: u32 = 4_844;

const NOISE_SIGMA: f64 = 0.05;
const MAX_SHIFT: i64 = 3;
const BACKGROUND: f64 = 0.1;
const SKIN: f64 = 0.5;
const EYE: f64 = 0.1;
const MOUTH: f64 = 0.95;

/// Probability of each smile intensity 0..=5.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Histogram([f64; 6]);

impl Histogram {
    pub fn new(weights: [f64; 6]) -> Result<Self> {
        if weights.iter().any(|w| !w.is_finite() || *w < 0.0) {
            return Err(Error::InvalidArgument(format!("histogram weights must be non-negative: {weights:?}")));
        }
        let total: f64 = weights.iter().sum();
        if (total - 1.0).abs() > 1e-9 {
            return Err(Error::InvalidArgument(format!("histogram sums to {total}, not 1")));
        }
        Ok(Self(weights))
    }

    pub fn from_counts(counts: [u64; 6]) -> Result<Self> {
        let total: u64 = counts.iter().sum();
        if total == 0 {
            return Err(Error::InvalidArgument("histogram has no mass".into()));
        }
        Self::new(counts.map(|c| c as f64 / total as f64))
    }

    /// The AU12 marginal of the real corpus.
    pub fn disfa() -> Self {
        Self::from_counts(DISFA_AU12_COUNTS).expect("constant histogram is valid")
    }

    pub fn weights(&self) -> &[f64; 6] {
        &self.0
    }

    pub fn draw(&self, rng: &mut Rng) -> u8 {
        let u: f64 = rng.random();
        let mut acc = 0.0;
        for (i, &w) in self.0.iter().enumerate() {
            acc += w;
            if u < acc {
                return i as u8;
            }
        }
        // rounding left a sliver above the last cumulative sum
        self.0.iter().rposition(|&w| w > 0.0).unwrap_or(0) as u8
    }
}

/// Renders one face with the given smile intensity.
pub fn synth_sample(intensity: u8, height: usize, width: usize, rng: &mut Rng) -> Result<Tensor> {
    if height < 4 || width < 4 {
        return Err(Error::InvalidArgument(format!("{height}x{width} is too small to draw a face")));
    }
    let k = f64::from(intensity.min(5));
    let (hf, wf) = (height as f64, width as f64);
    let dy = rng.random_range(-MAX_SHIFT..=MAX_SHIFT) as f64;
    let dx = rng.random_range(-MAX_SHIFT..=MAX_SHIFT) as f64;
    let noise = Normal::new(0.0, NOISE_SIGMA).expect("valid sigma");

    let (cy, cx) = (0.5 * hf + dy, 0.5 * wf + dx);
    let (ry, rx) = (0.44 * hf, 0.42 * wf);
    let eye_r = 0.07 * hf.min(wf);
    let eyes = [(0.36 * hf + dy, 0.33 * wf + dx), (0.36 * hf + dy, 0.67 * wf + dx)];

    let mouth_y = 0.68 * hf + dy;
    let mouth_x = 0.5 * wf + dx;
    let half_width = (0.16 + 0.02 * k) * wf;
    let sag = 0.035 * k * hf;
    let thickness = (0.02 + 0.018 * k) * hf;

    let mut data = Vec::with_capacity(height * width);
    for r in 0..height {
        let y = r as f64 + 0.5;
        for c in 0..width {
            let x = c as f64 + 0.5;
            let ey = (y - cy) / ry;
            let ex = (x - cx) / rx;
            let mut v = if ey * ey + ex * ex <= 1.0 { SKIN } else { BACKGROUND };
            for &(eyy, eyx) in &eyes {
                let d2 = (y - eyy) * (y - eyy) + (x - eyx) * (x - eyx);
                let w = libm::exp(-d2 / (2.0 * eye_r * eye_r));
                v = v * (1.0 - w) + EYE * w;
            }
            let u = (x - mouth_x) / half_width;
            if u.abs() <= 1.0 {
                // corners stay at mouth_y, the centre drops by `sag`
                let curve = mouth_y + sag * (1.0 - u * u) - sag * 0.5;
                let coverage = (thickness / 2.0 + 0.5 - (y - curve).abs()).clamp(0.0, 1.0);
                v = v * (1.0 - coverage) + MOUTH * coverage;
            }
            data.push((v + noise.sample(rng)).clamp(0.0, 1.0));
        }
    }
    Tensor::from_vec(&[height, width], data)
}

/// `n` synthetic samples with intensities drawn from `histogram`. Frames are
/// numbered like the real corpus: 4,844 frames per video, ids `001`, `002`…
pub fn synth_generate(n: usize, shape: (usize, usize), histogram: &Histogram, rng: &mut Rng) -> Result<Dataset> {
    if n == 0 {
        return Err(Error::InvalidArgument("need at least one sample".into()));
    }
    let mut samples = Vec::with_capacity(n);
    for i in 0..n {
        let intensity = histogram.draw(rng);
        let other_au = rng.random::<f64>() < DISFA_OTHER_AU_RATE;
        let image = synth_sample(intensity, shape.0, shape.1, rng)?;
        let i = i as u32;
        samples.push(Sample {
            image,
            au12_intensity: intensity,
            any_au_set: intensity > 0 || other_au,
            video_id: format!("{:03}", i / FRAMES_PER_VIDEO + 1).to_string(),
            frame_index: i % FRAMES_PER_VIDEO,
        });
    }
    Dataset::new(samples, Provenance::Synthetic)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::seeded;

    #[test]
    fn histogram_validation() {
        assert!(Histogram::new([0.5, 0.5, 0.0, 0.0, 0.0, 0.0]).is_ok());
        assert!(Histogram::new([0.5, 0.4, 0.0, 0.0, 0.0, 0.0]).is_err());
        assert!(Histogram::new([1.5, -0.5, 0.0, 0.0, 0.0, 0.0]).is_err());
        assert!(Histogram::from_counts([0; 6]).is_err());
        let w = Histogram::disfa().weights()[0];
        assert!((w - 99_996.0 / 130_788.0).abs() < 1e-15);
    }

    #[test]
    fn all_neutral_histogram() {
        let h = Histogram::new([1.0, 0.0, 0.0, 0.0, 0.0, 0.0]).unwrap();
        let ds = synth_generate(50, (20, 16), &h, &mut seeded(1)).unwrap();
        assert!(ds.samples().iter().all(|s| ds.label(s) == 0));
    }

    #[test]
    fn deterministic_under_seed() {
        let h = Histogram::disfa();
        let a = synth_generate(20, (24, 20), &h, &mut seeded(9)).unwrap();
        let b = synth_generate(20, (24, 20), &h, &mut seeded(9)).unwrap();
        assert_eq!(a, b);
        assert!(a.samples().iter().all(|s| s.image.data().iter().all(|v| (0.0..=1.0).contains(v))));
    }

    #[test]
    fn frames_are_numbered_per_video() {
        let h = Histogram::disfa();
        let ds = synth_generate(3, (10, 10), &h, &mut seeded(2)).unwrap();
        assert_eq!(ds.samples()[2].video_id, "001");
        assert_eq!(ds.samples()[2].frame_index, 2);
    }
}
