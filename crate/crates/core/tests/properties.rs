use proptest::prelude::*;

use smilenet_core::data::{resize_bilinear, split, Dataset, Provenance, Sample, SplitSpec};
use smilenet_core::modelsel::{enumerate_ofat, pick_best, population_stddev, Axis, RunResult, SearchSpace, SelectOn};
use smilenet_core::nn::{softmax, NetworkConfig};
use smilenet_core::stats::{binary_counts, intensity_histogram, AnnotationRecord, IntensityHistogram, Scope};
use smilenet_core::Tensor;

fn dataset(n: usize) -> Dataset {
    let samples = (0..n)
        .map(|i| Sample {
            image: Tensor::filled(&[1, 1], i as f64).unwrap(),
            au12_intensity: (i % 6) as u8,
            any_au_set: i % 6 != 0 || i % 4 == 0,
            video_id: format!("{:03}", i / 50),
            frame_index: (i % 50) as u32,
        })
        .collect();
    Dataset::new(samples, Provenance::Full).unwrap()
}

fn run(config: NetworkConfig, loss: f64) -> RunResult {
    RunResult {
        config,
        epochs: 1,
        test_loss: loss,
        test_accuracy: 1.0 - loss,
        val_loss: loss,
        epoch_seconds: vec![],
        seed: 0,
    }
}

proptest! {
    #[test]
    fn reshape_keeps_data(dims in prop::collection::vec(1usize..5, 1..4)) {
        let n: usize = dims.iter().product();
        let t = Tensor::from_vec(&dims, (0..n).map(|v| v as f64).collect()).unwrap();
        let flat = t.clone().reshape(&[n]).unwrap();
        prop_assert_eq!(flat.data(), t.data());
        prop_assert!(t.reshape(&[n + 1]).is_err());
    }

    #[test]
    fn softmax_is_a_distribution(logits in prop::collection::vec(-700.0f64..700.0, 1..8)) {
        let p = softmax(&logits);
        prop_assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        prop_assert!(p.iter().all(|&v| (0.0..=1.0).contains(&v)));
    }

    #[test]
    fn split_partitions_every_sample(n in 5usize..300, seed in any::<u64>()) {
        let ds = dataset(n);
        let spec = SplitSpec::standard(seed);
        let (tr, va, te) = split(&ds, &spec).unwrap();
        prop_assert_eq!((tr.len(), va.len(), te.len()), spec.sizes(n));
        prop_assert_eq!(tr.len(), n * 6 / 10);
        let mut ids: Vec<(String, u32)> = [&tr, &va, &te]
            .iter()
            .flat_map(|d| d.samples().iter().map(|s| (s.video_id.clone(), s.frame_index)))
            .collect();
        ids.sort();
        ids.dedup();
        prop_assert_eq!(ids.len(), n);
    }

    #[test]
    fn resize_stays_within_input_range(
        h in 1usize..12, w in 1usize..12, oh in 1usize..20, ow in 1usize..20, seed in any::<u64>()
    ) {
        let img = Tensor::random_uniform(&[h, w], 1.0, &mut smilenet_core::seeded(seed)).unwrap();
        let lo = img.data().iter().copied().fold(f64::INFINITY, f64::min);
        let hi = img.data().iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let r = resize_bilinear(&img, oh, ow).unwrap();
        prop_assert_eq!(r.shape(), &[oh, ow]);
        prop_assert!(r.data().iter().all(|&v| v >= lo && v <= hi));
    }

    #[test]
    fn ofat_size_formula(
        convs in prop::collection::btree_set(0usize..4, 1..4),
        layers in prop::collection::btree_set(1usize..4, 1..4),
        units in prop::collection::btree_set(1usize..500, 1..5),
        drops in prop::collection::btree_set(0u32..9, 1..5),
    ) {
        let axis = |v: &std::collections::BTreeSet<usize>| Axis::new(v.iter().copied().collect(), *v.iter().next().unwrap());
        let dv: Vec<f64> = drops.iter().map(|&d| f64::from(d) / 10.0).collect();
        let space = SearchSpace {
            convs: axis(&convs),
            hidden_layers: axis(&layers),
            hidden_units: axis(&units),
            dropout: Axis::new(dv.clone(), dv[0]),
        };
        let n = enumerate_ofat(&space, &NetworkConfig::default()).unwrap().len();
        prop_assert_eq!(n, 1 + (convs.len() - 1) + (layers.len() - 1) + (units.len() - 1) + (dv.len() - 1));
    }

    #[test]
    fn pick_best_ignores_row_order(losses in prop::collection::vec(0.0f64..1.0, 11), shift in 0usize..11) {
        let space = SearchSpace::default();
        let configs = enumerate_ofat(&space, &NetworkConfig::default()).unwrap();
        let mut rows: Vec<RunResult> = configs.into_iter().zip(&losses).map(|(c, &l)| run(c, l)).collect();
        let a = pick_best(&space, &rows, SelectOn::TestLoss).unwrap();
        rows.rotate_left(shift);
        rows.reverse();
        prop_assert_eq!(a, pick_best(&space, &rows, SelectOn::TestLoss).unwrap());
    }

    #[test]
    fn histograms_agree_with_counts(rows in prop::collection::vec((0u32..3, 0u32..40, 0usize..2, 0u8..6), 0..200)) {
        let aus = ["AU12", "AU6"];
        let records: Vec<AnnotationRecord> = rows
            .iter()
            .map(|&(v, f, a, i)| AnnotationRecord {
                video_id: v.to_string(),
                frame_index: f,
                au: aus[a].into(),
                intensity: i,
                line: 0,
            })
            .collect();
        let counts = binary_counts(&records, &Scope::All);
        for au in aus {
            let all = intensity_histogram(&records, au, &Scope::All);
            prop_assert_eq!(all.set_count(), counts.get(au).copied().unwrap_or(0));
            let mut summed = IntensityHistogram::default();
            for v in 0..3 {
                summed.add(&intensity_histogram(&records, au, &Scope::Video(v.to_string())));
            }
            prop_assert_eq!(summed, all);
        }
    }

    #[test]
    fn stddev_is_shift_invariant(values in prop::collection::vec(0.0f64..100.0, 1..20), shift in -50.0f64..50.0) {
        let a = population_stddev(&values).unwrap();
        let shifted: Vec<f64> = values.iter().map(|v| v + shift).collect();
        prop_assert!(a >= 0.0);
        prop_assert!((a - population_stddev(&shifted).unwrap()).abs() < 1e-9);
    }
}
