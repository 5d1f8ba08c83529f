use smilenet_core::data::{split_examples, synth_generate, synth_sample, Histogram, SplitSpec};
use smilenet_core::modelsel::{repeatability, run_selection, Axis, SearchSpace, SelectOn};
use smilenet_core::nn::{Network, NetworkConfig};
use smilenet_core::optim::{
    batch_gd_step, full_gradient, sgd_epoch, train, Examples, Momentum, NullClock, OptimizerConfig, Splits,
};
use smilenet_core::{seeded, Tensor};

fn small_splits(seed: u64) -> Splits {
    let ds = synth_generate(200, (14, 12), &Histogram::disfa(), &mut seeded(seed)).unwrap();
    split_examples(&ds, &SplitSpec::standard(seed)).unwrap()
}

fn dense(units: usize) -> NetworkConfig {
    NetworkConfig { num_convs: 0, hidden_units: units, dropout_p: 0.0, ..Default::default() }.with_input(14, 12)
}

#[test]
fn full_batch_sgd_without_momentum_is_one_gd_step() {
    let splits = small_splits(1);
    let net = Network::build(dense(10), &mut seeded(2)).unwrap();
    let alpha = 0.05;

    let mut gd = net.clone();
    let (_, grads) = full_gradient(&gd, &splits.train, &mut seeded(3)).unwrap();
    batch_gd_step(&mut gd, &grads.tensors(), alpha).unwrap();

    let mut sgd = net.clone();
    let cfg = OptimizerConfig { alpha, mu: 0.0, batch_size: splits.train.len(), epochs: 1 };
    let mut momentum = Momentum::zeros_like(&sgd).unwrap();
    sgd_epoch(&mut sgd, &splits.train, &cfg, &mut momentum, &mut seeded(4)).unwrap();

    for (a, b) in gd.parameters().iter().zip(sgd.parameters()) {
        for (x, y) in a.data().iter().zip(b.data()) {
            assert!((x - y).abs() <= 1e-12, "{x} vs {y}");
        }
    }
}

#[test]
fn training_loss_falls() {
    let splits = small_splits(5);
    let cfg = NetworkConfig { feature_maps: 4, hidden_units: 20, ..Default::default() }.with_input(14, 12);
    let mut net = Network::build(cfg, &mut seeded(6)).unwrap();
    let opt = OptimizerConfig { batch_size: 10, epochs: 8, ..Default::default() };
    let r = train(&mut net, &splits, &opt, 7, &NullClock).unwrap();
    assert_eq!(r.epochs.len(), 8);
    assert!(r.epochs[7].train_loss < r.epochs[0].train_loss);
    assert!(r.test_accuracy > 0.0 && r.test_accuracy <= 1.0);
}

#[test]
fn held_out_splits_do_not_influence_training() {
    let splits = small_splits(8);
    let opt = OptimizerConfig { batch_size: 20, epochs: 3, ..Default::default() };
    let losses = |s: &Splits| {
        let mut net = Network::build(dense(12), &mut seeded(9)).unwrap();
        train(&mut net, s, &opt, 10, &NullClock).unwrap()
    };
    let base = losses(&splits);
    let other = small_splits(11);
    let swapped = Splits { train: splits.train.clone(), val: other.val.clone(), test: other.test.clone() };
    let r = losses(&swapped);
    let train_losses =
        |r: &smilenet_core::optim::TrainReport| r.epochs.iter().map(|e| e.train_loss).collect::<Vec<_>>();
    assert_eq!(train_losses(&base), train_losses(&r));
    assert_ne!(base.test_loss, r.test_loss);
}

#[test]
fn synthetic_intensities_follow_the_histogram() {
    let ds = synth_generate(20_000, (6, 6), &Histogram::disfa(), &mut seeded(12)).unwrap();
    let counts = ds.intensity_counts();
    for (i, (&got, &w)) in counts.iter().zip(Histogram::disfa().weights()).enumerate() {
        let expected = w * 20_000.0;
        let tol = if expected >= 1000.0 { 0.05 * expected } else { 0.005 * 20_000.0 };
        assert!((got as f64 - expected).abs() <= tol, "intensity {i}: {got} vs {expected:.0}");
    }
}

#[test]
fn mouth_region_brightens_with_intensity() {
    let (h, w) = (85, 69);
    let mut rng = seeded(13);
    let means: Vec<f64> = (0..=5u8)
        .map(|k| {
            let mut total = 0.0;
            for _ in 0..40 {
                let img = synth_sample(k, h, w, &mut rng).unwrap();
                let rows = (h * 55 / 100)..(h * 85 / 100);
                let band: f64 = rows.flat_map(|r| img.data()[r * w..(r + 1) * w].to_vec()).sum();
                total += band;
            }
            total
        })
        .collect();
    assert!(means.windows(2).all(|p| p[1] > p[0]), "{means:?}");
}

#[test]
fn xor_is_learned() {
    let x = Tensor::from_vec(&[4, 1, 2], vec![0.0, 0.0, 0.0, 1.0, 1.0, 0.0, 1.0, 1.0]).unwrap();
    let ex = Examples::new(x, vec![0, 1, 1, 0], 2).unwrap();
    let splits = Splits { train: ex.clone(), val: ex.clone(), test: ex };
    let cfg = NetworkConfig { num_convs: 0, hidden_units: 8, dropout_p: 0.0, ..Default::default() }.with_input(1, 2);
    let mut net = Network::build(cfg, &mut seeded(7)).unwrap();
    let opt = OptimizerConfig { alpha: 0.1, mu: 0.9, batch_size: 4, epochs: 2000 };
    let r = train(&mut net, &splits, &opt, 8, &NullClock).unwrap();
    assert_eq!(r.test_accuracy, 1.0);
}

#[test]
fn selection_and_repeats_are_reproducible() {
    let ds = synth_generate(60, (36, 36), &Histogram::disfa(), &mut seeded(14)).unwrap();
    let splits = split_examples(&ds, &SplitSpec::standard(15)).unwrap();
    let space = SearchSpace {
        convs: Axis::new(vec![0, 1], 1),
        hidden_layers: Axis::singleton(1),
        hidden_units: Axis::new(vec![8, 16], 8),
        dropout: Axis::new(vec![0.0, 0.5], 0.5),
    };
    let base = NetworkConfig { feature_maps: 2, ..Default::default() }.with_input(36, 36);
    let opt = OptimizerConfig { batch_size: 12, epochs: 2, ..Default::default() };
    let a = run_selection(&space, &base, &splits, &opt, 16, SelectOn::TestLoss, &NullClock).unwrap();
    let b = run_selection(&space, &base, &splits, &opt, 16, SelectOn::TestLoss, &NullClock).unwrap();
    assert_eq!(a, b);
    assert_eq!(a.runs.len(), 4);

    let cfg = NetworkConfig { num_convs: 0, hidden_units: 8, ..Default::default() }.with_input(36, 36);
    let r1 = repeatability(cfg, &ds, &SplitSpec::standard(0), &opt, 3, 17, &NullClock).unwrap();
    let r2 = repeatability(cfg, &ds, &SplitSpec::standard(0), &opt, 3, 17, &NullClock).unwrap();
    assert_eq!(r1, r2);
    assert_eq!(r1.accuracies.len(), 3);
    assert!(repeatability(cfg, &ds, &SplitSpec::standard(0), &opt, 1, 17, &NullClock).is_err());
}
