//! Loss, accuracy, gradient descent, momentum SGD and the training loop.

use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use rand::seq::SliceRandom;

use crate::error::{Error, Result};
use crate::nn::{ForwardMode, ForwardTrace, Gradients, Layer, LayerCache, Network};
use crate::rng::{seeded, Rng};
use crate::tensor::Tensor;

/// Lower clamp applied to probabilities before taking the log.
pub const LOG_CLAMP: f64 = 1e-12;

/// Rows evaluated at once when computing validation and test metrics.
pub const EVAL_CHUNK: usize = 256;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OptimizerConfig {
    pub alpha: f64,
    pub mu: f64,
    pub batch_size: usize,
    pub epochs: usize,
}

impl Default for OptimizerConfig {
    fn default() -> Self {
        Self { alpha: 0.01, mu: 0.9, batch_size: 500, epochs: 10 }
    }
}

impl OptimizerConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.alpha > 0.0 && self.alpha.is_finite()) {
            return Err(Error::InvalidArgument(format!("alpha must be positive, got {}", self.alpha)));
        }
        if !(0.0..1.0).contains(&self.mu) {
            return Err(Error::InvalidArgument(format!("mu must be in [0, 1), got {}", self.mu)));
        }
        if self.batch_size == 0 {
            return Err(Error::InvalidArgument("batch size must be at least 1".into()));
        }
        Ok(())
    }
}

/// Images (or feature rows) with integer class labels.
#[derive(Debug, Clone, PartialEq)]
pub struct Examples {
    /// `[n, ...]`; each row is one example.
    pub inputs: Tensor,
    pub labels: Vec<usize>,
    pub num_classes: usize,
}

impl Examples {
    pub fn new(inputs: Tensor, labels: Vec<usize>, num_classes: usize) -> Result<Self> {
        if inputs.rows() != labels.len() {
            return Err(Error::ShapeMismatch(format!("{} input rows but {} labels", inputs.rows(), labels.len())));
        }
        if let Some(&bad) = labels.iter().find(|&&l| l >= num_classes) {
            return Err(Error::InvalidArgument(format!("label {bad} outside {num_classes} classes")));
        }
        Ok(Self { inputs, labels, num_classes })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    /// Rows `indices` as a new batch, keeping the per-row shape.
    pub fn gather(&self, indices: &[usize]) -> Result<(Tensor, Vec<usize>)> {
        let w = self.inputs.row_len();
        let mut data = Vec::with_capacity(indices.len() * w);
        for &i in indices {
            data.extend_from_slice(self.inputs.row(i));
        }
        let mut shape = self.inputs.shape().to_vec();
        shape[0] = indices.len();
        let labels = indices.iter().map(|&i| self.labels[i]).collect();
        Ok((Tensor::from_vec(&shape, data)?, labels))
    }
}

pub fn one_hot(labels: &[usize], num_classes: usize) -> Result<Tensor> {
    let mut t = Tensor::zeros(&[labels.len().max(1), num_classes])?;
    if labels.is_empty() {
        return Err(Error::InvalidArgument("no labels to encode".into()));
    }
    for (r, &l) in labels.iter().enumerate() {
        t.data_mut()[r * num_classes + l] = 1.0;
    }
    Ok(t)
}

/// Mean over rows of `-Σ_c y_c ln(max(h_c, 1e-12))`.
pub fn cross_entropy_loss(predictions: &Tensor, targets: &Tensor) -> Result<f64> {
    if predictions.shape() != targets.shape() {
        return Err(Error::ShapeMismatch(format!(
            "predictions {:?} vs targets {:?}",
            predictions.shape(),
            targets.shape()
        )));
    }
    let m = predictions.rows() as f64;
    let total: f64 = predictions
        .data()
        .iter()
        .zip(targets.data())
        .filter(|(_, &y)| y != 0.0)
        .map(|(&h, &y)| -y * libm::log(h.max(LOG_CLAMP)))
        .sum();
    Ok(total / m)
}

/// Index of the largest entry; ties go to the lowest index.
pub fn argmax(row: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in row.iter().enumerate() {
        if v > row[best] {
            best = i;
        }
    }
    best
}

pub fn accuracy(predictions: &Tensor, labels: &[usize]) -> Result<f64> {
    if labels.is_empty() {
        return Err(Error::InvalidArgument("accuracy of an empty batch".into()));
    }
    if predictions.rows() != labels.len() {
        return Err(Error::ShapeMismatch(format!("{} prediction rows vs {} labels", predictions.rows(), labels.len())));
    }
    let correct = labels.iter().enumerate().filter(|(r, &l)| argmax(predictions.row(*r)) == l).count();
    Ok(correct as f64 / labels.len() as f64)
}

/// Anything with named, mutable parameter tensors.
pub trait Parameterized {
    fn parameters_mut(&mut self) -> Vec<&mut Tensor>;
    fn parameter_names(&self) -> Vec<String>;
}

impl Parameterized for Network {
    fn parameters_mut(&mut self) -> Vec<&mut Tensor> {
        Network::parameters_mut(self)
    }

    fn parameter_names(&self) -> Vec<String> {
        Network::parameter_names(self)
    }
}

fn check_gradients<P: Parameterized + ?Sized>(model: &P, grads: &[&Tensor]) -> Result<()> {
    if let Some(i) = grads.iter().position(|g| !g.is_finite()) {
        let name = model.parameter_names().into_iter().nth(i).unwrap_or_else(|| format!("tensor {i}"));
        return Err(Error::Divergence(format!("non-finite gradient in {name}")));
    }
    Ok(())
}

/// `θ ← θ − α∇J`, applied to every tensor after all gradients are checked.
pub fn batch_gd_step<P: Parameterized + ?Sized>(model: &mut P, grads: &[&Tensor], alpha: f64) -> Result<()> {
    check_gradients(model, grads)?;
    let params = model.parameters_mut();
    if params.len() != grads.len() {
        return Err(Error::Internal(format!("{} parameters vs {} gradients", params.len(), grads.len())));
    }
    for (p, g) in params.into_iter().zip(grads) {
        for (w, d) in p.data_mut().iter_mut().zip(g.data()) {
            *w -= alpha * d;
        }
    }
    Ok(())
}

/// Gradient of the mean loss over all of `examples`, without dropout noise
/// being resampled between chunks.
pub fn full_gradient(network: &Network, examples: &Examples, rng: &mut Rng) -> Result<(f64, Gradients)> {
    let all: Vec<usize> = (0..examples.len()).collect();
    let (x, labels) = examples.gather(&all)?;
    let trace = network.forward(&x, ForwardMode::Train(rng))?;
    let y = one_hot(&labels, examples.num_classes)?;
    let loss = cross_entropy_loss(trace.probabilities(), &y)?;
    Ok((loss, network.backward(&trace, &y)?))
}

/// Velocity buffers for classical momentum.
#[derive(Debug, Clone, PartialEq)]
pub struct Momentum {
    pub velocity: Vec<Tensor>,
}

impl Momentum {
    pub fn zeros_like(network: &Network) -> Result<Self> {
        let velocity = network.parameters().iter().map(|p| Tensor::zeros(p.shape())).collect::<Result<_>>()?;
        Ok(Self { velocity })
    }

    /// `v ← μv − α∇J`, `θ ← θ + v`.
    pub fn step<P: Parameterized + ?Sized>(
        &mut self,
        model: &mut P,
        grads: &[&Tensor],
        alpha: f64,
        mu: f64,
    ) -> Result<()> {
        check_gradients(model, grads)?;
        let params = model.parameters_mut();
        if params.len() != grads.len() || params.len() != self.velocity.len() {
            return Err(Error::Internal("velocity, parameter and gradient counts differ".into()));
        }
        for ((p, g), v) in params.into_iter().zip(grads).zip(&mut self.velocity) {
            for ((w, d), vel) in p.data_mut().iter_mut().zip(g.data()).zip(v.data_mut()) {
                *vel = mu * *vel - alpha * d;
                *w += *vel;
            }
        }
        Ok(())
    }
}

/// One pass over `train` in shuffled mini-batches. The final partial batch is
/// included. Returns the batch-size-weighted mean of the batch losses.
pub fn sgd_epoch(
    network: &mut Network,
    train: &Examples,
    config: &OptimizerConfig,
    momentum: &mut Momentum,
    rng: &mut Rng,
) -> Result<f64> {
    config.validate()?;
    if train.is_empty() {
        return Err(Error::InvalidArgument("empty training set".into()));
    }
    if config.batch_size > train.len() {
        return Err(Error::InvalidArgument(format!(
            "batch size {} exceeds training set size {}",
            config.batch_size,
            train.len()
        )));
    }
    let mut order: Vec<usize> = (0..train.len()).collect();
    order.shuffle(rng);
    let mut weighted = 0.0;
    for (b, chunk) in order.chunks(config.batch_size).enumerate() {
        let (x, labels) = train.gather(chunk)?;
        let y = one_hot(&labels, train.num_classes)?;
        let trace = network.forward(&x, ForwardMode::Train(rng))?;
        let loss = cross_entropy_loss(trace.probabilities(), &y)?;
        if !loss.is_finite() {
            return Err(Error::Divergence(format!("non-finite loss in batch {b}")));
        }
        let grads = network.backward(&trace, &y)?;
        momentum.step(network, &grads.tensors(), config.alpha, config.mu).map_err(|e| match e {
            Error::Divergence(msg) => Error::Divergence(format!("batch {b}: {msg}")),
            other => other,
        })?;
        weighted += loss * chunk.len() as f64;
    }
    Ok(weighted / train.len() as f64)
}

/// Mean loss and accuracy in evaluation mode, computed in fixed-size chunks.
pub fn evaluate(network: &Network, examples: &Examples) -> Result<(f64, f64)> {
    if examples.is_empty() {
        return Err(Error::InvalidArgument("cannot evaluate an empty set".into()));
    }
    let mut loss = 0.0;
    let mut correct = 0.0;
    let idx: Vec<usize> = (0..examples.len()).collect();
    for chunk in idx.chunks(EVAL_CHUNK) {
        let (x, labels) = examples.gather(chunk)?;
        let p = network.predict(&x)?;
        let y = one_hot(&labels, examples.num_classes)?;
        loss += cross_entropy_loss(&p, &y)? * chunk.len() as f64;
        correct += accuracy(&p, &labels)? * chunk.len() as f64;
    }
    let n = examples.len() as f64;
    Ok((loss / n, correct / n))
}

/// Monotonic time source in seconds. The std companion supplies a wall
/// clock; [`NullClock`] keeps runs reproducible byte for byte.
pub trait Clock {
    fn now(&self) -> f64;
}

#[derive(Debug, Clone, Copy, Default)]
pub struct NullClock;

impl Clock for NullClock {
    fn now(&self) -> f64 {
        0.0
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpochRecord {
    /// 1-based.
    pub epoch: usize,
    pub train_loss: f64,
    pub val_loss: f64,
    pub seconds: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainReport {
    pub epochs: Vec<EpochRecord>,
    pub test_loss: f64,
    pub test_accuracy: f64,
    pub seed: u64,
}

/// Lower-middle median; `None` for an empty slice.
pub fn median(values: &[f64]) -> Option<f64> {
    if values.is_empty() {
        return None;
    }
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    Some(v[(v.len() - 1) / 2])
}

impl TrainReport {
    pub fn median_epoch_seconds(&self) -> f64 {
        let secs: Vec<f64> = self.epochs.iter().map(|e| e.seconds).collect();
        median(&secs).unwrap_or(0.0)
    }

    pub fn final_val_loss(&self) -> Option<f64> {
        self.epochs.last().map(|e| e.val_loss)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Splits {
    pub train: Examples,
    pub val: Examples,
    pub test: Examples,
}

/// [`train_observed`] without a per-epoch callback.
pub fn train(
    network: &mut Network,
    splits: &Splits,
    config: &OptimizerConfig,
    seed: u64,
    clock: &dyn Clock,
) -> Result<TrainReport> {
    train_observed(network, splits, config, seed, clock, &mut |_| {})
}

/// Runs `config.epochs` SGD epochs, scoring the validation split after
/// each one, then scores the test split once. `observer` sees every epoch
/// record as soon as it exists, so callers can persist partial progress
/// before a divergence error is returned.
pub fn train_observed(
    network: &mut Network,
    splits: &Splits,
    config: &OptimizerConfig,
    seed: u64,
    clock: &dyn Clock,
    observer: &mut dyn FnMut(&EpochRecord),
) -> Result<TrainReport> {
    config.validate()?;
    for (name, part) in [("train", &splits.train), ("validation", &splits.val), ("test", &splits.test)] {
        if part.is_empty() {
            return Err(Error::InvalidArgument(format!("{name} split is empty")));
        }
    }
    let mut rng = seeded(seed);
    let mut momentum = Momentum::zeros_like(network)?;
    let mut epochs = Vec::with_capacity(config.epochs);
    for epoch in 1..=config.epochs {
        let start = clock.now();
        let train_loss = sgd_epoch(network, &splits.train, config, &mut momentum, &mut rng).map_err(|e| match e {
            Error::Divergence(msg) => Error::Divergence(format!("epoch {epoch}, {msg}")),
            other => other,
        })?;
        let seconds = (clock.now() - start).max(0.0);
        let (val_loss, _) = evaluate(network, &splits.val)?;
        if !val_loss.is_finite() {
            return Err(Error::Divergence(format!("epoch {epoch}: non-finite validation loss")));
        }
        let record = EpochRecord { epoch, train_loss, val_loss, seconds };
        observer(&record);
        epochs.push(record);
    }
    let (test_loss, test_accuracy) = evaluate(network, &splits.test)?;
    Ok(TrainReport { epochs, test_loss, test_accuracy, seed })
}

/// Which ReLU units are active and which inputs win each pooling window.
/// Within one pattern the loss is smooth in the parameters.
fn activation_pattern(network: &Network, trace: &ForwardTrace) -> Vec<usize> {
    let mut out = Vec::new();
    for (i, layer) in network.layers().iter().enumerate() {
        match (layer, &trace.caches[i]) {
            (Layer::Relu, _) => out.extend(trace.outputs[i].data().iter().map(|&v| usize::from(v > 0.0))),
            (_, LayerCache::PoolArgmax(idx)) => out.extend_from_slice(idx),
            _ => {}
        }
    }
    out
}

/// Smallest step tried when a perturbation crosses a ReLU or pooling kink.
const MIN_GRAD_CHECK_STEP: f64 = 1e-8;

/// Worst relative error `|a − n| / max(1e-8, |a| + |n|)` between
/// backpropagated gradients `a` and central differences
/// `n = (J(θ+ε) − J(θ−ε)) / 2ε` over every parameter.
///
/// Dropout masks are drawn once and replayed for every perturbed forward
/// pass, so stochastic layers are checked too. ReLU and max pooling are not
/// differentiable everywhere: when `θ ± ε` flips a unit's activity or a
/// pooling winner, the difference quotient straddles a kink and says nothing
/// about the gradient. Such parameters are re-measured with `ε / 10`, down
/// to 1e-8, and the last measurement counts either way.
pub fn grad_check(network: &Network, inputs: &Tensor, labels: &[usize], epsilon: f64, rng: &mut Rng) -> Result<f64> {
    let y = one_hot(labels, network.config().num_classes)?;
    let trace = network.forward(inputs, ForwardMode::Train(rng))?;
    let analytic = network.backward(&trace, &y)?;
    let analytic: Vec<Tensor> = analytic.tensors().into_iter().cloned().collect();
    let base_pattern = activation_pattern(network, &trace);

    let mut probe = network.clone();
    let eval = |net: &Network| -> Result<(f64, bool)> {
        let t = net.forward(inputs, ForwardMode::Frozen(&trace))?;
        let same = activation_pattern(net, &t) == base_pattern;
        Ok((cross_entropy_loss(t.probabilities(), &y)?, same))
    };
    let mut worst: f64 = 0.0;
    for (ti, grad) in analytic.iter().enumerate() {
        for k in 0..grad.len() {
            let orig = probe.parameters()[ti].data()[k];
            let mut step = epsilon;
            let numeric = loop {
                probe.parameters_mut()[ti].data_mut()[k] = orig + step;
                let (plus, same_plus) = eval(&probe)?;
                probe.parameters_mut()[ti].data_mut()[k] = orig - step;
                let (minus, same_minus) = eval(&probe)?;
                probe.parameters_mut()[ti].data_mut()[k] = orig;
                let numeric = (plus - minus) / (2.0 * step);
                if (same_plus && same_minus) || step / 10.0 < MIN_GRAD_CHECK_STEP {
                    break numeric;
                }
                step /= 10.0;
            };
            let a = grad.data()[k];
            let rel = (a - numeric).abs() / (a.abs() + numeric.abs()).max(1e-8);
            worst = worst.max(rel);
        }
    }
    Ok(worst)
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    fn t(shape: &[usize], data: &[f64]) -> Tensor {
        Tensor::from_vec(shape, data.to_vec()).unwrap()
    }

    #[test]
    fn cross_entropy_cases() {
        let y = t(&[1, 2], &[1.0, 0.0]);
        assert!(cross_entropy_loss(&y, &y).unwrap().abs() < 1e-12);
        let h = t(&[1, 2], &[0.5, 0.5]);
        assert!((cross_entropy_loss(&h, &y).unwrap() - core::f64::consts::LN_2).abs() < 1e-15);

        let h2 = t(&[1, 2], &[0.2, 0.8]);
        let y2 = t(&[1, 2], &[0.0, 1.0]);
        let both = cross_entropy_loss(&t(&[2, 2], &[0.5, 0.5, 0.2, 0.8]), &t(&[2, 2], &[1.0, 0.0, 0.0, 1.0])).unwrap();
        let mean = (cross_entropy_loss(&h, &y).unwrap() + cross_entropy_loss(&h2, &y2).unwrap()) / 2.0;
        assert!((both - mean).abs() < 1e-15);

        let saturated = t(&[1, 2], &[0.0, 1.0]);
        assert!((cross_entropy_loss(&saturated, &y).unwrap() - 27.631021115928547).abs() < 1e-9);
        assert!(cross_entropy_loss(&h, &t(&[2, 1], &[1.0, 0.0])).is_err());
    }

    #[test]
    fn accuracy_cases() {
        let p = t(&[2, 2], &[0.9, 0.1, 0.2, 0.8]);
        assert_eq!(accuracy(&p, &[0, 1]).unwrap(), 1.0);
        assert_eq!(accuracy(&t(&[1, 2], &[0.5, 0.5]), &[0]).unwrap(), 1.0);
        let p = t(&[4, 2], &[0.9, 0.1, 0.2, 0.8, 0.7, 0.3, 0.6, 0.4]);
        assert_eq!(accuracy(&p, &[0, 1, 0, 1]).unwrap(), 0.75);
        assert!(matches!(accuracy(&p, &[]), Err(Error::InvalidArgument(_))));
    }

    struct Quadratic(Tensor);

    impl Parameterized for Quadratic {
        fn parameters_mut(&mut self) -> Vec<&mut Tensor> {
            vec![&mut self.0]
        }
        fn parameter_names(&self) -> Vec<String> {
            vec!["theta".into()]
        }
    }

    #[test]
    fn gd_on_quadratic() {
        let mut q = Quadratic(t(&[1], &[1.0]));
        let g = t(&[1], &[2.0]);
        batch_gd_step(&mut q, &[&g], 0.01).unwrap();
        assert!((q.0.data()[0] - 0.98).abs() < 1e-15);

        let zero = t(&[1], &[0.0]);
        batch_gd_step(&mut q, &[&zero], 0.01).unwrap();
        assert!((q.0.data()[0] - 0.98).abs() < 1e-15);

        let mut prev = f64::INFINITY;
        let mut q = Quadratic(t(&[2], &[3.0, -2.0]));
        for _ in 0..50 {
            let th = q.0.data().to_vec();
            // J = x² + 4y²
            let j = th[0] * th[0] + 4.0 * th[1] * th[1];
            assert!(j < prev);
            prev = j;
            let g = t(&[2], &[2.0 * th[0], 8.0 * th[1]]);
            batch_gd_step(&mut q, &[&g], 0.05).unwrap();
        }
    }

    #[test]
    fn gd_rejects_non_finite_gradient() {
        let mut q = Quadratic(t(&[1], &[1.0]));
        let g = t(&[1], &[f64::NAN]);
        match batch_gd_step(&mut q, &[&g], 0.01) {
            Err(Error::Divergence(msg)) => assert!(msg.contains("theta")),
            other => panic!("unexpected {other:?}"),
        }
        assert_eq!(q.0.data()[0], 1.0);
    }

    #[test]
    fn momentum_with_zero_mu_is_plain_step() {
        let mut q = Quadratic(t(&[1], &[1.0]));
        let mut m = Momentum { velocity: vec![t(&[1], &[0.0])] };
        for g in [2.0, -1.0, 0.5] {
            m.step(&mut q, &[&t(&[1], &[g])], 0.1, 0.0).unwrap();
            assert!((m.velocity[0].data()[0] + 0.1 * g).abs() < 1e-15);
        }
    }

    #[test]
    fn median_lower_middle() {
        assert_eq!(median(&[3.0, 1.0, 2.0]), Some(2.0));
        assert_eq!(median(&[5.0]), Some(5.0));
        assert_eq!(median(&[1.0, 2.0, 3.0, 4.0]), Some(2.0));
        assert_eq!(median(&[]), None);
    }

    #[test]
    fn optimizer_config_validation() {
        assert!(OptimizerConfig::default().validate().is_ok());
        assert!(OptimizerConfig { alpha: 0.0, ..Default::default() }.validate().is_err());
        assert!(OptimizerConfig { mu: 1.0, ..Default::default() }.validate().is_err());
        assert!(OptimizerConfig { batch_size: 0, ..Default::default() }.validate().is_err());
    }
}
