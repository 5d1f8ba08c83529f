//! One-factor-at-a-time model selection and the repeatability experiment.
//!
//! Every parameter is varied on its own while the others hold their
//! defaults. Each configuration is trained once with a seed derived from the
//! master seed and the configuration's position in the enumeration.

use alloc::format;
use alloc::vec::Vec;

use crate::data::{split_examples, Dataset, SplitSpec};
use crate::error::{Error, Result};
use crate::nn::{Network, NetworkConfig};
use crate::optim::{median, train, Clock, OptimizerConfig, Splits};
use crate::rng::{derive_seed, seeded};

#[derive(Debug, Clone, PartialEq)]
pub struct Axis<T> {
    pub values: Vec<T>,
    pub default: T,
}

impl<T: PartialEq + Copy> Axis<T> {
    pub fn new(values: Vec<T>, default: T) -> Self {
        Self { values, default }
    }

    pub fn singleton(value: T) -> Self {
        Self { values: alloc::vec![value], default: value }
    }

    /// Non-default values in list order, without repeats.
    fn variants(&self) -> Vec<T> {
        let mut out: Vec<T> = Vec::new();
        for &v in &self.values {
            if v != self.default && !out.contains(&v) {
                out.push(v);
            }
        }
        out
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum Parameter {
    Convs,
    HiddenLayers,
    HiddenUnits,
    Dropout,
}

impl Parameter {
    pub const ALL: [Parameter; 4] =
        [Parameter::Convs, Parameter::HiddenLayers, Parameter::HiddenUnits, Parameter::Dropout];

    pub fn name(self) -> &'static str {
        match self {
            Parameter::Convs => "num_convs",
            Parameter::HiddenLayers => "num_hidden_layers",
            Parameter::HiddenUnits => "hidden_units",
            Parameter::Dropout => "dropout",
        }
    }

    fn value(self, c: &NetworkConfig) -> f64 {
        match self {
            Parameter::Convs => c.num_convs as f64,
            Parameter::HiddenLayers => c.num_hidden_layers as f64,
            Parameter::HiddenUnits => c.hidden_units as f64,
            Parameter::Dropout => c.dropout_p,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SearchSpace {
    pub convs: Axis<usize>,
    pub hidden_layers: Axis<usize>,
    pub hidden_units: Axis<usize>,
    pub dropout: Axis<f64>,
}

impl Default for SearchSpace {
    /// The grid the smile detector was tuned on.
    fn default() -> Self {
        Self {
            convs: Axis::new(alloc::vec![1, 2, 3], 1),
            hidden_layers: Axis::new(alloc::vec![1, 2, 3], 1),
            hidden_units: Axis::new(alloc::vec![100, 200, 300, 400], 100),
            dropout: Axis::new(alloc::vec![0.0, 0.1, 0.5, 0.7], 0.5),
        }
    }
}

impl SearchSpace {
    pub fn validate(&self) -> Result<()> {
        let check = |ok: bool, p: Parameter| {
            if ok {
                Ok(())
            } else {
                Err(Error::InvalidArgument(format!("default of {} is not among its values", p.name())))
            }
        };
        check(self.convs.values.contains(&self.convs.default), Parameter::Convs)?;
        check(self.hidden_layers.values.contains(&self.hidden_layers.default), Parameter::HiddenLayers)?;
        check(self.hidden_units.values.contains(&self.hidden_units.default), Parameter::HiddenUnits)?;
        check(self.dropout.values.contains(&self.dropout.default), Parameter::Dropout)
    }

    /// `base` with the four searched parameters at their defaults.
    pub fn defaults(&self, base: &NetworkConfig) -> NetworkConfig {
        NetworkConfig {
            num_convs: self.convs.default,
            num_hidden_layers: self.hidden_layers.default,
            hidden_units: self.hidden_units.default,
            dropout_p: self.dropout.default,
            ..*base
        }
    }

    fn default_value(&self, p: Parameter) -> f64 {
        match p {
            Parameter::Convs => self.convs.default as f64,
            Parameter::HiddenLayers => self.hidden_layers.default as f64,
            Parameter::HiddenUnits => self.hidden_units.default as f64,
            Parameter::Dropout => self.dropout.default,
        }
    }

    fn values(&self, p: Parameter) -> Vec<f64> {
        match p {
            Parameter::Convs => self.convs.values.iter().map(|&v| v as f64).collect(),
            Parameter::HiddenLayers => self.hidden_layers.values.iter().map(|&v| v as f64).collect(),
            Parameter::HiddenUnits => self.hidden_units.values.iter().map(|&v| v as f64).collect(),
            Parameter::Dropout => self.dropout.values.clone(),
        }
    }
}

/// The all-defaults configuration followed by one configuration per
/// non-default value, parameters in table order (convs, hidden layers,
/// units, dropout). Input geometry and class count come from `base`.
pub fn enumerate_ofat(space: &SearchSpace, base: &NetworkConfig) -> Result<Vec<NetworkConfig>> {
    space.validate()?;
    let d = space.defaults(base);
    let mut out = alloc::vec![d];
    out.extend(space.convs.variants().into_iter().map(|v| NetworkConfig { num_convs: v, ..d }));
    out.extend(space.hidden_layers.variants().into_iter().map(|v| NetworkConfig { num_hidden_layers: v, ..d }));
    out.extend(space.hidden_units.variants().into_iter().map(|v| NetworkConfig { hidden_units: v, ..d }));
    out.extend(space.dropout.variants().into_iter().map(|v| NetworkConfig { dropout_p: v, ..d }));
    Ok(out)
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunResult {
    pub config: NetworkConfig,
    pub epochs: usize,
    pub test_loss: f64,
    pub test_accuracy: f64,
    /// Validation loss after the last epoch.
    pub val_loss: f64,
    pub epoch_seconds: Vec<f64>,
    pub seed: u64,
}

impl RunResult {
    pub fn median_epoch_seconds(&self) -> f64 {
        median(&self.epoch_seconds).unwrap_or(0.0)
    }
}

/// Which number decides the winner of each parameter.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum SelectOn {
    /// Lowest test loss.
    #[default]
    TestLoss,
    /// Lowest validation loss after the final epoch.
    ValidationLoss,
    /// Highest test accuracy.
    TestAccuracy,
}

impl SelectOn {
    /// Smaller is better.
    fn score(self, r: &RunResult) -> f64 {
        match self {
            SelectOn::TestLoss => r.test_loss,
            SelectOn::ValidationLoss => r.val_loss,
            SelectOn::TestAccuracy => -r.test_accuracy,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Chosen {
    pub num_convs: usize,
    pub num_hidden_layers: usize,
    pub hidden_units: usize,
    pub dropout_p: f64,
}

impl Chosen {
    pub fn apply(&self, base: &NetworkConfig) -> NetworkConfig {
        NetworkConfig {
            num_convs: self.num_convs,
            num_hidden_layers: self.num_hidden_layers,
            hidden_units: self.hidden_units,
            dropout_p: self.dropout_p,
            ..*base
        }
    }
}

fn same_except(a: &NetworkConfig, b: &NetworkConfig, p: Parameter) -> bool {
    Parameter::ALL.iter().filter(|&&q| q != p).all(|&q| q.value(a) == q.value(b))
}

/// For each parameter, the value whose run scores best among the default
/// run and that parameter's variants. Ties keep the default, then the
/// smaller value. The order of `results` does not matter.
pub fn pick_best(space: &SearchSpace, results: &[RunResult], metric: SelectOn) -> Result<Chosen> {
    space.validate()?;
    let is_default = |c: &NetworkConfig| Parameter::ALL.iter().all(|&p| p.value(c) == space.default_value(p));
    let default_run = results
        .iter()
        .find(|r| is_default(&r.config))
        .ok_or_else(|| Error::IncompleteReport("no run with all default values".into()))?;

    let mut picks = [0.0; 4];
    for (slot, &p) in picks.iter_mut().zip(&Parameter::ALL) {
        let default = space.default_value(p);
        let mut values = space.values(p);
        values.sort_by(f64::total_cmp);
        values.dedup();
        let mut best = (SelectOn::score(metric, default_run), default);
        for v in values.into_iter().filter(|&v| v != default) {
            let run = results
                .iter()
                .find(|r| p.value(&r.config) == v && same_except(&r.config, &default_run.config, p))
                .ok_or_else(|| Error::IncompleteReport(format!("no run for {} = {v}", p.name())))?;
            let score = metric.score(run);
            // strict improvement only, so ties keep the default or the smaller value
            if score < best.0 {
                best = (score, v);
            }
        }
        *slot = best.1;
    }
    Ok(Chosen {
        num_convs: picks[0] as usize,
        num_hidden_layers: picks[1] as usize,
        hidden_units: picks[2] as usize,
        dropout_p: picks[3],
    })
}

/// Builds and trains one configuration. The seed drives weight
/// initialisation and, through a derived sub-seed, shuffling and dropout.
pub fn run_config(
    config: NetworkConfig,
    splits: &Splits,
    opt: &OptimizerConfig,
    seed: u64,
    clock: &dyn Clock,
) -> Result<RunResult> {
    let tag = |e: Error| match e {
        Error::Divergence(msg) => Error::Divergence(format!("{config:?}: {msg}")),
        other => other,
    };
    let mut net = Network::build(config, &mut seeded(derive_seed(seed, 0)))?;
    let report = train(&mut net, splits, opt, derive_seed(seed, 1), clock).map_err(tag)?;
    let val_loss = match report.final_val_loss() {
        Some(v) => v,
        None => crate::optim::evaluate(&net, &splits.val)?.0,
    };
    Ok(RunResult {
        config,
        epochs: opt.epochs,
        test_loss: report.test_loss,
        test_accuracy: report.test_accuracy,
        val_loss,
        epoch_seconds: report.epochs.iter().map(|e| e.seconds).collect(),
        seed,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct SelectionReport {
    pub runs: Vec<RunResult>,
    pub chosen: Chosen,
    pub final_config: NetworkConfig,
    pub metric: SelectOn,
}

/// Configurations to train, each with its derived seed, in report order.
pub fn selection_plan(
    space: &SearchSpace,
    base: &NetworkConfig,
    master_seed: u64,
) -> Result<Vec<(NetworkConfig, u64)>> {
    Ok(enumerate_ofat(space, base)?
        .into_iter()
        .enumerate()
        .map(|(i, c)| (c, derive_seed(master_seed, i as u64)))
        .collect())
}

pub fn assemble_report(
    space: &SearchSpace,
    base: &NetworkConfig,
    runs: Vec<RunResult>,
    metric: SelectOn,
) -> Result<SelectionReport> {
    let chosen = pick_best(space, &runs, metric)?;
    Ok(SelectionReport { final_config: chosen.apply(base), runs, chosen, metric })
}

/// Trains every one-factor configuration once, sequentially.
pub fn run_selection(
    space: &SearchSpace,
    base: &NetworkConfig,
    splits: &Splits,
    opt: &OptimizerConfig,
    master_seed: u64,
    metric: SelectOn,
    clock: &dyn Clock,
) -> Result<SelectionReport> {
    let runs = selection_plan(space, base, master_seed)?
        .into_iter()
        .map(|(c, seed)| run_config(c, splits, opt, seed, clock))
        .collect::<Result<Vec<_>>>()?;
    assemble_report(space, base, runs, metric)
}

/// Per configuration, the lower-middle median epoch duration.
pub fn timing_summary(results: &[RunResult]) -> Vec<(NetworkConfig, f64)> {
    results.iter().map(|r| (r.config, r.median_epoch_seconds())).collect()
}

/// Divide-by-n standard deviation.
pub fn population_stddev(values: &[f64]) -> Option<f64> {
    if values.is_empty() {
        return None;
    }
    let n = values.len() as f64;
    let mut mean = values.iter().sum::<f64>() / n;
    // one correction pass removes the rounding error of the naive mean
    mean += values.iter().map(|v| v - mean).sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
    Some(libm::sqrt(var))
}

#[derive(Debug, Clone, PartialEq)]
pub struct RepeatReport {
    pub seeds: Vec<u64>,
    pub accuracies: Vec<f64>,
    pub stddev: f64,
}

/// One run per seed; each run re-splits the dataset and re-initialises
/// the weights from its own seed.
pub fn repeat_with_seeds(
    config: NetworkConfig,
    dataset: &Dataset,
    fractions: &SplitSpec,
    opt: &OptimizerConfig,
    seeds: &[u64],
    clock: &dyn Clock,
) -> Result<RepeatReport> {
    if seeds.len() < 2 {
        return Err(Error::InvalidArgument(format!("need at least 2 runs, got {}", seeds.len())));
    }
    let mut accuracies = Vec::with_capacity(seeds.len());
    for (i, &seed) in seeds.iter().enumerate() {
        let spec = SplitSpec { seed: derive_seed(seed, 2), ..*fractions };
        let run = split_examples(dataset, &spec)
            .and_then(|splits| run_config(config, &splits, opt, seed, clock))
            .map_err(|e| match e {
                Error::Divergence(msg) => Error::Divergence(format!("run {}: {msg}", i + 1)),
                other => other,
            })?;
        accuracies.push(run.test_accuracy);
    }
    let stddev = population_stddev(&accuracies).unwrap_or(0.0);
    Ok(RepeatReport { seeds: seeds.to_vec(), accuracies, stddev })
}

/// `n_runs` repetitions with seeds derived from `master_seed`.
pub fn repeatability(
    config: NetworkConfig,
    dataset: &Dataset,
    fractions: &SplitSpec,
    opt: &OptimizerConfig,
    n_runs: usize,
    master_seed: u64,
    clock: &dyn Clock,
) -> Result<RepeatReport> {
    let seeds: Vec<u64> = (0..n_runs as u64).map(|i| derive_seed(master_seed, i)).collect();
    repeat_with_seeds(config, dataset, fractions, opt, &seeds, clock)
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    fn run(c: NetworkConfig, loss: f64) -> RunResult {
        RunResult {
            config: c,
            epochs: 1,
            test_loss: loss,
            test_accuracy: 1.0 - loss,
            val_loss: loss,
            epoch_seconds: vec![1.0],
            seed: 0,
        }
    }

    #[test]
    fn ofat_counts() {
        let base = NetworkConfig::default();
        let configs = enumerate_ofat(&SearchSpace::default(), &base).unwrap();
        assert_eq!(configs.len(), 11);
        assert_eq!(configs[0], SearchSpace::default().defaults(&base));

        let single = SearchSpace {
            convs: Axis::singleton(1),
            hidden_layers: Axis::singleton(1),
            hidden_units: Axis::singleton(100),
            dropout: Axis::singleton(0.5),
        };
        assert_eq!(enumerate_ofat(&single, &base).unwrap().len(), 1);

        let repeated = SearchSpace { convs: Axis::new(vec![1, 1, 2, 2], 1), ..single };
        assert_eq!(enumerate_ofat(&repeated, &base).unwrap().len(), 2);

        let bad = SearchSpace { convs: Axis::new(vec![2, 3], 1), ..SearchSpace::default() };
        assert!(enumerate_ofat(&bad, &base).is_err());
    }

    #[test]
    fn all_equal_losses_pick_defaults() {
        let space = SearchSpace::default();
        let base = NetworkConfig::default();
        let runs: Vec<RunResult> = enumerate_ofat(&space, &base).unwrap().into_iter().map(|c| run(c, 0.3)).collect();
        let chosen = pick_best(&space, &runs, SelectOn::TestLoss).unwrap();
        assert_eq!(chosen.apply(&base), space.defaults(&base));
    }

    #[test]
    fn tie_between_variants_prefers_smaller() {
        let space = SearchSpace::default();
        let base = NetworkConfig::default();
        let runs: Vec<RunResult> = enumerate_ofat(&space, &base)
            .unwrap()
            .into_iter()
            .map(|c| run(c, if c.hidden_units == 300 || c.hidden_units == 400 { 0.1 } else { 0.3 }))
            .collect();
        assert_eq!(pick_best(&space, &runs, SelectOn::TestLoss).unwrap().hidden_units, 300);
    }

    #[test]
    fn missing_run_is_reported() {
        let space = SearchSpace::default();
        let base = NetworkConfig::default();
        let mut runs: Vec<RunResult> =
            enumerate_ofat(&space, &base).unwrap().into_iter().map(|c| run(c, 0.3)).collect();
        runs.remove(5);
        assert!(matches!(pick_best(&space, &runs, SelectOn::TestLoss), Err(Error::IncompleteReport(_))));
        assert!(matches!(pick_best(&space, &runs[1..], SelectOn::TestLoss), Err(Error::IncompleteReport(_))));
    }

    #[test]
    fn timing_medians() {
        let base = NetworkConfig::default();
        let mut r = run(base, 0.1);
        r.epoch_seconds = vec![3.0, 1.0, 2.0];
        assert_eq!(r.median_epoch_seconds(), 2.0);
        r.epoch_seconds = vec![4.5];
        assert_eq!(timing_summary(&[r.clone()])[0].1, 4.5);
        r.epoch_seconds = vec![1.0, 2.0, 3.0, 4.0];
        assert_eq!(r.median_epoch_seconds(), 2.0);
    }

    #[test]
    fn stddev_closed_forms() {
        assert_eq!(population_stddev(&[0.7, 0.7, 0.7]), Some(0.0));
        let d = 0.25;
        assert!((population_stddev(&[0.5, 0.5 + d]).unwrap() - d / 2.0).abs() < 1e-15);
        assert_eq!(population_stddev(&[]), None);
    }
}
