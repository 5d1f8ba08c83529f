//! The `smilenet` command line.
//!
//! Exit codes: 0 success, 1 data or parse failure, 2 flag misuse or an
//! impossible network configuration, 3 numeric divergence.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use smilenet_core::data::{
    filter_intensity_band, reduce_neutral, resize_bilinear, scaled_dims, select_low_vs_high, split_examples,
    synth_generate, Dataset, Histogram, IntensityBand, Provenance, SplitSpec, MOUTH_BOX, MOUTH_SCALE,
    REDUCED_NEUTRAL_FRACTION, SMILE_AU,
};
use smilenet_core::modelsel::{repeatability, SearchSpace, SelectOn};
use smilenet_core::nn::{Network, NetworkConfig, FACE_INPUT, FEATURE_MAPS};
use smilenet_core::optim::{evaluate, train_observed, Clock, NullClock, OptimizerConfig};
use smilenet_core::stats::{
    disfa_fixture_records, render_csv, render_report, AnnotationRecord, Scope, StatsReport, FIXTURE_OTHER_AU,
};
use smilenet_core::{derive_seed, seeded};

use crate::annotations::{parse_annotations, write_annotations};
use crate::checkpoint::{load_network, save_network};
use crate::clock::MonotonicClock;
use crate::dataset_io::{load_dataset, save_dataset};
use crate::error::{Error, Result};
use crate::parallel::run_selection_parallel;
use crate::pgm::save_pgm;
use crate::report::{write_epoch_row, write_repeat_report, write_selection_report, write_train_summary, TRAIN_HEADER};

/// Seed used when `--seed` is not given.
pub const DEFAULT_SEED: u64 = 42;

#[derive(Debug, Parser)]
#[command(name = "smilenet", version, about = "Train and evaluate CNN smile detectors")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a synthetic dataset, or the corpus-count annotation fixture.
    GenData(GenDataArgs),
    /// Action-unit counts and intensity histograms from an annotation CSV.
    Stats(StatsArgs),
    /// Train one network and write its per-epoch report.
    Train(TrainArgs),
    /// One-factor-at-a-time model selection over the standard grid.
    Select(SelectArgs),
    /// Retrain one configuration under several seeds.
    Repeat(RepeatArgs),
    /// Score a checkpoint on the test split.
    Eval(EvalArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Part {
    Mouth,
    Face,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Fixture {
    DisfaCounts,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Subset {
    Full,
    Reduced,
    Low,
    High,
    LowVsHigh,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Text,
    Csv,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Metric {
    Test,
    Validation,
    Accuracy,
}

impl From<Metric> for SelectOn {
    fn from(m: Metric) -> Self {
        match m {
            Metric::Test => SelectOn::TestLoss,
            Metric::Validation => SelectOn::ValidationLoss,
            Metric::Accuracy => SelectOn::TestAccuracy,
        }
    }
}

fn parse_size(s: &str) -> std::result::Result<(usize, usize), String> {
    let (h, w) = s.split_once(['x', 'X']).ok_or_else(|| format!("expected HxW, got {s:?}"))?;
    let dim = |v: &str| match v.trim().parse::<usize>() {
        Ok(d) if d > 0 => Ok(d),
        _ => Err(format!("bad dimension {v:?} in {s:?}")),
    };
    Ok((dim(h)?, dim(w)?))
}

#[derive(Debug, Args)]
pub struct GenDataArgs {
    #[arg(long, default_value_t = 2000)]
    pub n: usize,
    #[arg(long, value_enum, default_value_t = Part::Mouth)]
    pub part: Part,
    /// Resize every image to HxW after rendering.
    #[arg(long, value_parser = parse_size)]
    pub size: Option<(usize, usize)>,
    #[arg(long, default_value_t = DEFAULT_SEED)]
    pub seed: u64,
    /// Dataset file to write.
    #[arg(long, required_unless_present = "fixture")]
    pub out: Option<PathBuf>,
    /// Annotation CSV to write alongside the dataset.
    #[arg(long, required_if_eq("fixture", "disfa-counts"))]
    pub annotations: Option<PathBuf>,
    /// Write only a fixture annotation CSV instead of a dataset.
    #[arg(long, value_enum, conflicts_with = "out")]
    pub fixture: Option<Fixture>,
    /// Also write the first image as a PGM file.
    #[arg(long)]
    pub preview: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct StatsArgs {
    /// Annotation CSV with header video_id,frame,au,intensity.
    pub input: PathBuf,
    /// Only report these action units (repeatable).
    #[arg(long)]
    pub au: Vec<String>,
    /// Only count frames of this video.
    #[arg(long)]
    pub video: Option<String>,
    #[arg(long, value_enum, default_value_t = Format::Text)]
    pub format: Format,
    /// Write to a file instead of standard output.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct DataArgs {
    /// Dataset file written by gen-data.
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long, value_enum, default_value_t = Subset::Full)]
    pub subset: Subset,
    #[arg(long, default_value_t = DEFAULT_SEED)]
    pub seed: u64,
}

#[derive(Debug, Args)]
pub struct NetArgs {
    #[arg(long, default_value_t = 1)]
    pub convs: usize,
    #[arg(long, default_value_t = 1)]
    pub hidden_layers: usize,
    #[arg(long, default_value_t = 100)]
    pub units: usize,
    #[arg(long, default_value_t = 0.5)]
    pub dropout: f64,
    #[arg(long, default_value_t = FEATURE_MAPS)]
    pub feature_maps: usize,
}

#[derive(Debug, Args)]
pub struct OptArgs {
    #[arg(long, default_value_t = 10)]
    pub epochs: usize,
    #[arg(long, default_value_t = 0.01)]
    pub alpha: f64,
    #[arg(long, default_value_t = 0.9)]
    pub mu: f64,
    /// Clamped to the training split size when larger.
    #[arg(long, default_value_t = 500)]
    pub batch_size: usize,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    #[command(flatten)]
    pub data: DataArgs,
    #[command(flatten)]
    pub net: NetArgs,
    #[command(flatten)]
    pub opt: OptArgs,
    /// Report CSV; standard output when absent.
    #[arg(long)]
    pub report: Option<PathBuf>,
    #[arg(long)]
    pub checkpoint: Option<PathBuf>,
    /// Record wall-clock epoch durations instead of NA.
    #[arg(long)]
    pub timing: bool,
}

#[derive(Debug, Args)]
pub struct SelectArgs {
    #[command(flatten)]
    pub data: DataArgs,
    #[command(flatten)]
    pub opt: OptArgs,
    #[arg(long, default_value_t = FEATURE_MAPS)]
    pub feature_maps: usize,
    #[arg(long, value_enum, default_value_t = Metric::Test)]
    pub select_on: Metric,
    /// Configurations trained concurrently.
    #[arg(long, default_value_t = 1, value_parser = clap::value_parser!(u16).range(1..))]
    pub jobs: u16,
    /// Report CSV; standard output when absent.
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long)]
    pub timing: bool,
}

#[derive(Debug, Args)]
pub struct RepeatArgs {
    #[command(flatten)]
    pub data: DataArgs,
    #[command(flatten)]
    pub net: NetArgs,
    #[command(flatten)]
    pub opt: OptArgs,
    #[arg(long, default_value_t = 10, value_parser = clap::value_parser!(u32).range(2..))]
    pub runs: u32,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    #[command(flatten)]
    pub data: DataArgs,
    #[arg(long)]
    pub checkpoint: PathBuf,
}

/// Parses `args` and runs the command, returning the process exit code.
pub fn main_with_args<I, T>(args: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = e.exit_code();
            let _ = write!(err, "{}", e.render());
            return code;
        }
    };
    match run(cli, out, err) {
        Ok(()) => 0,
        Err(e) => {
            let _ = writeln!(err, "error: {e}");
            e.exit_code()
        }
    }
}

pub fn run(cli: Cli, out: &mut dyn Write, err: &mut dyn Write) -> Result<()> {
    match cli.command {
        Command::GenData(a) => gen_data(a, out),
        Command::Stats(a) => stats(a, out),
        Command::Train(a) => train(a, out, err),
        Command::Select(a) => select(a, out, err),
        Command::Repeat(a) => repeat(a, out),
        Command::Eval(a) => eval(a, out),
    }
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    Ok(BufWriter::new(File::create(path).map_err(|e| Error::io(path, e))?))
}

/// One AU12 row per sample plus an AU25 row standing in for "some other
/// unit set" on smile-free frames.
fn dataset_annotations(ds: &Dataset) -> Vec<AnnotationRecord> {
    let mut records = Vec::with_capacity(2 * ds.len());
    for s in ds.samples() {
        let other = u8::from(s.any_au_set && s.au12_intensity == 0);
        for (au, intensity) in [(SMILE_AU, s.au12_intensity), (FIXTURE_OTHER_AU, other)] {
            records.push(AnnotationRecord {
                video_id: s.video_id.clone(),
                frame_index: s.frame_index,
                au: au.into(),
                intensity,
                line: records.len() + 2,
            });
        }
    }
    records
}

fn gen_data(a: GenDataArgs, out: &mut dyn Write) -> Result<()> {
    if let Some(Fixture::DisfaCounts) = a.fixture {
        let path = a.annotations.expect("clap requires --annotations with --fixture");
        let records = disfa_fixture_records();
        write_annotations(create(&path)?, &records)?;
        let report = StatsReport::build(&records, Scope::All, Some(&[SMILE_AU.to_string()]));
        writeln!(out, "wrote {} annotation rows to {}", records.len(), path.display())?;
        write!(out, "{}", render_report(&report))?;
        return Ok(());
    }
    let path = a.out.expect("clap requires --out without --fixture");
    let mut rng = seeded(a.seed);
    let hist = Histogram::disfa();
    // mouth crops are rendered at the bounding-box size and scaled like real crops
    let mut ds = match a.part {
        Part::Mouth => {
            let raw = synth_generate(a.n, MOUTH_BOX, &hist, &mut rng)?;
            let (h, w) = scaled_dims(MOUTH_BOX.0, MOUTH_BOX.1, MOUTH_SCALE);
            raw.map_images(|img| resize_bilinear(img, h, w))?
        }
        Part::Face => synth_generate(a.n, FACE_INPUT, &hist, &mut rng)?,
    };
    if let Some((h, w)) = a.size {
        ds = ds.map_images(|img| resize_bilinear(img, h, w))?;
    }
    save_dataset(&path, &ds)?;
    if let Some(ann) = &a.annotations {
        write_annotations(create(ann)?, &dataset_annotations(&ds))?;
    }
    if let Some(preview) = &a.preview {
        save_pgm(preview, &ds.samples()[0].image)?;
    }
    let (h, w) = ds.image_shape().unwrap_or((0, 0));
    let counts = ds.intensity_counts();
    writeln!(out, "wrote {} samples of {h}x{w} to {}", ds.len(), path.display())?;
    writeln!(out, "AU12 intensity 0..5: {counts:?}")?;
    writeln!(out, "neutral frames: {}", ds.neutral_count())?;
    Ok(())
}

fn stats(a: StatsArgs, out: &mut dyn Write) -> Result<()> {
    let file = File::open(&a.input).map_err(|e| Error::io(&a.input, e))?;
    let records = parse_annotations(std::io::BufReader::new(file))?;
    let scope = a.video.map_or(Scope::All, Scope::Video);
    let aus = (!a.au.is_empty()).then_some(a.au.as_slice());
    let report = StatsReport::build(&records, scope, aus);
    let text = match a.format {
        Format::Text => render_report(&report),
        Format::Csv => render_csv(&report),
    };
    match a.out {
        Some(path) => std::fs::write(&path, text).map_err(|e| Error::io(&path, e))?,
        None => out.write_all(text.as_bytes())?,
    }
    Ok(())
}

/// The dataset after the subset rule, ready to split.
fn prepare(a: &DataArgs) -> Result<Dataset> {
    let ds = load_dataset(&a.data, Provenance::Full)?;
    let reduce = |ds: &Dataset| reduce_neutral(ds, REDUCED_NEUTRAL_FRACTION, &mut seeded(derive_seed(a.seed, 3)));
    // the intensity bands are cut from the full set, then thinned like the reduced set
    Ok(match a.subset {
        Subset::Full => ds,
        Subset::Reduced => reduce(&ds)?,
        Subset::Low => reduce(&filter_intensity_band(&ds, IntensityBand::Low))?,
        Subset::High => reduce(&filter_intensity_band(&ds, IntensityBand::High))?,
        Subset::LowVsHigh => select_low_vs_high(&ds)?,
    })
}

fn split_spec(seed: u64) -> SplitSpec {
    SplitSpec::standard(derive_seed(seed, 2))
}

fn net_config(ds: &Dataset, a: &NetArgs) -> Result<NetworkConfig> {
    let (h, w) = ds.image_shape().ok_or_else(|| smilenet_core::Error::EmptyDataset("dataset has no samples".into()))?;
    Ok(NetworkConfig {
        num_convs: a.convs,
        num_hidden_layers: a.hidden_layers,
        hidden_units: a.units,
        dropout_p: a.dropout,
        feature_maps: a.feature_maps,
        num_classes: 2,
        ..NetworkConfig::default()
    }
    .with_input(h, w))
}

fn optimizer(a: &OptArgs, train_len: usize) -> OptimizerConfig {
    OptimizerConfig { alpha: a.alpha, mu: a.mu, batch_size: a.batch_size.min(train_len.max(1)), epochs: a.epochs }
}

fn train(a: TrainArgs, out: &mut dyn Write, err: &mut dyn Write) -> Result<()> {
    let ds = prepare(&a.data)?;
    let config = net_config(&ds, &a.net)?;
    config.validate()?;
    let splits = split_examples(&ds, &split_spec(a.data.seed))?;
    let opt = optimizer(&a.opt, splits.train.len());
    if opt.batch_size < a.opt.batch_size {
        writeln!(err, "note: batch size clamped to the {} training samples", splits.train.len())?;
    }
    let mut net = Network::build(config, &mut seeded(derive_seed(a.data.seed, 0)))?;

    let mut file;
    let sink: &mut dyn Write = match &a.report {
        Some(path) => {
            file = create(path)?;
            &mut file
        }
        None => out,
    };
    writeln!(sink, "{TRAIN_HEADER}")?;
    sink.flush()?;
    let clock: Box<dyn Clock> = if a.timing { Box::new(MonotonicClock::new()) } else { Box::new(NullClock) };
    let mut write_failure = None;
    let result = train_observed(&mut net, &splits, &opt, derive_seed(a.data.seed, 1), clock.as_ref(), &mut |e| {
        if write_failure.is_none() {
            write_failure = write_epoch_row(sink, e, a.timing).and_then(|()| Ok(sink.flush()?)).err();
        }
    });
    if let Some(e) = write_failure {
        return Err(e);
    }
    let report = result?;
    write_train_summary(sink, &report, a.timing)?;
    sink.flush()?;
    if let Some(path) = &a.checkpoint {
        save_network(path, &net)?;
    }
    Ok(())
}

fn select(a: SelectArgs, out: &mut dyn Write, err: &mut dyn Write) -> Result<()> {
    let ds = prepare(&a.data)?;
    let (h, w) = ds.image_shape().ok_or_else(|| smilenet_core::Error::EmptyDataset("dataset has no samples".into()))?;
    let base =
        NetworkConfig { feature_maps: a.feature_maps, num_classes: 2, ..NetworkConfig::default() }.with_input(h, w);
    let splits = split_examples(&ds, &split_spec(a.data.seed))?;
    let opt = optimizer(&a.opt, splits.train.len());
    let clock: Box<dyn Clock + Sync> = if a.timing { Box::new(MonotonicClock::new()) } else { Box::new(NullClock) };
    if a.timing && a.jobs > 1 {
        writeln!(err, "note: epoch timings measured with {} configurations running concurrently", a.jobs)?;
    }
    let space = SearchSpace::default();
    let report = run_selection_parallel(
        &space,
        &base,
        &splits,
        &opt,
        a.data.seed,
        a.select_on.into(),
        clock.as_ref(),
        a.jobs as usize,
    )?;
    match &a.out {
        Some(path) => {
            let mut f = create(path)?;
            write_selection_report(&mut f, &report, a.timing)?;
            f.flush().map_err(|e| Error::io(path, e))?;
        }
        None => write_selection_report(out, &report, a.timing)?,
    }
    Ok(())
}

fn repeat(a: RepeatArgs, out: &mut dyn Write) -> Result<()> {
    let ds = prepare(&a.data)?;
    let config = net_config(&ds, &a.net)?;
    config.validate()?;
    let fractions = SplitSpec::standard(0);
    let opt = optimizer(&a.opt, fractions.sizes(ds.len()).0);
    let report = repeatability(config, &ds, &fractions, &opt, a.runs as usize, a.data.seed, &NullClock)?;
    write_repeat_report(out, &report)
}

fn eval(a: EvalArgs, out: &mut dyn Write) -> Result<()> {
    let net = load_network(&a.checkpoint)?;
    let ds = prepare(&a.data)?;
    let c = net.config();
    if ds.image_shape() != Some((c.input_height, c.input_width)) {
        return Err(smilenet_core::Error::ShapeMismatch(format!(
            "checkpoint expects {}x{} images, dataset has {:?}",
            c.input_height,
            c.input_width,
            ds.image_shape()
        ))
        .into());
    }
    let splits = split_examples(&ds, &split_spec(a.data.seed))?;
    let (loss, accuracy) = evaluate(&net, &splits.test)?;
    writeln!(out, "test_loss,test_accuracy")?;
    writeln!(out, "{loss},{accuracy}")?;
    Ok(())
}
