//! CSV writers for training and selection reports.
//!
//! Timing columns hold `NA` unless timing is requested, so reports from
//! identical runs are byte-identical.

use std::io::Write;

use smilenet_core::modelsel::{RepeatReport, SelectionReport};
use smilenet_core::nn::NetworkConfig;
use smilenet_core::optim::{EpochRecord, TrainReport};

use crate::error::Result;

pub const TRAIN_HEADER: &str = "epoch,train_loss,val_loss,epoch_seconds";
pub const SELECTION_HEADER: &str =
    "num_convs,num_hidden_layers,hidden_units,dropout,test_loss,test_accuracy,median_epoch_seconds";

fn seconds(v: f64, timing: bool) -> String {
    if timing {
        format!("{v:.6}")
    } else {
        "NA".into()
    }
}

pub fn write_epoch_row<W: Write + ?Sized>(w: &mut W, e: &EpochRecord, timing: bool) -> Result<()> {
    writeln!(w, "{},{},{},{}", e.epoch, e.train_loss, e.val_loss, seconds(e.seconds, timing))?;
    Ok(())
}

pub fn write_train_summary<W: Write + ?Sized>(w: &mut W, r: &TrainReport, timing: bool) -> Result<()> {
    writeln!(w, "test,{},{},{}", r.test_loss, r.test_accuracy, seconds(r.median_epoch_seconds(), timing))?;
    Ok(())
}

pub fn write_train_report<W: Write + ?Sized>(w: &mut W, r: &TrainReport, timing: bool) -> Result<()> {
    writeln!(w, "{TRAIN_HEADER}")?;
    for e in &r.epochs {
        write_epoch_row(w, e, timing)?;
    }
    write_train_summary(w, r, timing)
}

fn config_cells(c: &NetworkConfig) -> String {
    format!("{},{},{},{}", c.num_convs, c.num_hidden_layers, c.hidden_units, c.dropout_p)
}

/// One row per configuration in enumeration order, then a `chosen` row with
/// the combined per-parameter winners. The footer's metric cells are empty
/// because that configuration was not trained during selection.
pub fn write_selection_report<W: Write + ?Sized>(w: &mut W, r: &SelectionReport, timing: bool) -> Result<()> {
    writeln!(w, "{SELECTION_HEADER}")?;
    for run in &r.runs {
        writeln!(
            w,
            "{},{},{},{}",
            config_cells(&run.config),
            run.test_loss,
            run.test_accuracy,
            seconds(run.median_epoch_seconds(), timing)
        )?;
    }
    writeln!(w, "chosen,{},,,", config_cells(&r.final_config))?;
    Ok(())
}

/// Accuracies and the population standard deviation, both in percent.
pub fn write_repeat_report<W: Write + ?Sized>(w: &mut W, r: &RepeatReport) -> Result<()> {
    for (i, (acc, seed)) in r.accuracies.iter().zip(&r.seeds).enumerate() {
        writeln!(w, "run {}: accuracy {:.4}% (seed {seed})", i + 1, acc * 100.0)?;
    }
    writeln!(w, "stddev: {:.6}%", r.stddev * 100.0)?;
    Ok(())
}
