//! Model selection with configuration runs spread over worker threads.

use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;

use smilenet_core::modelsel::{
    assemble_report, run_config, selection_plan, RunResult, SearchSpace, SelectOn, SelectionReport,
};
use smilenet_core::nn::NetworkConfig;
use smilenet_core::optim::{Clock, OptimizerConfig, Splits};

use crate::error::Result;

/// Same report as the sequential selection for any `jobs`: every run has
/// its own derived seed and results are assembled in enumeration order.
#[allow(clippy::too_many_arguments)]
pub fn run_selection_parallel(
    space: &SearchSpace,
    base: &NetworkConfig,
    splits: &Splits,
    opt: &OptimizerConfig,
    master_seed: u64,
    metric: SelectOn,
    clock: &(dyn Clock + Sync),
    jobs: usize,
) -> Result<SelectionReport> {
    let plan = selection_plan(space, base, master_seed)?;
    let next = AtomicUsize::new(0);
    let slots: Vec<Mutex<Option<smilenet_core::Result<RunResult>>>> = plan.iter().map(|_| Mutex::new(None)).collect();
    let workers = jobs.clamp(1, plan.len().max(1));

    std::thread::scope(|s| {
        for _ in 0..workers {
            s.spawn(|| loop {
                let i = next.fetch_add(1, Ordering::Relaxed);
                let Some(&(config, seed)) = plan.get(i) else { break };
                let result = run_config(config, splits, opt, seed, clock);
                let failed = result.is_err();
                *slots[i].lock().unwrap() = Some(result);
                if failed {
                    // stop handing out work; the first error in plan order is reported
                    next.store(plan.len(), Ordering::Relaxed);
                }
            });
        }
    });

    let mut runs = Vec::with_capacity(plan.len());
    for slot in slots {
        match slot.into_inner().unwrap() {
            Some(r) => runs.push(r?),
            None => continue,
        }
    }
    Ok(assemble_report(space, base, runs, metric)?)
}
