//! Parallel Monte Carlo over independent, individually seeded trials.

use fdia_core::experiment::{Experiment, TrialConfig, TrialOutcome};
use fdia_core::stats::ConfusionStats;
use fdia_core::GridTopology;
use rayon::prelude::*;

use crate::Error;

/// Runs every trial and returns the outcomes in trial order. `threads`
/// of `None` uses rayon's default pool size; the result does not depend on
/// it.
pub fn run_trials(
    topology: &GridTopology,
    config: &TrialConfig,
    threads: Option<usize>,
) -> Result<Vec<TrialOutcome>, Error> {
    let experiment = Experiment::new(topology.clone(), config.clone())?;
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Some(n) = threads {
        builder = builder.num_threads(n);
    }
    let pool = builder.build().map_err(|e| Error::Invalid(format!("thread pool: {e}")))?;
    let outcomes: Result<Vec<TrialOutcome>, _> = pool.install(|| {
        (0..config.trials).into_par_iter().map(|k| experiment.run_trial(k)).collect()
    });
    Ok(outcomes?)
}

pub fn run_montecarlo(
    topology: &GridTopology,
    config: &TrialConfig,
    threads: Option<usize>,
) -> Result<ConfusionStats, Error> {
    Ok(ConfusionStats::from_outcomes(&run_trials(topology, config, threads)?))
}
