use super::{train, ExperimentConfig, GridAxes, RunRecord, TrainError, TrainOutcome};
use crate::corpus::DatasetSplit;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "status", rename_all = "snake_case")]
pub enum RunStatus {
    Completed { record: Box<RunRecord> },
    Diverged { epoch: usize, step: usize, detail: String },
    Failed { error: String },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridRun {
    pub index: usize,
    pub config: ExperimentConfig,
    pub status: RunStatus,
}

impl GridRun {
    pub fn record(&self) -> Option<&RunRecord> {
        match &self.status {
            RunStatus::Completed { record } => Some(record),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridResult {
    pub runs: Vec<GridRun>,
    /// Index into `runs`; `None` when no run completed.
    pub best: Option<usize>,
}

impl GridResult {
    pub fn best_run(&self) -> Option<&GridRun> {
        self.best.map(|i| &self.runs[i])
    }
}

/// Trains every grid point (optionally in parallel) and picks the best run.
///
/// Best = highest validation selection score at the run's best epoch; ties
/// go to fewer epochs, then the lower learning rate, then grid order.
/// Diverged runs are recorded and skipped. `on_done` sees each finished run
/// with its full outcome, e.g. to persist artifacts.
pub fn grid_search<F>(
    base: &ExperimentConfig,
    axes: &GridAxes,
    split: &DatasetSplit,
    workers: usize,
    on_done: F,
) -> Result<GridResult, TrainError>
where
    F: Fn(usize, &ExperimentConfig, &Result<TrainOutcome, TrainError>) + Sync,
{
    let configs = axes.configs(base)?;
    let run_one = |(i, c): (usize, &ExperimentConfig)| {
        let result = train(c, split);
        on_done(i, c, &result);
        let status = match result {
            Ok(out) => RunStatus::Completed {
                record: Box::new(out.record),
            },
            Err(TrainError::Divergence { epoch, step, detail, .. }) => {
                log::warn!("grid point {i} diverged at epoch {epoch}, step {step}");
                RunStatus::Diverged { epoch, step, detail }
            }
            Err(e @ (TrainError::Config(_) | TrainError::Data(_))) => return Err(e),
            Err(e) => RunStatus::Failed {
                error: e.to_string(),
            },
        };
        Ok(GridRun {
            index: i,
            config: c.clone(),
            status,
        })
    };
    let runs: Vec<GridRun> = if workers <= 1 {
        configs.iter().enumerate().map(run_one).collect::<Result<_, _>>()?
    } else {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(workers)
            .build()
            .map_err(|e| TrainError::Config(format!("worker pool: {e}")))?;
        pool.install(|| {
            configs
                .par_iter()
                .enumerate()
                .map(run_one)
                .collect::<Result<_, _>>()
        })?
    };

    let mut best: Option<usize> = None;
    for (i, run) in runs.iter().enumerate() {
        let Some(r) = run.record() else { continue };
        let better = match best.and_then(|b| runs[b].record()) {
            None => true,
            Some(b) => {
                let (s, bs) = (r.best_score(), b.best_score());
                s > bs
                    || (s == bs
                        && (r.config.epochs < b.config.epochs
                            || (r.config.epochs == b.config.epochs
                                && r.config.learning_rate < b.config.learning_rate)))
            }
        };
        if better {
            best = Some(i);
        }
    }
    Ok(GridResult { runs, best })
}
