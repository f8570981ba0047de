//! Training loops, hyperparameter sweeps and checkpoint selection.

mod config;
mod grid;
mod optim;
mod run;

pub use config::{
    in_learning_rate_grid, DataPaths, ExperimentConfig, GridAxes, SelectionMetric,
    BATCH_SIZE_GRID, DECODER_EPOCH_GRID, ENCODER_EPOCH_GRID, LEARNING_RATE_GRID,
};
pub use grid::{grid_search, GridResult, GridRun, RunStatus};
pub use optim::{Adam, OptimizerInfo};
pub use run::{
    select_checkpoint, select_epoch, train, train_with_backend, EpochMetrics, RunRecord,
    TrainOutcome,
};

use crate::evaluation::EvalError;
use crate::modeling::ModelError;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum TrainError {
    #[error("config error: {0}")]
    Config(String),
    #[error("data error: {0}")]
    Data(String),
    #[error("training diverged at epoch {epoch}, step {step}: {detail}")]
    Divergence {
        epoch: usize,
        step: usize,
        detail: String,
        /// Metrics up to the failure.
        record: Box<RunRecord>,
    },
    #[error("selection error: {0}")]
    Selection(String),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Eval(#[from] EvalError),
}
