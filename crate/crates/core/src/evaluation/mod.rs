//! Macro-F1 scoring, prediction dumps, paired t-tests and report assembly.

mod dump;
mod metrics;
mod report;
pub mod special;
mod ttest;

pub use dump::{
    align_correctness, correctness_vector, decompose_full_mtl, recompose_full_mtl,
    PredictionDump, PredictionRow,
};
pub use metrics::{macro_f1, per_class_metrics, ClassMetrics, ConfusionMatrix};
pub use report::{build_report, render_table, EvalReport, RunMetrics, SignificanceEntry, TaskMetrics};
pub use ttest::{paired_t_test, SignificanceResult, ALPHA};

use crate::labels::TaskId;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("shape error: {0}")]
    Shape(String),
    #[error("label {label} outside 0..{classes}")]
    LabelRange { label: usize, classes: usize },
    #[error("task {0} is not present in the dump")]
    MissingTask(TaskId),
    #[error("joint label {label} of example {example_id} is outside 0..=3")]
    JointDomain { example_id: String, label: usize },
    #[error("sample size {0} is too small for a paired t-test (need n >= 2)")]
    SampleSize(usize),
    #[error("alignment error: {0}")]
    Alignment(String),
    #[error("duplicate example id {0}")]
    DuplicateId(String),
    #[error("{path}: {message}")]
    Io { path: String, message: String },
}
