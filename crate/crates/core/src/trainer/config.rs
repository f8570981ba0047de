use super::TrainError;
use crate::labels::{ModeKind, TaskId, TaskMode};
use crate::modeling::{AdaptationConfig, Family, LossWeights, PoolingStrategy};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use std::collections::BTreeMap;

pub const LEARNING_RATE_GRID: [f64; 9] = [1e-3, 3e-3, 5e-3, 1e-4, 3e-4, 5e-4, 1e-5, 3e-5, 5e-5];
pub const ENCODER_EPOCH_GRID: [usize; 4] = [2, 5, 8, 10];
pub const DECODER_EPOCH_GRID: [usize; 5] = [5, 8, 10, 12, 15];
pub const BATCH_SIZE_GRID: [usize; 3] = [4, 8, 16];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SelectionMetric {
    /// Single-task modes use that task's Macro-F1, multi-task modes the mean
    /// over reported tasks.
    #[default]
    Auto,
    MeanMacroF1,
    BiasMacroF1,
    StereotypeMacroF1,
    SentimentMacroF1,
}

impl SelectionMetric {
    pub fn resolve(self, mode: TaskMode) -> SelectionMetric {
        match self {
            SelectionMetric::Auto => match mode.kind() {
                ModeKind::SharedMtl | ModeKind::FullMtl => SelectionMetric::MeanMacroF1,
                _ => match mode.head_tasks()[0] {
                    TaskId::Stereotype => SelectionMetric::StereotypeMacroF1,
                    TaskId::Sentiment => SelectionMetric::SentimentMacroF1,
                    _ => SelectionMetric::BiasMacroF1,
                },
            },
            other => other,
        }
    }

    /// Score from per-task validation Macro-F1; `None` if a required task is missing.
    pub fn score(self, mode: TaskMode, f1: &BTreeMap<TaskId, f64>) -> Option<f64> {
        let one = |t| f1.get(&t).copied();
        match self.resolve(mode) {
            SelectionMetric::BiasMacroF1 => one(TaskId::Bias),
            SelectionMetric::StereotypeMacroF1 => one(TaskId::Stereotype),
            SelectionMetric::SentimentMacroF1 => one(TaskId::Sentiment),
            _ => {
                let tasks = mode.reported_tasks();
                let vals: Option<Vec<f64>> = tasks.iter().map(|t| one(*t)).collect();
                vals.map(|v| v.iter().sum::<f64>() / v.len() as f64)
            }
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DataPaths {
    /// Canonical dataset file.
    pub dataset: Option<String>,
    /// Split manifest; when absent the dataset is split with the default ratios.
    pub split_manifest: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub task: TaskMode,
    pub backend_id: String,
    /// Defaults to the backend family's pooling.
    pub pooling: Option<PoolingStrategy>,
    pub learning_rate: f64,
    /// Allows learning rates outside the standard grid.
    pub custom_learning_rate: bool,
    pub epochs: usize,
    pub batch_size: usize,
    /// Micro-batches per optimizer step; the optimizer still sees `batch_size` examples.
    pub grad_accumulation: usize,
    pub adaptation: AdaptationConfig,
    pub seed: u64,
    pub loss_weights: LossWeights,
    pub selection_metric: SelectionMetric,
    pub data: DataPaths,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            task: TaskMode::stl_bias(),
            backend_id: "stub".into(),
            pooling: None,
            learning_rate: 1e-3,
            custom_learning_rate: false,
            epochs: 5,
            batch_size: 8,
            grad_accumulation: 1,
            adaptation: AdaptationConfig::default(),
            seed: 42,
            loss_weights: LossWeights::default(),
            selection_metric: SelectionMetric::Auto,
            data: DataPaths::default(),
        }
    }
}

pub fn in_learning_rate_grid(lr: f64) -> bool {
    LEARNING_RATE_GRID
        .iter()
        .any(|g| (g - lr).abs() <= 1e-12 * g.abs())
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<(), TrainError> {
        let bad = |m: String| Err(TrainError::Config(m));
        if !(self.learning_rate.is_finite() && self.learning_rate > 0.0) {
            return bad(format!("learning_rate must be positive, got {}", self.learning_rate));
        }
        if !self.custom_learning_rate && !in_learning_rate_grid(self.learning_rate) {
            return bad(format!(
                "learning_rate {} is not in the standard grid; set custom_learning_rate = true to use it",
                self.learning_rate
            ));
        }
        if self.batch_size == 0 {
            return bad("batch_size must be positive".into());
        }
        if self.grad_accumulation == 0 || self.grad_accumulation > self.batch_size {
            return bad(format!(
                "grad_accumulation must be in 1..={}, got {}",
                self.batch_size, self.grad_accumulation
            ));
        }
        if self.backend_id.trim().is_empty() {
            return bad("backend_id is empty".into());
        }
        for (t, w) in &self.loss_weights.0 {
            if !self.task.head_tasks().contains(t) {
                return bad(format!("loss weight for {t}, which is not a head of {}", self.task));
            }
            if !(w.is_finite() && *w >= 0.0) {
                return bad(format!("loss weight for {t} must be finite and non-negative"));
            }
        }
        if let Some(p) = self.pooling {
            if p == PoolingStrategy::Cls && self.backend_id == "stub" {
                return bad("cls pooling needs an encoder-only backend".into());
            }
        }
        let sel = self.selection_metric.resolve(self.task);
        let needed = match sel {
            SelectionMetric::BiasMacroF1 => Some(TaskId::Bias),
            SelectionMetric::StereotypeMacroF1 => Some(TaskId::Stereotype),
            SelectionMetric::SentimentMacroF1 => Some(TaskId::Sentiment),
            _ => None,
        };
        if let Some(t) = needed {
            if !self.task.reported_tasks().contains(&t) {
                return bad(format!("selection metric {sel:?} needs task {t}, not reported by {}", self.task));
            }
        }
        self.adaptation
            .validate()
            .map_err(|e| TrainError::Config(e.to_string()))
    }

    pub fn pooling_for(&self, family: Family) -> PoolingStrategy {
        self.pooling.unwrap_or_else(|| family.default_pooling())
    }

    /// Hex SHA-256 of the canonical JSON form. Insensitive to formatting and
    /// comments in the source document.
    pub fn fingerprint(&self) -> String {
        let canonical = serde_json::to_string(self).expect("config serializes");
        let digest = Sha256::digest(canonical.as_bytes());
        digest.iter().map(|b| format!("{b:02x}")).collect()
    }
}

/// Axes of a hyperparameter sweep; points are enumerated learning rate
/// outermost, then epochs, then batch size.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridAxes {
    pub learning_rates: Vec<f64>,
    pub epochs: Vec<usize>,
    pub batch_sizes: Vec<usize>,
}

impl GridAxes {
    pub fn encoder() -> Self {
        GridAxes {
            learning_rates: LEARNING_RATE_GRID.to_vec(),
            epochs: ENCODER_EPOCH_GRID.to_vec(),
            batch_sizes: BATCH_SIZE_GRID.to_vec(),
        }
    }

    pub fn decoder() -> Self {
        GridAxes {
            epochs: DECODER_EPOCH_GRID.to_vec(),
            ..Self::encoder()
        }
    }

    pub fn for_family(family: Family) -> Self {
        match family {
            Family::DecoderOnly => Self::decoder(),
            _ => Self::encoder(),
        }
    }

    pub fn points(&self) -> Vec<(f64, usize, usize)> {
        let mut out = Vec::new();
        for &lr in &self.learning_rates {
            for &e in &self.epochs {
                for &b in &self.batch_sizes {
                    out.push((lr, e, b));
                }
            }
        }
        out
    }

    /// One config per grid point, seeded `base.seed + index`.
    pub fn configs(&self, base: &ExperimentConfig) -> Result<Vec<ExperimentConfig>, TrainError> {
        if self.learning_rates.is_empty() || self.epochs.is_empty() || self.batch_sizes.is_empty() {
            return Err(TrainError::Config("every grid axis needs at least one value".into()));
        }
        self.points()
            .into_iter()
            .enumerate()
            .map(|(i, (lr, e, b))| {
                let c = ExperimentConfig {
                    learning_rate: lr,
                    epochs: e,
                    batch_size: b,
                    grad_accumulation: base.grad_accumulation.min(b),
                    seed: base.seed.wrapping_add(i as u64),
                    ..base.clone()
                };
                c.validate()?;
                Ok(c)
            })
            .collect()
    }
}
