//! Backend abstraction, pooling, classification heads and losses.

mod backend;
mod checkpoint;
mod features;
mod heads;
mod loss;
mod pooling;
mod stub;

pub use backend::{open_backend, Backend, Encoded, ParameterInfo};
pub use checkpoint::{Checkpoint, CHECKPOINT_FORMAT};
pub use features::FeatureFileBackend;
pub use heads::{forward, HeadGrads, HeadSet, Linear};
pub use loss::{compute_loss, loss_and_gradients, predict, Gold, LossBreakdown, LossWeights};
pub use pooling::{pool, pool_backward};
pub use stub::{StubBackend, StubConfig};

use ndarray::{Array2, Array3};
use serde::{Deserialize, Serialize};
use std::fmt;
use std::str::FromStr;
use thiserror::Error;

use crate::labels::TaskId;

#[derive(Debug, Error)]
pub enum ModelError {
    #[error("shape error: {0}")]
    Shape(String),
    #[error("row {0} has no unmasked positions")]
    DegenerateMask(usize),
    #[error("pooling {strategy} is not valid for {family} backends")]
    InvalidPooling {
        strategy: PoolingStrategy,
        family: Family,
    },
    #[error("no gold labels supplied for head {0}")]
    MissingGold(TaskId),
    #[error("no logits for head {0}")]
    MissingLogits(TaskId),
    #[error("label {label} out of range for head {task} ({classes} classes)")]
    LabelRange {
        task: TaskId,
        label: usize,
        classes: usize,
    },
    #[error("non-finite value in {0}")]
    NonFinite(String),
    #[error("invalid adaptation config: {0}")]
    Adaptation(String),
    #[error("backend error: {0}")]
    Backend(String),
    #[error("checkpoint error: {0}")]
    Checkpoint(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Family {
    EncoderOnly,
    DecoderOnly,
    Stub,
}

impl Family {
    /// `cls` for encoders, masked mean otherwise.
    pub fn default_pooling(self) -> PoolingStrategy {
        match self {
            Family::EncoderOnly => PoolingStrategy::Cls,
            Family::DecoderOnly | Family::Stub => PoolingStrategy::Mean,
        }
    }
}

impl fmt::Display for Family {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Family::EncoderOnly => "encoder_only",
            Family::DecoderOnly => "decoder_only",
            Family::Stub => "stub",
        })
    }
}

impl FromStr for Family {
    type Err = ModelError;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "encoder_only" => Ok(Family::EncoderOnly),
            "decoder_only" => Ok(Family::DecoderOnly),
            "stub" => Ok(Family::Stub),
            other => Err(ModelError::Backend(format!("unknown backend family {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BackendHandle {
    pub backend_id: String,
    pub hidden_size: usize,
    pub family: Family,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PoolingStrategy {
    Cls,
    Mean,
    Max,
    LastToken,
}

impl PoolingStrategy {
    pub fn valid_for(self, family: Family) -> bool {
        self != PoolingStrategy::Cls || family == Family::EncoderOnly
    }
}

impl fmt::Display for PoolingStrategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            PoolingStrategy::Cls => "cls",
            PoolingStrategy::Mean => "mean",
            PoolingStrategy::Max => "max",
            PoolingStrategy::LastToken => "last_token",
        })
    }
}

impl FromStr for PoolingStrategy {
    type Err = ModelError;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "cls" => Ok(PoolingStrategy::Cls),
            "mean" => Ok(PoolingStrategy::Mean),
            "max" => Ok(PoolingStrategy::Max),
            "last_token" => Ok(PoolingStrategy::LastToken),
            other => Err(ModelError::Shape(format!("unknown pooling {other:?}"))),
        }
    }
}

/// Last-layer token states with their attention mask.
#[derive(Debug, Clone, PartialEq)]
pub struct HiddenBatch {
    states: Array3<f64>,
    mask: Array2<bool>,
}

impl HiddenBatch {
    pub fn new(states: Array3<f64>, mask: Array2<bool>) -> Result<Self, ModelError> {
        let (b, t, _) = states.dim();
        if mask.dim() != (b, t) {
            return Err(ModelError::Shape(format!(
                "mask {:?} does not match states [{b}, {t}, _]",
                mask.dim()
            )));
        }
        if states.iter().any(|v| !v.is_finite()) {
            return Err(ModelError::NonFinite("hidden states".into()));
        }
        for (i, row) in mask.outer_iter().enumerate() {
            if !row.iter().any(|&m| m) {
                return Err(ModelError::DegenerateMask(i));
            }
        }
        Ok(HiddenBatch { states, mask })
    }

    /// Skips validation; pooling still rejects all-masked rows.
    pub fn new_unchecked(states: Array3<f64>, mask: Array2<bool>) -> Self {
        HiddenBatch { states, mask }
    }

    pub fn states(&self) -> &Array3<f64> {
        &self.states
    }

    pub fn mask(&self) -> &Array2<bool> {
        &self.mask
    }

    pub fn batch_size(&self) -> usize {
        self.states.dim().0
    }

    pub fn hidden_size(&self) -> usize {
        self.states.dim().2
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AdaptationMethod {
    Full,
    LowRankQuantized,
}

/// Declarative adaptation settings handed to the backend adapter. Defaults are
/// rank 16, alpha 8, dropout 0.01 with 4-bit base weights.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AdaptationConfig {
    pub method: AdaptationMethod,
    pub quant_bits: u8,
    pub rank: usize,
    pub alpha: f64,
    pub dropout: f64,
}

impl Default for AdaptationConfig {
    fn default() -> Self {
        AdaptationConfig {
            method: AdaptationMethod::Full,
            quant_bits: 4,
            rank: 16,
            alpha: 8.0,
            dropout: 0.01,
        }
    }
}

impl AdaptationConfig {
    pub fn validate(&self) -> Result<(), ModelError> {
        if self.rank == 0 {
            return Err(ModelError::Adaptation("rank must be positive".into()));
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return Err(ModelError::Adaptation(format!(
                "dropout {} outside [0, 1)",
                self.dropout
            )));
        }
        if !matches!(self.quant_bits, 4 | 8) {
            return Err(ModelError::Adaptation(format!(
                "quant_bits must be 4 or 8, got {}",
                self.quant_bits
            )));
        }
        if !(self.alpha.is_finite() && self.alpha > 0.0) {
            return Err(ModelError::Adaptation(format!("alpha {} must be positive", self.alpha)));
        }
        Ok(())
    }
}
