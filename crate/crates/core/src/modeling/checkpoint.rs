use super::{AdaptationConfig, HeadSet, Linear, ModelError, PoolingStrategy};
use crate::labels::{TaskId, TaskMode, JOINT_ENUMERATION_VERSION};
use ndarray::{Array1, Array2};
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::path::Path;

pub const CHECKPOINT_FORMAT: &str = "stereomtl-heads";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct StoredLinear {
    weight: Vec<Vec<f64>>,
    bias: Vec<f64>,
}

/// Self-describing head checkpoint (JSON).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub format: String,
    pub format_version: u32,
    pub label_enumeration_version: u32,
    pub mode: TaskMode,
    pub backend_id: String,
    pub pooling: PoolingStrategy,
    pub adaptation: AdaptationConfig,
    /// 0 means the initial weights.
    pub epoch: usize,
    heads: BTreeMap<TaskId, StoredLinear>,
}

impl Checkpoint {
    pub fn new(
        heads: &HeadSet,
        backend_id: &str,
        pooling: PoolingStrategy,
        adaptation: &AdaptationConfig,
        epoch: usize,
    ) -> Self {
        let stored = heads
            .heads()
            .iter()
            .map(|(t, l)| {
                (
                    *t,
                    StoredLinear {
                        weight: l.weight.outer_iter().map(|r| r.to_vec()).collect(),
                        bias: l.bias.to_vec(),
                    },
                )
            })
            .collect();
        Checkpoint {
            format: CHECKPOINT_FORMAT.into(),
            format_version: 1,
            label_enumeration_version: JOINT_ENUMERATION_VERSION,
            mode: heads.mode(),
            backend_id: backend_id.to_string(),
            pooling,
            adaptation: adaptation.clone(),
            epoch,
            heads: stored,
        }
    }

    pub fn heads(&self) -> Result<HeadSet, ModelError> {
        if self.format != CHECKPOINT_FORMAT {
            return Err(ModelError::Checkpoint(format!("unknown format {:?}", self.format)));
        }
        if self.label_enumeration_version != JOINT_ENUMERATION_VERSION {
            return Err(ModelError::Checkpoint(format!(
                "label enumeration version {} is not supported",
                self.label_enumeration_version
            )));
        }
        let heads = self
            .heads
            .iter()
            .map(|(t, s)| {
                let rows = s.weight.len();
                let cols = s.weight.first().map(Vec::len).unwrap_or(0);
                let flat: Vec<f64> = s.weight.iter().flatten().copied().collect();
                let weight = Array2::from_shape_vec((rows, cols), flat)
                    .map_err(|e| ModelError::Checkpoint(format!("head {t}: {e}")))?;
                Ok((
                    *t,
                    Linear {
                        weight,
                        bias: Array1::from(s.bias.clone()),
                    },
                ))
            })
            .collect::<Result<BTreeMap<_, _>, ModelError>>()?;
        HeadSet::from_parts(self.mode, heads)
    }

    pub fn save(&self, path: &Path) -> Result<(), ModelError> {
        let s = serde_json::to_string_pretty(self).map_err(|e| ModelError::Checkpoint(e.to_string()))?;
        std::fs::write(path, s).map_err(|e| ModelError::Checkpoint(format!("{}: {e}", path.display())))
    }

    pub fn load(path: &Path) -> Result<Self, ModelError> {
        let s = std::fs::read_to_string(path)
            .map_err(|e| ModelError::Checkpoint(format!("{}: {e}", path.display())))?;
        serde_json::from_str(&s).map_err(|e| ModelError::Checkpoint(e.to_string()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::labels::AuxiliaryTask;

    #[test]
    fn roundtrip_through_json() {
        let heads = HeadSet::init(TaskMode::shared_mtl(AuxiliaryTask::Stereotype), 8, 5);
        let ck = Checkpoint::new(&heads, "stub", PoolingStrategy::Mean, &AdaptationConfig::default(), 3);
        let s = serde_json::to_string(&ck).unwrap();
        let back: Checkpoint = serde_json::from_str(&s).unwrap();
        assert_eq!(back.heads().unwrap(), heads);
        assert_eq!(back.epoch, 3);
    }

    #[test]
    fn rejects_foreign_enumeration() {
        let heads = HeadSet::init(TaskMode::full_mtl(), 4, 5);
        let mut ck = Checkpoint::new(&heads, "stub", PoolingStrategy::Mean, &AdaptationConfig::default(), 0);
        ck.label_enumeration_version = 99;
        assert!(ck.heads().is_err());
    }
}
