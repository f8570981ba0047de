use super::ModelError;
use crate::labels::{TaskId, TaskMode};
use crate::util::fnv1a64;
use ndarray::{Array1, Array2, Axis};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use std::collections::BTreeMap;

/// Affine map `hidden -> classes`; `weight` is `[classes, hidden]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Linear {
    pub weight: Array2<f64>,
    pub bias: Array1<f64>,
}

impl Linear {
    pub fn zeros(hidden: usize, classes: usize) -> Self {
        Linear {
            weight: Array2::zeros((classes, hidden)),
            bias: Array1::zeros(classes),
        }
    }

    /// Uniform weights in `±0.1/sqrt(hidden)`, zero bias.
    pub fn seeded(hidden: usize, classes: usize, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let a = 0.1 / (hidden as f64).sqrt();
        Linear {
            weight: Array2::from_shape_simple_fn((classes, hidden), || rng.random_range(-a..a)),
            bias: Array1::zeros(classes),
        }
    }

    pub fn apply(&self, x: &Array2<f64>) -> Array2<f64> {
        x.dot(&self.weight.t()) + &self.bias
    }

    pub fn classes(&self) -> usize {
        self.weight.nrows()
    }

    pub fn is_finite(&self) -> bool {
        self.weight.iter().chain(self.bias.iter()).all(|v| v.is_finite())
    }
}

/// Per-head gradients, same shapes as the heads.
pub type HeadGrads = BTreeMap<TaskId, Linear>;

/// The classification heads of one task mode, all reading the same pooled input.
#[derive(Debug, Clone, PartialEq)]
pub struct HeadSet {
    mode: TaskMode,
    hidden: usize,
    heads: BTreeMap<TaskId, Linear>,
}

impl HeadSet {
    /// Each head's initial weights depend only on `(seed, task)`, so the bias
    /// head starts identical in single-task and shared multi-task runs.
    pub fn init(mode: TaskMode, hidden: usize, seed: u64) -> Self {
        let heads = mode
            .head_tasks()
            .into_iter()
            .map(|t| {
                let salt = fnv1a64(t.as_str().as_bytes());
                (t, Linear::seeded(hidden, t.num_classes(), seed ^ salt))
            })
            .collect();
        HeadSet { mode, hidden, heads }
    }

    pub fn zeros(mode: TaskMode, hidden: usize) -> Self {
        let heads = mode
            .head_tasks()
            .into_iter()
            .map(|t| (t, Linear::zeros(hidden, t.num_classes())))
            .collect();
        HeadSet { mode, hidden, heads }
    }

    pub fn from_parts(
        mode: TaskMode,
        heads: BTreeMap<TaskId, Linear>,
    ) -> Result<Self, ModelError> {
        let expected = mode.head_tasks();
        if heads.keys().copied().collect::<Vec<_>>() != {
            let mut e = expected.clone();
            e.sort();
            e
        } {
            return Err(ModelError::Shape(format!(
                "mode {mode} needs heads {expected:?}, got {:?}",
                heads.keys().collect::<Vec<_>>()
            )));
        }
        let hidden = heads.values().next().map(|l| l.weight.ncols()).unwrap_or(0);
        for (t, l) in &heads {
            if l.weight.dim() != (t.num_classes(), hidden) || l.bias.len() != t.num_classes() {
                return Err(ModelError::Shape(format!(
                    "head {t} has shape {:?}/{}",
                    l.weight.dim(),
                    l.bias.len()
                )));
            }
        }
        Ok(HeadSet { mode, hidden, heads })
    }

    pub fn mode(&self) -> TaskMode {
        self.mode
    }

    pub fn hidden_size(&self) -> usize {
        self.hidden
    }

    pub fn heads(&self) -> &BTreeMap<TaskId, Linear> {
        &self.heads
    }

    pub fn heads_mut(&mut self) -> &mut BTreeMap<TaskId, Linear> {
        &mut self.heads
    }

    pub fn head(&self, task: TaskId) -> Option<&Linear> {
        self.heads.get(&task)
    }

    pub fn is_finite(&self) -> bool {
        self.heads.values().all(Linear::is_finite)
    }

    pub fn num_parameters(&self) -> usize {
        self.heads
            .values()
            .map(|l| l.weight.len() + l.bias.len())
            .sum()
    }
}

/// Logits of every head from one shared pooled batch.
pub fn forward(
    heads: &HeadSet,
    pooled: &Array2<f64>,
) -> Result<BTreeMap<TaskId, Array2<f64>>, ModelError> {
    if pooled.ncols() != heads.hidden_size() {
        return Err(ModelError::Shape(format!(
            "pooled width {} does not match hidden size {}",
            pooled.ncols(),
            heads.hidden_size()
        )));
    }
    Ok(heads
        .heads()
        .iter()
        .map(|(t, l)| (*t, l.apply(pooled)))
        .collect())
}

pub(crate) fn linear_backward(
    head: &Linear,
    pooled: &Array2<f64>,
    dlogits: &Array2<f64>,
) -> (Linear, Array2<f64>) {
    let grad = Linear {
        weight: dlogits.t().dot(pooled),
        bias: dlogits.sum_axis(Axis(0)),
    };
    let dpooled = dlogits.dot(&head.weight);
    (grad, dpooled)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::labels::AuxiliaryTask;

    #[test]
    fn head_counts_per_mode() {
        let shared = HeadSet::init(TaskMode::shared_mtl(AuxiliaryTask::Stereotype), 8, 1);
        assert_eq!(shared.heads().len(), 2);
        assert!(shared.heads().values().all(|l| l.classes() == 2));
        let full = HeadSet::init(TaskMode::full_mtl(), 8, 1);
        assert_eq!(full.heads().len(), 1);
        assert_eq!(full.head(TaskId::Joint).unwrap().classes(), 4);
        let stl = HeadSet::init(TaskMode::stl_bias(), 8, 1);
        assert_eq!(stl.heads().len(), 1);
    }

    #[test]
    fn forward_shapes_and_zero_weights() {
        let pooled = Array2::from_shape_fn((4, 8), |(i, j)| (i + j) as f64);
        let shared = HeadSet::init(TaskMode::shared_mtl(AuxiliaryTask::Stereotype), 8, 3);
        let out = forward(&shared, &pooled).unwrap();
        assert_eq!(out[&TaskId::Bias].dim(), (4, 2));
        assert_eq!(out[&TaskId::Stereotype].dim(), (4, 2));
        let full = forward(&HeadSet::init(TaskMode::full_mtl(), 8, 3), &pooled).unwrap();
        assert_eq!(full[&TaskId::Joint].dim(), (4, 4));
        let zero = forward(&HeadSet::zeros(TaskMode::full_mtl(), 8), &pooled).unwrap();
        assert!(zero[&TaskId::Joint].iter().all(|&v| v == 0.0));
        assert!(matches!(
            forward(&shared, &Array2::zeros((4, 7))),
            Err(ModelError::Shape(_))
        ));
    }

    #[test]
    fn shared_initialization_contract() {
        let stl = HeadSet::init(TaskMode::stl_bias(), 16, 42);
        let mtl = HeadSet::init(TaskMode::shared_mtl(AuxiliaryTask::Stereotype), 16, 42);
        assert_eq!(stl.head(TaskId::Bias), mtl.head(TaskId::Bias));
        assert_ne!(mtl.head(TaskId::Bias).unwrap().weight, mtl.head(TaskId::Stereotype).unwrap().weight);
    }
}
