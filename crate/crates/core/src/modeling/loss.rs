use super::heads::linear_backward;
use super::{forward, HeadGrads, HeadSet, ModelError};
use crate::labels::{from_joint, JointLabel, ModeKind, TaskId, TaskMode};
use ndarray::{Array2, ArrayView1};
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;

/// Gold class index per head and example; `None` withholds that example from
/// the head's loss.
pub type Gold = BTreeMap<TaskId, Vec<Option<usize>>>;

/// Per-head loss multipliers for shared multi-task training. Missing heads
/// weigh 1.0, so the default total is the plain sum of per-task losses.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct LossWeights(pub BTreeMap<TaskId, f64>);

impl LossWeights {
    pub fn get(&self, task: TaskId) -> f64 {
        self.0.get(&task).copied().unwrap_or(1.0)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LossBreakdown {
    pub total: f64,
    pub per_task: BTreeMap<TaskId, f64>,
}

fn log_sum_exp(row: ArrayView1<f64>) -> f64 {
    let m = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if !m.is_finite() {
        return m;
    }
    m + row.iter().map(|v| (v - m).exp()).sum::<f64>().ln()
}

fn check_inputs<'a>(
    mode: TaskMode,
    logits: &'a BTreeMap<TaskId, Array2<f64>>,
    gold: &'a Gold,
) -> Result<Vec<(TaskId, &'a Array2<f64>, &'a [Option<usize>])>, ModelError> {
    mode.head_tasks()
        .into_iter()
        .map(|t| {
            let l = logits.get(&t).ok_or(ModelError::MissingLogits(t))?;
            let g = gold.get(&t).ok_or(ModelError::MissingGold(t))?;
            if g.len() != l.nrows() {
                return Err(ModelError::Shape(format!(
                    "head {t}: {} gold labels for {} rows",
                    g.len(),
                    l.nrows()
                )));
            }
            for y in g.iter().flatten() {
                if *y >= l.ncols() {
                    return Err(ModelError::LabelRange {
                        task: t,
                        label: *y,
                        classes: l.ncols(),
                    });
                }
            }
            Ok((t, l, g.as_slice()))
        })
        .collect()
}

fn total_of(mode: TaskMode, per_task: &BTreeMap<TaskId, f64>, weights: &LossWeights) -> f64 {
    match mode.kind() {
        ModeKind::SharedMtl => per_task.iter().map(|(t, l)| weights.get(*t) * l).sum(),
        _ => per_task.values().sum(),
    }
}

/// Mean cross-entropy per head over the examples that carry gold for it.
/// Shared multi-task training sums the (weighted) per-head means; every other
/// mode has a single head whose mean is the total.
pub fn compute_loss(
    mode: TaskMode,
    logits: &BTreeMap<TaskId, Array2<f64>>,
    gold: &Gold,
    weights: &LossWeights,
) -> Result<LossBreakdown, ModelError> {
    let mut per_task = BTreeMap::new();
    for (t, l, g) in check_inputs(mode, logits, gold)? {
        let mut sum = 0.0;
        let mut count = 0usize;
        for (row, y) in l.outer_iter().zip(g) {
            if let Some(y) = y {
                sum += log_sum_exp(row) - row[*y];
                count += 1;
            }
        }
        per_task.insert(t, if count == 0 { 0.0 } else { sum / count as f64 });
    }
    let total = total_of(mode, &per_task, weights);
    Ok(LossBreakdown { total, per_task })
}

/// Loss plus analytic gradients with respect to head parameters and to the
/// pooled representation.
pub fn loss_and_gradients(
    heads: &HeadSet,
    pooled: &Array2<f64>,
    gold: &Gold,
    weights: &LossWeights,
) -> Result<(LossBreakdown, HeadGrads, Array2<f64>), ModelError> {
    let mode = heads.mode();
    let logits = forward(heads, pooled)?;
    let loss = compute_loss(mode, &logits, gold, weights)?;
    let mut grads = HeadGrads::new();
    let mut dpooled = Array2::<f64>::zeros(pooled.dim());
    for (t, l, g) in check_inputs(mode, &logits, gold)? {
        let count = g.iter().filter(|y| y.is_some()).count();
        let scale = match mode.kind() {
            ModeKind::SharedMtl => weights.get(t),
            _ => 1.0,
        } / count.max(1) as f64;
        let mut dlogits = Array2::<f64>::zeros(l.dim());
        for (i, y) in g.iter().enumerate() {
            if let Some(y) = y {
                let row = l.row(i);
                let lse = log_sum_exp(row);
                let mut d = dlogits.row_mut(i);
                for (c, v) in row.iter().enumerate() {
                    d[c] = (v - lse).exp() * scale;
                }
                d[*y] -= scale;
            }
        }
        let (grad, dp) = linear_backward(&heads.heads()[&t], pooled, &dlogits);
        dpooled += &dp;
        grads.insert(t, grad);
    }
    Ok((loss, grads, dpooled))
}

fn argmax(row: ArrayView1<f64>) -> usize {
    let mut best = 0;
    for (i, v) in row.iter().enumerate() {
        if *v > row[best] {
            best = i;
        }
    }
    best
}

/// Argmax per head, lowest index on exact ties. Joint predictions are also
/// decomposed into bias and stereotype columns.
pub fn predict(
    mode: TaskMode,
    logits: &BTreeMap<TaskId, Array2<f64>>,
) -> Result<BTreeMap<TaskId, Vec<usize>>, ModelError> {
    let mut out = BTreeMap::new();
    for t in mode.head_tasks() {
        let l = logits.get(&t).ok_or(ModelError::MissingLogits(t))?;
        if l.iter().any(|v| !v.is_finite()) {
            return Err(ModelError::NonFinite(format!("{t} logits")));
        }
        out.insert(t, l.outer_iter().map(argmax).collect::<Vec<_>>());
    }
    if let Some(joint) = out.get(&TaskId::Joint).cloned() {
        let (mut b, mut s) = (Vec::new(), Vec::new());
        for j in joint {
            let (bias, stereo) = from_joint(JointLabel::new(j as i64).expect("argmax < 4"));
            b.push(bias.index());
            s.push(stereo.index());
        }
        out.insert(TaskId::Bias, b);
        out.insert(TaskId::Stereotype, s);
    }
    Ok(out)
}
