use super::{macro_f1, EvalError};
use crate::corpus::Category;
use crate::labels::{from_joint_index, to_joint, BinaryLabel, TaskId};
use serde::{Deserialize, Serialize};
use std::collections::{BTreeMap, HashSet};
use std::path::Path;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PredictionRow {
    pub example_id: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub category: Option<Category>,
    /// Absent when the example carries no gold label for that task.
    pub gold: BTreeMap<TaskId, usize>,
    pub pred: BTreeMap<TaskId, usize>,
}

/// Gold and predicted class indices per example for one run on one split.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PredictionDump {
    pub split: String,
    pub config_fingerprint: String,
    pub tasks: Vec<TaskId>,
    pub rows: Vec<PredictionRow>,
}

impl PredictionDump {
    pub fn validate(&self) -> Result<(), EvalError> {
        let mut seen = HashSet::new();
        for row in &self.rows {
            if !seen.insert(row.example_id.as_str()) {
                return Err(EvalError::DuplicateId(row.example_id.clone()));
            }
            if row.pred.keys().copied().collect::<Vec<_>>() != sorted(&self.tasks) {
                return Err(EvalError::Shape(format!(
                    "example {} predicts {:?}, dump declares {:?}",
                    row.example_id,
                    row.pred.keys().collect::<Vec<_>>(),
                    self.tasks
                )));
            }
            for (t, &label) in row.gold.iter().chain(row.pred.iter()) {
                if !self.tasks.contains(t) {
                    return Err(EvalError::MissingTask(*t));
                }
                if label >= t.num_classes() {
                    return Err(EvalError::LabelRange {
                        label,
                        classes: t.num_classes(),
                    });
                }
            }
        }
        Ok(())
    }

    /// `(golds, preds)` over the rows that carry gold for `task`.
    pub fn labels(&self, task: TaskId) -> Result<(Vec<usize>, Vec<usize>), EvalError> {
        if !self.tasks.contains(&task) {
            return Err(EvalError::MissingTask(task));
        }
        Ok(self
            .rows
            .iter()
            .filter_map(|r| Some((*r.gold.get(&task)?, *r.pred.get(&task)?)))
            .unzip())
    }

    pub fn macro_f1(&self, task: TaskId) -> Result<f64, EvalError> {
        let (g, p) = self.labels(task)?;
        macro_f1(&g, &p, task.num_classes())
    }

    pub fn has_categories(&self) -> bool {
        self.rows.iter().any(|r| r.category.is_some())
    }

    pub fn save(&self, path: &Path) -> Result<(), EvalError> {
        let s = serde_json::to_string_pretty(self).map_err(|e| EvalError::Io {
            path: path.display().to_string(),
            message: e.to_string(),
        })?;
        std::fs::write(path, s).map_err(|e| EvalError::Io {
            path: path.display().to_string(),
            message: e.to_string(),
        })
    }

    pub fn load(path: &Path) -> Result<Self, EvalError> {
        let io = |message: String| EvalError::Io {
            path: path.display().to_string(),
            message,
        };
        let s = std::fs::read_to_string(path).map_err(|e| io(e.to_string()))?;
        let dump: PredictionDump = serde_json::from_str(&s).map_err(|e| io(e.to_string()))?;
        dump.validate()?;
        Ok(dump)
    }
}

fn sorted(tasks: &[TaskId]) -> Vec<TaskId> {
    let mut t = tasks.to_vec();
    t.sort();
    t
}

/// Rewrites joint-class gold and predictions as separate bias and stereotype columns.
pub fn decompose_full_mtl(dump: &PredictionDump) -> Result<PredictionDump, EvalError> {
    if !dump.tasks.contains(&TaskId::Joint) {
        return Err(EvalError::MissingTask(TaskId::Joint));
    }
    let split = |id: &str, label: usize| -> Result<(BinaryLabel, BinaryLabel), EvalError> {
        from_joint_index(label as i64).map_err(|_| EvalError::JointDomain {
            example_id: id.to_string(),
            label,
        })
    };
    let decompose_map = |id: &str, m: &BTreeMap<TaskId, usize>| -> Result<BTreeMap<TaskId, usize>, EvalError> {
        let mut out: BTreeMap<TaskId, usize> =
            m.iter().filter(|(t, _)| **t != TaskId::Joint).map(|(t, v)| (*t, *v)).collect();
        if let Some(&j) = m.get(&TaskId::Joint) {
            let (b, s) = split(id, j)?;
            out.insert(TaskId::Bias, b.index());
            out.insert(TaskId::Stereotype, s.index());
        }
        Ok(out)
    };
    let rows = dump
        .rows
        .iter()
        .map(|r| {
            Ok(PredictionRow {
                example_id: r.example_id.clone(),
                category: r.category,
                gold: decompose_map(&r.example_id, &r.gold)?,
                pred: decompose_map(&r.example_id, &r.pred)?,
            })
        })
        .collect::<Result<Vec<_>, EvalError>>()?;
    let mut tasks: Vec<TaskId> = dump.tasks.iter().copied().filter(|t| *t != TaskId::Joint).collect();
    for t in [TaskId::Bias, TaskId::Stereotype] {
        if !tasks.contains(&t) {
            tasks.push(t);
        }
    }
    Ok(PredictionDump {
        split: dump.split.clone(),
        config_fingerprint: dump.config_fingerprint.clone(),
        tasks,
        rows,
    })
}

/// Inverse of [`decompose_full_mtl`].
pub fn recompose_full_mtl(dump: &PredictionDump) -> Result<PredictionDump, EvalError> {
    for t in [TaskId::Bias, TaskId::Stereotype] {
        if !dump.tasks.contains(&t) {
            return Err(EvalError::MissingTask(t));
        }
    }
    let join = |m: &BTreeMap<TaskId, usize>| {
        let mut out: BTreeMap<TaskId, usize> = m
            .iter()
            .filter(|(t, _)| !matches!(t, TaskId::Bias | TaskId::Stereotype))
            .map(|(t, v)| (*t, *v))
            .collect();
        if let (Some(&b), Some(&s)) = (m.get(&TaskId::Bias), m.get(&TaskId::Stereotype)) {
            let j = to_joint(
                BinaryLabel::from_index(b).unwrap_or(BinaryLabel::Positive),
                BinaryLabel::from_index(s).unwrap_or(BinaryLabel::Positive),
            );
            out.insert(TaskId::Joint, j.index());
        }
        out
    };
    let rows = dump
        .rows
        .iter()
        .map(|r| PredictionRow {
            example_id: r.example_id.clone(),
            category: r.category,
            gold: join(&r.gold),
            pred: join(&r.pred),
        })
        .collect();
    let mut tasks: Vec<TaskId> = dump
        .tasks
        .iter()
        .copied()
        .filter(|t| !matches!(t, TaskId::Bias | TaskId::Stereotype))
        .collect();
    tasks.insert(0, TaskId::Joint);
    Ok(PredictionDump {
        split: dump.split.clone(),
        config_fingerprint: dump.config_fingerprint.clone(),
        tasks,
        rows,
    })
}

/// 1.0 where prediction equals gold, ordered by example id. Rows without gold
/// for `task` are skipped.
pub fn correctness_vector(
    dump: &PredictionDump,
    task: TaskId,
) -> Result<Vec<(String, f64)>, EvalError> {
    if !dump.tasks.contains(&task) {
        return Err(EvalError::MissingTask(task));
    }
    let mut v: Vec<(String, f64)> = dump
        .rows
        .iter()
        .filter_map(|r| {
            let g = r.gold.get(&task)?;
            let p = r.pred.get(&task)?;
            Some((r.example_id.clone(), if g == p { 1.0 } else { 0.0 }))
        })
        .collect();
    v.sort_by(|a, b| a.0.cmp(&b.0));
    Ok(v)
}

/// Pairs two correctness vectors; ids must match exactly.
pub fn align_correctness(
    a: &[(String, f64)],
    b: &[(String, f64)],
) -> Result<(Vec<f64>, Vec<f64>), EvalError> {
    if a.len() != b.len() {
        return Err(EvalError::Alignment(format!(
            "{} vs {} scored examples",
            a.len(),
            b.len()
        )));
    }
    let mut xs = Vec::with_capacity(a.len());
    let mut ys = Vec::with_capacity(a.len());
    for ((ia, va), (ib, vb)) in a.iter().zip(b) {
        if ia != ib {
            return Err(EvalError::Alignment(format!("example ids differ: {ia} vs {ib}")));
        }
        xs.push(*va);
        ys.push(*vb);
    }
    Ok((xs, ys))
}
