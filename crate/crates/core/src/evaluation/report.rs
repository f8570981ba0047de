use super::{
    align_correctness, correctness_vector, decompose_full_mtl, paired_t_test, ClassMetrics,
    ConfusionMatrix, EvalError, PredictionDump, SignificanceResult,
};
use crate::labels::TaskId;
use serde::{Deserialize, Serialize};
use std::collections::{BTreeMap, BTreeSet};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TaskMetrics {
    pub macro_f1: f64,
    pub accuracy: f64,
    pub n: usize,
    pub per_class: Vec<ClassMetrics>,
    pub confusion: ConfusionMatrix,
}

impl TaskMetrics {
    pub fn from_labels(golds: &[usize], preds: &[usize], classes: usize) -> Result<Self, EvalError> {
        let confusion = ConfusionMatrix::from_labels(golds, preds, classes)?;
        Ok(TaskMetrics {
            macro_f1: confusion.macro_f1(),
            accuracy: confusion.accuracy(),
            n: golds.len(),
            per_class: confusion.class_metrics(),
            confusion,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunMetrics {
    pub name: String,
    pub config_fingerprint: String,
    pub tasks: BTreeMap<TaskId, TaskMetrics>,
    /// category -> task -> Macro-F1 on that category's rows.
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub categories: BTreeMap<String, BTreeMap<TaskId, f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SignificanceEntry {
    pub run: String,
    pub baseline: String,
    pub task: TaskId,
    pub result: SignificanceResult,
    /// Significant and in the run's favour.
    pub improved: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub split: String,
    pub runs: Vec<RunMetrics>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub category_note: Option<String>,
    pub significance: Vec<SignificanceEntry>,
}

impl EvalReport {
    pub fn run(&self, name: &str) -> Option<&RunMetrics> {
        self.runs.iter().find(|r| r.name == name)
    }

    pub fn significance_for(&self, run: &str, task: TaskId) -> Vec<&SignificanceEntry> {
        self.significance
            .iter()
            .filter(|e| e.run == run && e.task == task)
            .collect()
    }
}

const TASK_ORDER: [TaskId; 3] = [TaskId::Bias, TaskId::Stereotype, TaskId::Sentiment];

fn scored_tasks(dump: &PredictionDump) -> Vec<TaskId> {
    TASK_ORDER
        .iter()
        .copied()
        .filter(|t| dump.tasks.contains(t))
        .filter(|t| dump.rows.iter().any(|r| r.gold.contains_key(t)))
        .collect()
}

fn run_metrics(name: &str, dump: &PredictionDump) -> Result<RunMetrics, EvalError> {
    let mut tasks = BTreeMap::new();
    for t in scored_tasks(dump) {
        let (g, p) = dump.labels(t)?;
        tasks.insert(t, TaskMetrics::from_labels(&g, &p, t.num_classes())?);
    }
    let mut categories: BTreeMap<String, BTreeMap<TaskId, f64>> = BTreeMap::new();
    if dump.has_categories() {
        let names: BTreeSet<String> = dump
            .rows
            .iter()
            .filter_map(|r| r.category.map(|c| c.to_string()))
            .collect();
        for cat in names {
            for t in scored_tasks(dump) {
                let (g, p): (Vec<usize>, Vec<usize>) = dump
                    .rows
                    .iter()
                    .filter(|r| r.category.map(|c| c.to_string()).as_deref() == Some(cat.as_str()))
                    .filter_map(|r| Some((*r.gold.get(&t)?, *r.pred.get(&t)?)))
                    .unzip();
                if !g.is_empty() {
                    let f1 = ConfusionMatrix::from_labels(&g, &p, t.num_classes())?.macro_f1();
                    categories.entry(cat.clone()).or_default().insert(t, f1);
                }
            }
        }
    }
    Ok(RunMetrics {
        name: name.to_string(),
        config_fingerprint: dump.config_fingerprint.clone(),
        tasks,
        categories,
    })
}

/// Scores every run and tests each non-baseline run against each named baseline.
///
/// Joint-class dumps are split into bias and stereotype columns first. All
/// dumps must come from the same split.
pub fn build_report(
    runs: &[(String, PredictionDump)],
    baselines: &[String],
) -> Result<EvalReport, EvalError> {
    let Some((_, first)) = runs.first() else {
        return Err(EvalError::Shape("no runs to report".into()));
    };
    let mut names = BTreeSet::new();
    let mut dumps = Vec::with_capacity(runs.len());
    for (name, dump) in runs {
        if !names.insert(name.as_str()) {
            return Err(EvalError::DuplicateId(name.clone()));
        }
        if dump.split != first.split {
            return Err(EvalError::Alignment(format!(
                "run {name} is on split {:?}, expected {:?}",
                dump.split, first.split
            )));
        }
        dump.validate()?;
        let dump = if dump.tasks.contains(&TaskId::Joint) {
            decompose_full_mtl(dump)?
        } else {
            dump.clone()
        };
        dumps.push((name.clone(), dump));
    }
    for b in baselines {
        if !names.contains(b.as_str()) {
            return Err(EvalError::Alignment(format!("baseline {b} is not among the runs")));
        }
    }

    let metrics = dumps
        .iter()
        .map(|(n, d)| run_metrics(n, d))
        .collect::<Result<Vec<_>, _>>()?;

    let mut significance = Vec::new();
    for b in baselines {
        let base = &dumps.iter().find(|(n, _)| n == b).unwrap().1;
        for (name, dump) in &dumps {
            if name == b {
                continue;
            }
            for t in scored_tasks(dump) {
                if !scored_tasks(base).contains(&t) {
                    continue;
                }
                let (xa, xb) = align_correctness(
                    &correctness_vector(base, t)?,
                    &correctness_vector(dump, t)?,
                )?;
                let result = paired_t_test(&xa, &xb)?;
                significance.push(SignificanceEntry {
                    run: name.clone(),
                    baseline: b.clone(),
                    task: t,
                    improved: result.significant && result.mean_difference > 0.0,
                    result,
                });
            }
        }
    }

    let category_note = if dumps.iter().any(|(_, d)| d.has_categories()) {
        None
    } else {
        Some("no category labels on any row; per-category breakdown omitted".to_string())
    };
    Ok(EvalReport {
        split: first.split.clone(),
        runs: metrics,
        category_note,
        significance,
    })
}

fn task_title(t: TaskId) -> String {
    let s = t.as_str();
    let mut c = s.chars();
    match c.next() {
        Some(f) => f.to_uppercase().chain(c).collect(),
        None => String::new(),
    }
}

/// Aligned text table: one row per run, one Macro-F1 column per task.
/// `↑` marks a significant (p < 0.05) gain over a baseline. The p-value
/// columns appear only when the report carries significance results.
pub fn render_table(report: &EvalReport) -> String {
    let tasks: Vec<TaskId> = TASK_ORDER
        .iter()
        .copied()
        .filter(|t| report.runs.iter().any(|r| r.tasks.contains_key(t)))
        .collect();
    let with_p = !report.significance.is_empty();

    let mut header = vec!["Model".to_string()];
    for t in &tasks {
        header.push(format!("{} (Macro-F1)", task_title(*t)));
    }
    if with_p {
        for t in &tasks {
            header.push(format!("p ({})", t.as_str()));
        }
    }
    let mut rows = vec![header];
    for run in &report.runs {
        let mut row = vec![run.name.clone()];
        for t in &tasks {
            let entries = report.significance_for(&run.name, *t);
            row.push(match run.tasks.get(t) {
                Some(m) => {
                    let mark = if entries.iter().any(|e| e.improved) { " ↑" } else { "" };
                    format!("{:.4}{mark}", m.macro_f1)
                }
                None => "-".to_string(),
            });
        }
        if with_p {
            for t in &tasks {
                let entries = report.significance_for(&run.name, *t);
                row.push(match entries.first() {
                    Some(e) => format!("{:.4}", e.result.p_value),
                    None => "-".to_string(),
                });
            }
        }
        rows.push(row);
    }

    let cols = rows[0].len();
    let widths: Vec<usize> = (0..cols)
        .map(|c| rows.iter().map(|r| r[c].chars().count()).max().unwrap_or(0))
        .collect();
    let mut out = String::new();
    for (i, row) in rows.iter().enumerate() {
        let line: Vec<String> = row
            .iter()
            .zip(&widths)
            .enumerate()
            .map(|(c, (cell, w))| {
                let pad = w - cell.chars().count();
                if c == 0 {
                    format!("{cell}{}", " ".repeat(pad))
                } else {
                    format!("{}{cell}", " ".repeat(pad))
                }
            })
            .collect();
        out.push_str(line.join("  ").trim_end());
        out.push('\n');
        if i == 0 {
            let total = widths.iter().sum::<usize>() + 2 * (cols - 1);
            out.push_str(&"-".repeat(total));
            out.push('\n');
        }
    }
    if let Some(base) = report.significance.first().map(|e| e.baseline.as_str()) {
        out.push_str(&format!("p-values: paired t-test vs {base}, split {}\n", report.split));
    }
    if let Some(note) = &report.category_note {
        out.push_str(note);
        out.push('\n');
    }
    out
}
