use super::figures::bar_chart;
use super::workspace::{write_json, RunKind, Workspace};
use super::CliError;
use crate::evaluation::{build_report, render_table, EvalReport, PredictionDump};
use crate::labels::TaskId;
use std::collections::BTreeMap;
use std::path::PathBuf;

/// Loads `predictions/<split>.json` of each run, named by the run label
/// unless two runs share a label.
fn load_dumps(
    ws: &Workspace,
    ids: &[String],
    split: &str,
) -> Result<(Vec<(String, PredictionDump)>, BTreeMap<String, String>), CliError> {
    let mut loaded = Vec::new();
    for id in ids {
        let run = ws.open_run(id)?;
        if !run.is_complete() {
            return Err(CliError::data(format!("run {id} is not complete")));
        }
        let label = run.meta().map(|m| m.label).unwrap_or_else(|_| id.clone());
        let path = run.file(&format!("predictions/{split}.json"));
        if !path.exists() {
            return Err(CliError::data(format!("run {id} has no {split} predictions")));
        }
        loaded.push((id.clone(), label, PredictionDump::load(&path)?));
    }
    let mut counts: BTreeMap<&str, usize> = BTreeMap::new();
    for (_, label, _) in &loaded {
        *counts.entry(label.as_str()).or_default() += 1;
    }
    let names: Vec<String> = loaded
        .iter()
        .map(|(id, label, _)| if counts[label.as_str()] > 1 { id.clone() } else { label.clone() })
        .collect();
    let id_to_name = loaded
        .iter()
        .zip(&names)
        .map(|((id, _, _), n)| (id.clone(), n.clone()))
        .collect();
    let dumps = loaded
        .into_iter()
        .zip(names)
        .map(|((_, _, d), n)| (n, d))
        .collect();
    Ok((dumps, id_to_name))
}

fn write_report(ws: &Workspace, name: &str, report: &EvalReport) -> Result<PathBuf, CliError> {
    let dir = ws.new_report(name)?;
    write_json(&dir.join("report.json"), report)?;
    let table = render_table(report);
    std::fs::write(dir.join("table.txt"), &table)?;
    let bars: Vec<(String, f64)> = report
        .runs
        .iter()
        .filter_map(|r| Some((r.name.clone(), r.tasks.get(&TaskId::Bias)?.macro_f1)))
        .collect();
    if !bars.is_empty() {
        std::fs::write(dir.join("bias_macro_f1.svg"), bar_chart("Bias Macro-F1", &bars))?;
    }
    print!("{table}");
    println!("report written to {}", dir.display());
    Ok(dir)
}

pub fn cmd_evaluate(
    ws: &Workspace,
    runs: &[String],
    baselines: &[String],
    split: &str,
) -> Result<PathBuf, CliError> {
    let mut ids: Vec<String> = runs.to_vec();
    for b in baselines {
        if !ids.contains(b) {
            ids.push(b.clone());
        }
    }
    let (dumps, id_to_name) = load_dumps(ws, &ids, split)?;
    let base_names: Vec<String> = baselines.iter().map(|b| id_to_name[b].clone()).collect();
    let report = build_report(&dumps, &base_names)?;
    write_report(ws, "evaluate", &report)
}

/// Test-split table over the given runs, or over every completed training
/// and prompt run when none are given.
pub fn cmd_report(ws: &Workspace, runs: &[String]) -> Result<PathBuf, CliError> {
    let ids: Vec<String> = if runs.is_empty() {
        ws.runs()?
            .into_iter()
            .filter(|r| r.is_complete())
            .filter(|r| r.meta().is_ok_and(|m| m.kind != RunKind::Grid))
            .map(|r| r.id)
            .collect()
    } else {
        runs.to_vec()
    };
    if ids.is_empty() {
        return Err(CliError::data("no completed runs to report"));
    }
    let (dumps, _) = load_dumps(ws, &ids, "test")?;
    let report = build_report(&dumps, &[])?;
    write_report(ws, "report", &report)
}
