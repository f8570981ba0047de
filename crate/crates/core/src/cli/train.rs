use super::build::{config_dir, load_toml};
use super::workspace::{write_json, RunDir, RunKind, RunMeta, Workspace};
use super::{CliError, ExitKind};
use crate::corpus::io::read_dataset;
use crate::corpus::{split, DatasetSplit, SplitManifest, DEFAULT_RATIOS};
use crate::modeling::{open_backend, Family};
use crate::trainer::{
    grid_search, train, DataPaths, ExperimentConfig, GridAxes, RunStatus, TrainError, TrainOutcome,
};
use chrono::Utc;
use std::collections::BTreeMap;
use std::path::Path;
use std::sync::Mutex;

/// Loads the dataset named by `data` and its split: an explicit manifest, a
/// `split_manifest.json` next to the dataset, or a fresh stratified split.
pub(super) fn load_split(
    ws: &Workspace,
    cfg_dir: &Path,
    data: &DataPaths,
    seed: u64,
) -> Result<DatasetSplit, CliError> {
    let ds = data
        .dataset
        .as_deref()
        .ok_or_else(|| CliError::config("data.dataset is required"))?;
    let mut path = ws.resolve(cfg_dir, ds);
    if path.is_dir() {
        path = path.join("dataset.csv");
    }
    let records = read_dataset(&path)?;
    let manifest = match &data.split_manifest {
        Some(m) => Some(ws.resolve(cfg_dir, m)),
        None => path
            .parent()
            .map(|p| p.join("split_manifest.json"))
            .filter(|p| p.exists()),
    };
    match manifest {
        Some(m) => {
            let man: SplitManifest = super::workspace::read_json(&m)?;
            Ok(man.apply(&records)?)
        }
        None => Ok(split(&records, DEFAULT_RATIOS, seed)?),
    }
}

fn apply_overrides(cfg: &mut ExperimentConfig, seed: Option<u64>, backend: Option<&str>) {
    if let Some(s) = seed {
        cfg.seed = s;
    }
    if let Some(b) = backend {
        cfg.backend_id = b.to_string();
    }
}

fn meta(run: &RunDir, kind: RunKind, cfg: &ExperimentConfig, hash: &str) -> RunMeta {
    RunMeta {
        run_id: run.id.clone(),
        kind,
        label: cfg.task.to_string(),
        config_hash: hash.to_string(),
        created: Utc::now().to_rfc3339(),
        mode: Some(cfg.task.to_string()),
    }
}

fn write_outcome(run: &RunDir, result: &Result<TrainOutcome, TrainError>) -> Result<(), CliError> {
    match result {
        Ok(out) => {
            out.checkpoint.save(&run.file("checkpoint.json"))?;
            let mut record = out.record.clone();
            record.checkpoint = Some("checkpoint.json".into());
            run.write_json("metrics.json", &record)?;
            run.write_json("predictions/validation.json", &out.validation)?;
            run.write_json("predictions/test.json", &out.test)?;
            run.mark_complete()
        }
        Err(TrainError::Divergence {
            epoch,
            step,
            detail,
            record,
        }) => {
            run.write_json("metrics.json", record)?;
            run.write_json(
                "diverged.json",
                &serde_json::json!({ "epoch": epoch, "step": step, "detail": detail }),
            )
        }
        Err(e) => run.write_text("error.txt", &format!("{e}\n")),
    }
}

pub fn cmd_train(
    ws: &Workspace,
    config_path: &Path,
    seed: Option<u64>,
    backend: Option<&str>,
    resume: bool,
) -> Result<RunDir, CliError> {
    let (mut cfg, raw): (ExperimentConfig, String) = load_toml(config_path)?;
    apply_overrides(&mut cfg, seed, backend);
    cfg.validate()?;
    let hash = cfg.fingerprint();
    if resume {
        if let Some(done) = ws.find_complete(&hash)? {
            println!("run {} is already complete; nothing to do", done.id);
            return Ok(done);
        }
    }
    let sp = load_split(ws, config_dir(config_path), &cfg.data, cfg.seed)?;
    let run = ws.new_run(&hash)?;
    run.write_text("config.toml", &raw)?;
    run.write_json("config.resolved.json", &cfg)?;
    run.write_json("run.json", &meta(&run, RunKind::Train, &cfg, &hash))?;
    let result = train(&cfg, &sp);
    write_outcome(&run, &result)?;
    let out = result?;
    let best = out.record.best_metrics();
    println!(
        "run {}: best epoch {} of {}, validation score {:.4}",
        run.id, out.record.best_epoch, cfg.epochs, best.selection_score
    );
    Ok(run)
}

fn split_grid(raw: &str) -> Result<(ExperimentConfig, Option<GridAxes>), CliError> {
    let mut table: toml::Table = toml::from_str(raw).map_err(|e| CliError::config(e.to_string()))?;
    let axes = match table.remove("grid") {
        Some(v) => Some(v.try_into::<GridAxes>().map_err(|e| CliError::config(format!("[grid]: {e}")))?),
        None => None,
    };
    let cfg: ExperimentConfig = toml::Value::Table(table)
        .try_into()
        .map_err(|e| CliError::config(e.to_string()))?;
    Ok((cfg, axes))
}

pub fn cmd_grid(
    ws: &Workspace,
    config_path: &Path,
    seed: Option<u64>,
    backend: Option<&str>,
    workers: usize,
) -> Result<RunDir, CliError> {
    let raw = std::fs::read_to_string(config_path)
        .map_err(|e| CliError::config(format!("{}: {e}", config_path.display())))?;
    let (mut base, axes) = split_grid(&raw)?;
    apply_overrides(&mut base, seed, backend);
    base.validate()?;
    let axes = match axes {
        Some(a) => a,
        None => {
            let family = open_backend(&base.backend_id, &base.adaptation)?.handle().family;
            GridAxes::for_family(if family == Family::Stub { Family::EncoderOnly } else { family })
        }
    };
    let sp = load_split(ws, config_dir(config_path), &base.data, base.seed)?;
    let hash = {
        let doc = serde_json::json!({ "base": base, "grid": axes }).to_string();
        use sha2::Digest;
        sha2::Sha256::digest(doc.as_bytes())
            .iter()
            .map(|b| format!("{b:02x}"))
            .collect::<String>()
    };
    let grid_run = ws.new_run(&hash)?;
    grid_run.write_text("config.toml", &raw)?;
    let mut gmeta = meta(&grid_run, RunKind::Grid, &base, &hash);
    gmeta.label = format!("grid {}", base.task);
    grid_run.write_json("run.json", &gmeta)?;

    let point_runs: Mutex<BTreeMap<usize, String>> = Mutex::new(BTreeMap::new());
    let on_done = |i: usize, c: &ExperimentConfig, r: &Result<TrainOutcome, TrainError>| {
        let h = c.fingerprint();
        let res = ws.new_run(&h).and_then(|run| {
            run.write_json("config.resolved.json", c)?;
            let mut m = meta(&run, RunKind::Train, c, &h);
            m.label = format!("{} lr={} ep={} bs={}", c.task, c.learning_rate, c.epochs, c.batch_size);
            run.write_json("run.json", &m)?;
            write_outcome(&run, r)?;
            Ok(run.id)
        });
        match res {
            Ok(id) => {
                point_runs.lock().expect("no poisoned lock").insert(i, id);
            }
            Err(e) => log::error!("grid point {i}: could not write artifacts: {e}"),
        }
    };
    let result = grid_search(&base, &axes, &sp, workers, on_done)?;
    let point_runs = point_runs.into_inner().expect("no poisoned lock");

    let mut lines = vec![format!(
        "{:>5}  {:>8}  {:>6}  {:>5}  {:>9}  {}",
        "point", "lr", "epochs", "batch", "score", "run"
    )];
    for r in &result.runs {
        let score = match &r.status {
            RunStatus::Completed { record } => format!("{:.4}", record.best_score()),
            RunStatus::Diverged { .. } => "diverged".into(),
            RunStatus::Failed { .. } => "failed".into(),
        };
        let mark = if Some(r.index) == result.best { " *" } else { "" };
        lines.push(format!(
            "{:>5}  {:>8}  {:>6}  {:>5}  {:>9}  {}{mark}",
            r.index,
            r.config.learning_rate,
            r.config.epochs,
            r.config.batch_size,
            score,
            point_runs.get(&r.index).map(String::as_str).unwrap_or("-")
        ));
    }
    grid_run.write_text("grid.txt", &(lines.join("\n") + "\n"))?;
    write_json(
        &grid_run.file("grid.json"),
        &serde_json::json!({ "axes": axes, "result": result, "point_runs": point_runs }),
    )?;
    grid_run.mark_complete()?;
    match result.best_run() {
        Some(b) => {
            println!(
                "grid {}: {} runs, best lr={} epochs={} batch={} (run {})",
                grid_run.id,
                result.runs.len(),
                b.config.learning_rate,
                b.config.epochs,
                b.config.batch_size,
                point_runs.get(&b.index).map(String::as_str).unwrap_or("-")
            );
            Ok(grid_run)
        }
        None => Err(CliError::new(ExitKind::Divergence, "every grid run diverged or failed")),
    }
}
