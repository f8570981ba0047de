mod common;

use clap::Parser;
use common::fixture;
use std::path::{Path, PathBuf};
use stereomtl::cli::workspace::{RunMeta, Workspace};
use stereomtl::cli::{main_with_args, run, Cli, ExitKind};
use stereomtl::evaluation::PredictionDump;
use tempfile::TempDir;

fn stereomtl(ws: &Path, args: &[&str]) -> i32 {
    let mut all = vec!["stereomtl".to_string(), "--workspace".into(), ws.display().to_string()];
    all.extend(args.iter().map(|s| s.to_string()));
    main_with_args(all)
}

fn cfg(name: &str) -> String {
    fixture(&format!("mini/{name}")).display().to_string()
}

fn built() -> TempDir {
    let ws = TempDir::new().unwrap();
    assert_eq!(stereomtl(ws.path(), &["build-dataset", "--config", &cfg("build.toml")]), 0);
    ws
}

fn run_ids(ws: &Path) -> Vec<String> {
    let mut v: Vec<String> = std::fs::read_dir(ws.join("runs"))
        .map(|d| d.filter_map(Result::ok).map(|e| e.file_name().to_string_lossy().into_owned()).collect())
        .unwrap_or_default();
    v.sort();
    v
}

fn write_config(dir: &Path, name: &str, body: &str) -> String {
    let p = dir.join(name);
    std::fs::write(&p, body).unwrap();
    p.display().to_string()
}

#[test]
fn build_dataset_outputs_and_is_reproducible() {
    let ws = built();
    let data = ws.path().join("data/mini");
    for f in ["dataset.csv", "split_manifest.json", "distribution.json", "agreement.json", "label_distribution.svg"] {
        assert!(data.join(f).exists(), "{f}");
    }
    let text = std::fs::read_to_string(data.join("dataset.csv")).unwrap();
    assert_eq!(text.lines().count(), 101);
    assert!(text.lines().skip(1).all(|l| !l.contains(",,")));
    let dist: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(data.join("distribution.json")).unwrap()).unwrap();
    let sizes: Vec<u64> = ["train", "validation", "test"].iter().map(|s| dist[s]["total"].as_u64().unwrap()).collect();
    assert_eq!(sizes, vec![72, 8, 20]);
    let first = std::fs::read(data.join("dataset.csv")).unwrap();
    assert_eq!(stereomtl(ws.path(), &["build-dataset", "--config", &cfg("build.toml")]), 0);
    assert_eq!(std::fs::read(data.join("dataset.csv")).unwrap(), first);
}

#[test]
fn missing_source_is_reported_by_path() {
    let ws = TempDir::new().unwrap();
    let c = write_config(ws.path(), "b.toml", "crows_pairs = \"does_not_exist.csv\"\n");
    let cli = Cli::try_parse_from(["stereomtl", "--workspace", &ws.path().display().to_string(), "build-dataset", "--config", &c]).unwrap();
    let err = run(cli).unwrap_err();
    assert_eq!(err.kind, ExitKind::Data);
    assert!(err.message.contains("does_not_exist.csv"), "{}", err.message);
}

#[test]
fn invalid_mode_fails_before_training() {
    let ws = built();
    let c = write_config(ws.path(), "bad.toml", "[task]\nmode = \"triple_mtl\"\n[data]\ndataset = \"mini\"\n");
    assert_eq!(stereomtl(ws.path(), &["train", "--config", &c]), ExitKind::Config as i32);
    assert!(run_ids(ws.path()).is_empty());
}

#[test]
fn train_evaluate_and_resume() {
    let ws = built();
    assert_eq!(stereomtl(ws.path(), &["train", "--config", &cfg("stl_bias.toml")]), 0);
    assert_eq!(stereomtl(ws.path(), &["train", "--config", &cfg("shared_mtl.toml")]), 0);
    let ids = run_ids(ws.path());
    assert_eq!(ids.len(), 2);
    let w = Workspace::new(ws.path());
    for id in &ids {
        let r = w.open_run(id).unwrap();
        assert!(r.is_complete());
        for f in ["config.toml", "metrics.json", "checkpoint.json", "predictions/test.json", "predictions/validation.json"] {
            assert!(r.file(f).exists(), "{id}/{f}");
        }
        let raw = std::fs::read_to_string(r.file("config.toml")).unwrap();
        assert!(raw == std::fs::read_to_string(cfg("stl_bias.toml")).unwrap() || raw == std::fs::read_to_string(cfg("shared_mtl.toml")).unwrap());
        assert!(r.write_text("late.txt", "x").is_err());
    }
    let stl = ids.iter().find(|id| w.open_run(id).unwrap().meta().unwrap().label == "stl_bias").unwrap();
    let mtl = ids.iter().find(|id| *id != stl).unwrap();

    assert_eq!(stereomtl(ws.path(), &["train", "--resume", "--config", &cfg("stl_bias.toml")]), 0);
    assert_eq!(run_ids(ws.path()).len(), 2);

    assert_eq!(stereomtl(ws.path(), &["evaluate", "--run", mtl, "--baseline", stl]), 0);
    let reports: Vec<PathBuf> = std::fs::read_dir(ws.path().join("reports")).unwrap().map(|e| e.unwrap().path()).collect();
    assert_eq!(reports.len(), 1);
    let table = std::fs::read_to_string(reports[0].join("table.txt")).unwrap();
    assert!(table.contains("Bias (Macro-F1)") && table.contains("p (bias)"));
    assert_eq!(table.lines().filter(|l| l.starts_with("stl_bias") || l.starts_with("shared_mtl")).count(), 2);

    assert_eq!(stereomtl(ws.path(), &["evaluate", "--run", stl]), 0);
    assert_eq!(stereomtl(ws.path(), &["evaluate", "--run", stl, "--run", "no-such-run"]), ExitKind::Data as i32);
}

#[test]
fn single_run_table_has_no_p_column() {
    let ws = built();
    assert_eq!(stereomtl(ws.path(), &["train", "--config", &cfg("stl_bias.toml")]), 0);
    assert_eq!(stereomtl(ws.path(), &["report"]), 0);
    let dir = std::fs::read_dir(ws.path().join("reports")).unwrap().next().unwrap().unwrap().path();
    let table = std::fs::read_to_string(dir.join("table.txt")).unwrap();
    assert!(!table.contains("p (bias)"));
}

#[test]
fn diverging_run_exits_with_divergence_code() {
    let ws = built();
    let c = write_config(
        ws.path(),
        "hot.toml",
        "learning_rate = 1e308\ncustom_learning_rate = true\nepochs = 3\n[task]\nmode = \"stl_bias\"\n[data]\ndataset = \"mini\"\n",
    );
    assert_eq!(stereomtl(ws.path(), &["train", "--config", &c]), ExitKind::Divergence as i32);
    let ids = run_ids(ws.path());
    let r = Workspace::new(ws.path()).open_run(&ids[0]).unwrap();
    assert!(!r.is_complete());
    assert!(r.file("diverged.json").exists());
}

#[test]
fn grid_writes_one_run_per_point() {
    let ws = built();
    assert_eq!(stereomtl(ws.path(), &["--workers", "2", "grid", "--config", &cfg("grid.toml")]), 0);
    let ids = run_ids(ws.path());
    assert_eq!(ids.len(), 5);
    let w = Workspace::new(ws.path());
    let grid = ids.iter().map(|id| w.open_run(id).unwrap()).find(|r| r.file("grid.json").exists()).unwrap();
    let g: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(grid.file("grid.json")).unwrap()).unwrap();
    assert_eq!(g["result"]["runs"].as_array().unwrap().len(), 4);
    assert!(g["result"]["best"].is_u64());
}

#[test]
fn prompt_modes_emit_dumps() {
    let ws = built();
    for (name, mode) in [("prompt_zero.toml", "zero_shot"), ("prompt_five.toml", "5_shot")] {
        let before = run_ids(ws.path());
        assert_eq!(stereomtl(ws.path(), &["prompt", "--config", &cfg(name)]), 0);
        let id = run_ids(ws.path()).into_iter().find(|i| !before.contains(i)).unwrap();
        let r = Workspace::new(ws.path()).open_run(&id).unwrap();
        let meta: RunMeta = r.meta().unwrap();
        assert_eq!(meta.mode.as_deref(), Some(mode));
        let test = PredictionDump::load(&r.file("predictions/test.json")).unwrap();
        assert_eq!(test.rows.len(), 20);
        let sel: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(r.file("selection.json")).unwrap()).unwrap();
        assert_eq!(sel["scores"].as_array().unwrap().len(), 6);
        assert_eq!(sel["best"], "prompt-4");
    }
}

#[test]
fn prompt_without_lm_is_a_config_error() {
    let ws = built();
    let c = write_config(ws.path(), "p.toml", "task = \"bias\"\n[data]\ndataset = \"mini\"\n");
    assert_eq!(stereomtl(ws.path(), &["prompt", "--config", &c]), ExitKind::Config as i32);
    let c = write_config(ws.path(), "p2.toml", "lm = \"mistral-7b\"\n[data]\ndataset = \"mini\"\n");
    assert_eq!(stereomtl(ws.path(), &["prompt", "--config", &c]), ExitKind::Config as i32);
}
