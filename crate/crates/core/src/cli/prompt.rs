use super::build::{config_dir, load_toml};
use super::train::load_split;
use super::workspace::{RunDir, RunKind, RunMeta, Workspace};
use super::CliError;
use crate::labels::TaskId;
use crate::promptlab::{
    compare_shot_sources, evaluate_spec, sample_shots, select_prompt, PromptSpec, ScoringOptions,
    Shot, StubLm, StubLmConfig,
};
use crate::trainer::DataPaths;
use chrono::Utc;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use std::path::Path;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PromptConfig {
    /// Scoring model; only the offline `stub` model is available.
    pub lm: Option<String>,
    pub task: TaskId,
    /// Number of shots; 0 runs zero-shot.
    pub shots: usize,
    /// Seed for drawing shots from the training split.
    pub shot_seed: u64,
    /// Hand-picked shots; when given they are used instead of a random draw.
    pub manual_shots: Vec<Shot>,
    /// Also score the winner with randomly drawn shots on the test split.
    pub compare_random: bool,
    /// Defaults to the six standard instructions.
    pub instructions: Vec<String>,
    pub seed: u64,
    pub data: DataPaths,
    pub scoring: ScoringOptions,
    pub stub_lm: StubLmConfig,
}

impl Default for PromptConfig {
    fn default() -> Self {
        PromptConfig {
            lm: None,
            task: TaskId::Bias,
            shots: 0,
            shot_seed: 0,
            manual_shots: Vec::new(),
            compare_random: false,
            instructions: Vec::new(),
            seed: 42,
            data: DataPaths::default(),
            scoring: ScoringOptions::default(),
            stub_lm: StubLmConfig::default(),
        }
    }
}

impl PromptConfig {
    pub fn mode(&self) -> String {
        if self.shots == 0 {
            "zero_shot".into()
        } else {
            format!("{}_shot", self.shots)
        }
    }

    fn fingerprint(&self) -> String {
        let doc = serde_json::to_string(self).expect("config serializes");
        Sha256::digest(doc.as_bytes())
            .iter()
            .map(|b| format!("{b:02x}"))
            .collect()
    }
}

pub fn cmd_prompt(
    ws: &Workspace,
    config_path: &Path,
    seed: Option<u64>,
    workers: usize,
) -> Result<RunDir, CliError> {
    let (mut cfg, raw): (PromptConfig, String) = load_toml(config_path)?;
    if let Some(s) = seed {
        cfg.seed = s;
    }
    match cfg.lm.as_deref() {
        Some("stub") => {}
        Some(other) => {
            return Err(CliError::config(format!(
                "language model {other:?} is not available offline; use lm = \"stub\""
            )))
        }
        None => return Err(CliError::config("lm is required")),
    }
    if cfg.task == TaskId::Joint {
        return Err(CliError::config("prompting supports binary tasks only"));
    }
    let sp = load_split(ws, config_dir(config_path), &cfg.data, cfg.seed)?;
    let lm = StubLm::new(cfg.stub_lm.clone());
    let options = crate::promptlab::default_options(cfg.task);

    let shots: Vec<Shot> = if cfg.shots == 0 {
        Vec::new()
    } else if !cfg.manual_shots.is_empty() {
        if cfg.manual_shots.len() < cfg.shots {
            return Err(CliError::config(format!(
                "{} manual shots given, {} requested",
                cfg.manual_shots.len(),
                cfg.shots
            )));
        }
        cfg.manual_shots[..cfg.shots].to_vec()
    } else {
        sample_shots(&sp.train, cfg.task, &options, cfg.shots, cfg.shot_seed)?
    };
    let specs: Vec<PromptSpec> = if cfg.instructions.is_empty() {
        PromptSpec::standard_set(cfg.task, &shots)
    } else {
        cfg.instructions
            .iter()
            .enumerate()
            .map(|(i, ins)| {
                PromptSpec::new(format!("prompt-{}", i + 1), ins.as_str(), cfg.task).with_shots(shots.clone())
            })
            .collect()
    };
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers.max(1))
        .build()
        .map_err(|e| CliError::new(super::ExitKind::Other, e.to_string()))?;
    let (selection, val, test, comparison) = pool.install(|| -> Result<_, CliError> {
        let selection = select_prompt(&specs, &sp.validation, &lm, cfg.scoring)?;
        let winner = &specs[selection.best];
        let val = evaluate_spec(winner, &sp.validation, "validation", &lm, cfg.scoring)?;
        let test = evaluate_spec(winner, &sp.test, "test", &lm, cfg.scoring)?;
        let comparison = if cfg.compare_random && cfg.shots > 0 {
            Some(compare_shot_sources(
                winner,
                &sp.train,
                cfg.shots,
                cfg.shot_seed,
                &sp.test,
                "test",
                &lm,
                cfg.scoring,
            )?)
        } else {
            None
        };
        Ok((selection, val, test, comparison))
    })?;

    let hash = cfg.fingerprint();
    let run = ws.new_run(&hash)?;
    run.write_text("config.toml", &raw)?;
    run.write_json("config.resolved.json", &cfg)?;
    run.write_json(
        "run.json",
        &RunMeta {
            run_id: run.id.clone(),
            kind: RunKind::Prompt,
            label: format!("prompt {} {}", cfg.task, cfg.mode()),
            config_hash: hash,
            created: Utc::now().to_rfc3339(),
            mode: Some(cfg.mode()),
        },
    )?;
    let winner = &specs[selection.best];
    run.write_json(
        "selection.json",
        &serde_json::json!({
            "scores": selection.scores,
            "best": winner.name,
            "spec": winner,
            "test": test.score,
        }),
    )?;
    if let Some(c) = &comparison {
        run.write_json(
            "comparison.json",
            &serde_json::json!({
                "manual": c.manual.score,
                "random": c.random.score,
                "random_shots": c.random_shots,
            }),
        )?;
    }
    run.write_json("predictions/validation.json", &val.dump)?;
    run.write_json("predictions/test.json", &test.dump)?;
    run.mark_complete()?;

    let fmt = |v: Option<f64>| v.map(|x| format!("{x:.4}")).unwrap_or_else(|| "n/a".into());
    for s in &selection.scores {
        println!("{:<10} validation macro-F1 {}", s.name, fmt(s.macro_f1));
    }
    println!(
        "run {}: selected {} ({}), test macro-F1 {}",
        run.id,
        winner.name,
        cfg.mode(),
        fmt(test.score.macro_f1)
    );
    Ok(run)
}
