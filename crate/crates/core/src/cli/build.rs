use super::figures::bar_chart;
use super::workspace::{write_json, Workspace};
use super::CliError;
use crate::corpus::io::{read_annotations, read_rows, read_stereoset, write_dataset};
use crate::corpus::{
    aggregate_annotations, dataset_stats, extract_crows_pairs, extract_stereoset, labeled_rows,
    split, validate_records, SentenceRecord, Source, DEFAULT_BLANK_MARKER, DEFAULT_RATIOS,
};
use crate::labels::TaskId;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::path::Path;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LabeledSource {
    pub path: String,
    pub task: TaskId,
    pub source: Source,
    #[serde(default)]
    pub id_prefix: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SplitConfig {
    pub ratios: [f64; 3],
    pub seed: u64,
}

impl Default for SplitConfig {
    fn default() -> Self {
        SplitConfig {
            ratios: DEFAULT_RATIOS,
            seed: 13,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BuildConfig {
    /// Output directory name under `data/`.
    pub name: String,
    pub crows_pairs: Option<String>,
    pub stereoset: Option<String>,
    /// StereoSet gold labels whose options are kept.
    pub stereoset_include: Vec<String>,
    pub blank_marker: String,
    pub annotations: Option<String>,
    pub min_annotators: usize,
    pub labeled: Vec<LabeledSource>,
    pub split: SplitConfig,
}

impl Default for BuildConfig {
    fn default() -> Self {
        BuildConfig {
            name: "stereobias".into(),
            crows_pairs: None,
            stereoset: None,
            stereoset_include: vec!["stereotype".into(), "neutral".into()],
            blank_marker: DEFAULT_BLANK_MARKER.into(),
            annotations: None,
            min_annotators: 3,
            labeled: Vec::new(),
            split: SplitConfig::default(),
        }
    }
}

pub(super) fn load_toml<T: serde::de::DeserializeOwned>(path: &Path) -> Result<(T, String), CliError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::config(format!("{}: {e}", path.display())))?;
    let parsed = toml::from_str(&text)
        .map_err(|e| CliError::config(format!("{}: {e}", path.display())))?;
    Ok((parsed, text))
}

pub(super) fn config_dir(path: &Path) -> &Path {
    path.parent().unwrap_or(Path::new("."))
}

pub fn cmd_build_dataset(ws: &Workspace, config_path: &Path, seed: Option<u64>) -> Result<(), CliError> {
    let (mut cfg, _): (BuildConfig, String) = load_toml(config_path)?;
    if let Some(s) = seed {
        cfg.split.seed = s;
    }
    if cfg.name.is_empty() || cfg.name.contains(['/', '\\']) {
        return Err(CliError::config(format!("invalid dataset name {:?}", cfg.name)));
    }
    let dir = config_dir(config_path);
    let resolve = |p: &str| ws.resolve(dir, p);

    let mut records: Vec<SentenceRecord> = Vec::new();
    if let Some(p) = &cfg.crows_pairs {
        records.extend(extract_crows_pairs(&read_rows(&resolve(p))?)?);
    }
    if let Some(p) = &cfg.stereoset {
        let doc = read_stereoset(&resolve(p))?;
        records.extend(extract_stereoset(&doc, &cfg.stereoset_include, &cfg.blank_marker)?);
    }
    let needs_votes = records.len();
    for src in &cfg.labeled {
        let prefix = src.id_prefix.clone().unwrap_or_else(|| src.source.to_string());
        records.extend(labeled_rows(&read_rows(&resolve(&src.path))?, src.task, src.source, &prefix)?);
    }
    if records.is_empty() {
        return Err(CliError::config("no sources configured"));
    }

    let out_dir = ws.data_dir().join(&cfg.name);
    std::fs::create_dir_all(&out_dir)?;

    let mut agreement = None;
    if let Some(p) = &cfg.annotations {
        let annotations = read_annotations(&resolve(p))?;
        let (agg, report) = aggregate_annotations(&annotations, cfg.min_annotators)?;
        if !agg.ties.is_empty() {
            let review = out_dir.join("review_ties.csv");
            let mut w = csv::Writer::from_path(&review)
                .map_err(|e| CliError::data(format!("{}: {e}", review.display())))?;
            w.write_record(["sentence_id", "task", "positive_votes", "negative_votes"])
                .and_then(|_| {
                    for t in &agg.ties {
                        w.write_record([
                            t.sentence_id.clone(),
                            t.task.to_string(),
                            t.positive_votes.to_string(),
                            t.negative_votes.to_string(),
                        ])?;
                    }
                    w.flush().map_err(csv::Error::from)
                })
                .map_err(|e| CliError::data(format!("{}: {e}", review.display())))?;
            return Err(CliError::data(format!(
                "{} unresolved annotation ties; see {}",
                agg.ties.len(),
                review.display()
            )));
        }
        for r in records.iter_mut().take(needs_votes) {
            if let Some((b, s)) = agg.labels.get(&r.id) {
                r.bias = *b;
                r.stereotype = *s;
            }
        }
        let known: std::collections::HashSet<&str> = records.iter().map(|r| r.id.as_str()).collect();
        let stray = agg.labels.keys().filter(|k| !known.contains(k.as_str())).count();
        if stray > 0 {
            log::warn!("{stray} annotated sentence ids match no source record");
        }
        write_json(&out_dir.join("agreement.json"), &report)?;
        agreement = Some(report);
    }
    let unlabeled: Vec<&str> = records
        .iter()
        .take(needs_votes)
        .filter(|r| r.bias.is_none() || r.stereotype.is_none())
        .map(|r| r.id.as_str())
        .collect();
    if !unlabeled.is_empty() {
        return Err(CliError::data(format!(
            "{} records have no aggregated labels (first: {})",
            unlabeled.len(),
            unlabeled[0]
        )));
    }
    validate_records(&records)?;

    write_dataset(&records, &out_dir.join("dataset.csv"))?;
    let sp = split(&records, cfg.split.ratios, cfg.split.seed)?;
    write_json(&out_dir.join("split_manifest.json"), &sp.manifest())?;

    let full = |rs: &[SentenceRecord]| -> Vec<SentenceRecord> {
        rs.iter()
            .filter(|r| r.bias.is_some() && r.stereotype.is_some())
            .cloned()
            .collect()
    };
    let all = dataset_stats(&full(&records))?;
    let mut dist = BTreeMap::new();
    dist.insert("all".to_string(), serde_json::to_value(&all).expect("serializable"));
    for name in ["train", "validation", "test"] {
        let rep = dataset_stats(&full(sp.get(name).expect("split name")))?;
        dist.insert(name.to_string(), serde_json::to_value(&rep).expect("serializable"));
    }
    dist.insert(
        "partially_labeled".into(),
        serde_json::json!(records.len() - full(&records).len()),
    );
    write_json(&out_dir.join("distribution.json"), &dist)?;

    let mut label_bars: Vec<(String, f64)> =
        all.bias.iter().map(|(k, v)| (k.clone(), *v as f64)).collect();
    label_bars.extend(all.stereotype.iter().map(|(k, v)| (k.clone(), *v as f64)));
    std::fs::write(
        out_dir.join("label_distribution.svg"),
        bar_chart("Sentences per label", &label_bars),
    )?;
    let cat_bars: Vec<(String, f64)> = all.category.iter().map(|(k, v)| (k.clone(), *v as f64)).collect();
    std::fs::write(out_dir.join("categories.svg"), bar_chart("Sentences per category", &cat_bars))?;

    let (a, b, c) = sp.sizes();
    println!(
        "dataset {}: {} records -> train {a}, validation {b}, test {c}",
        out_dir.display(),
        records.len()
    );
    if let Some(r) = agreement {
        println!(
            "Fleiss kappa: bias {:.4}, stereotype {:.4} ({} items, {} annotators)",
            r.kappa_bias, r.kappa_stereotype, r.n_items, r.n_annotators
        );
    }
    Ok(())
}
