use super::{
    build_prompt, pick_answer, score_candidates, LanguageModel, OptionLabel, PromptError,
    PromptSpec, Ranking, ScoreSpan, Shot,
};
use crate::corpus::SentenceRecord;
use crate::evaluation::{PredictionDump, PredictionRow};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use std::collections::BTreeMap;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScoringOptions {
    pub span: ScoreSpan,
    pub ranking: Ranking,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpecScore {
    pub name: String,
    pub instruction: String,
    pub shots: usize,
    /// `None` when no evaluated record carries gold for the task.
    pub macro_f1: Option<f64>,
    pub accuracy: Option<f64>,
    /// Examples where perplexity and raw-NLL ranking pick different answers.
    pub ranking_disagreements: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PromptRun {
    pub score: SpecScore,
    pub dump: PredictionDump,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PromptSelection {
    pub scores: Vec<SpecScore>,
    /// Index into `scores` and the input specs.
    pub best: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ShotComparison {
    pub manual: PromptRun,
    pub random: PromptRun,
    pub random_shots: Vec<Shot>,
}

fn fingerprint(spec: &PromptSpec, lm: &dyn LanguageModel, opts: ScoringOptions) -> String {
    let doc = serde_json::json!({ "spec": spec, "lm": lm.id(), "options": opts });
    Sha256::digest(doc.to_string().as_bytes())
        .iter()
        .map(|b| format!("{b:02x}"))
        .collect()
}

/// Predicts every record with `spec` and scores the predictions.
///
/// Rows are ordered by example id whatever order scoring finishes in.
pub fn evaluate_spec(
    spec: &PromptSpec,
    records: &[SentenceRecord],
    split: &str,
    lm: &dyn LanguageModel,
    opts: ScoringOptions,
) -> Result<PromptRun, PromptError> {
    spec.validate()?;
    let classes = spec.task.num_classes();
    if spec.options.len() != classes {
        return Err(PromptError::Spec(format!(
            "{} options for task {} with {classes} classes",
            spec.options.len(),
            spec.task
        )));
    }
    let other = match opts.ranking {
        Ranking::Perplexity => Ranking::RawNll,
        Ranking::RawNll => Ranking::Perplexity,
    };
    let one = |r: &SentenceRecord| -> Result<(PredictionRow, bool), PromptError> {
        let cands = build_prompt(spec, &r.text)?;
        let scores = score_candidates(lm, &cands, opts.span)?;
        let pick = pick_answer(&scores, opts.ranking).expect("at least one option");
        let alt = pick_answer(&scores, other).expect("at least one option");
        if pick != alt {
            log::info!(
                "{}: {:?} picks {} but {:?} picks {}",
                r.id,
                opts.ranking,
                scores[pick].letter,
                other,
                scores[alt].letter
            );
        }
        let gold = r
            .class_index(spec.task)
            .map(|g| BTreeMap::from([(spec.task, g)]))
            .unwrap_or_default();
        Ok((
            PredictionRow {
                example_id: r.id.clone(),
                category: Some(r.category),
                gold,
                pred: BTreeMap::from([(spec.task, pick)]),
            },
            pick != alt,
        ))
    };
    let results: Vec<(PredictionRow, bool)> = if lm.concurrent() {
        records.par_iter().map(one).collect::<Result<_, _>>()?
    } else {
        records.iter().map(one).collect::<Result<_, _>>()?
    };
    let disagreements = results.iter().filter(|(_, d)| *d).count();
    let mut rows: Vec<PredictionRow> = results.into_iter().map(|(r, _)| r).collect();
    rows.sort_by(|a, b| a.example_id.cmp(&b.example_id));
    let dump = PredictionDump {
        split: split.to_string(),
        config_fingerprint: fingerprint(spec, lm, opts),
        tasks: vec![spec.task],
        rows,
    };
    dump.validate()?;
    let (g, p) = dump.labels(spec.task)?;
    let (macro_f1, accuracy) = if g.is_empty() {
        (None, None)
    } else {
        let correct = g.iter().zip(&p).filter(|(a, b)| a == b).count();
        (
            Some(dump.macro_f1(spec.task)?),
            Some(correct as f64 / g.len() as f64),
        )
    };
    Ok(PromptRun {
        score: SpecScore {
            name: spec.name.clone(),
            instruction: spec.instruction.clone(),
            shots: spec.shots.len(),
            macro_f1,
            accuracy,
            ranking_disagreements: disagreements,
        },
        dump,
    })
}

/// Scores every spec on the validation records; the highest Macro-F1 wins,
/// the earlier spec on ties.
pub fn select_prompt(
    specs: &[PromptSpec],
    validation: &[SentenceRecord],
    lm: &dyn LanguageModel,
    opts: ScoringOptions,
) -> Result<PromptSelection, PromptError> {
    if specs.is_empty() {
        return Err(PromptError::Spec("no prompt specs to select from".into()));
    }
    let mut scores = Vec::with_capacity(specs.len());
    for spec in specs {
        if !validation.iter().any(|r| r.class_index(spec.task).is_some()) {
            return Err(PromptError::Data(format!(
                "no validation record carries a {} label",
                spec.task
            )));
        }
        scores.push(evaluate_spec(spec, validation, "validation", lm, opts)?.score);
    }
    let mut best = 0;
    for (i, s) in scores.iter().enumerate() {
        if s.macro_f1 > scores[best].macro_f1 {
            best = i;
        }
    }
    Ok(PromptSelection { scores, best })
}

/// Draws `k` labeled records without replacement. The pool is ordered by id
/// first, so the draw depends only on the pool's contents and `seed`.
pub fn sample_shots(
    pool: &[SentenceRecord],
    task: crate::labels::TaskId,
    options: &[OptionLabel],
    k: usize,
    seed: u64,
) -> Result<Vec<Shot>, PromptError> {
    let mut labeled: Vec<(&SentenceRecord, usize)> = pool
        .iter()
        .filter_map(|r| Some((r, r.class_index(task)?)))
        .collect();
    if labeled.len() < k {
        return Err(PromptError::Sampling {
            have: labeled.len(),
            need: k,
        });
    }
    labeled.sort_by(|a, b| a.0.id.cmp(&b.0.id));
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (chosen, _) = labeled.partial_shuffle(&mut rng, k);
    chosen
        .iter()
        .map(|(r, c)| {
            let letter = options.get(*c).ok_or_else(|| {
                PromptError::Spec(format!("no option for class {c} of task {task}"))
            })?;
            Ok(Shot {
                sentence: r.text.clone(),
                answer: letter.letter.clone(),
                source_id: Some(r.id.clone()),
            })
        })
        .collect()
}

/// Runs `spec` with its own (manual) shots and with `k` shots sampled from
/// `pool`, on the same records.
#[allow(clippy::too_many_arguments)]
pub fn compare_shot_sources(
    spec: &PromptSpec,
    pool: &[SentenceRecord],
    k: usize,
    seed: u64,
    records: &[SentenceRecord],
    split: &str,
    lm: &dyn LanguageModel,
    opts: ScoringOptions,
) -> Result<ShotComparison, PromptError> {
    let random_shots = sample_shots(pool, spec.task, &spec.options, k, seed)?;
    let manual = evaluate_spec(spec, records, split, lm, opts)?;
    let mut rspec = spec.clone().with_shots(random_shots.clone());
    rspec.name = format!("{}+random{k}", spec.name);
    let random = evaluate_spec(&rspec, records, split, lm, opts)?;
    Ok(ShotComparison {
        manual,
        random,
        random_shots,
    })
}
