//! Zero- and few-shot classification by ranking candidate answers with a
//! language model's perplexity.

mod lm;
mod scoring;
mod select;
mod template;

pub use lm::{CueRule, LanguageModel, StubLm, StubLmConfig, TokenScore};
pub use scoring::{pick_answer, score_candidates, CandidateScore, Ranking, ScoreSpan};
pub use select::{
    compare_shot_sources, evaluate_spec, sample_shots, select_prompt, PromptRun, PromptSelection,
    ScoringOptions, ShotComparison, SpecScore,
};
pub use template::{build_prompt, default_options, Candidate, OptionLabel, PromptSpec, Shot, STANDARD_INSTRUCTIONS};

use crate::evaluation::EvalError;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum PromptError {
    #[error("input error: {0}")]
    Input(String),
    #[error("invalid prompt spec: {0}")]
    Spec(String),
    #[error("scoring failed for option {letter}: {message}")]
    Scoring { letter: String, message: String },
    #[error("cannot sample {need} shots from a pool of {have}")]
    Sampling { have: usize, need: usize },
    #[error("data error: {0}")]
    Data(String),
    #[error(transparent)]
    Eval(#[from] EvalError),
}
