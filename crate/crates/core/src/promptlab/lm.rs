use super::PromptError;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TokenScore {
    /// Byte offset of the token in the scored text.
    pub start: usize,
    pub nll: f64,
}

/// Scoring interface of a causal language model.
pub trait LanguageModel: Send + Sync {
    fn id(&self) -> &str;

    /// Negative log-likelihood of every token of `text` given its prefix.
    fn token_nlls(&self, text: &str) -> Result<Vec<TokenScore>, PromptError>;

    /// Whether `token_nlls` may be called from several threads at once.
    fn concurrent(&self) -> bool {
        true
    }
}

/// Lowers the NLL of an answer letter when the instruction and the sentence
/// being answered contain the given cues (case-insensitive substrings).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CueRule {
    #[serde(default)]
    pub instruction_contains: Option<String>,
    #[serde(default)]
    pub sentence_contains: Option<String>,
    pub letter: String,
    pub bonus: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct StubLmConfig {
    pub default_nll: f64,
    /// Per-token NLL by lowercased whitespace token.
    pub token_nll: BTreeMap<String, f64>,
    pub rules: Vec<CueRule>,
}

impl Default for StubLmConfig {
    fn default() -> Self {
        StubLmConfig {
            default_nll: 5.0,
            token_nll: BTreeMap::new(),
            rules: Vec::new(),
        }
    }
}

/// Deterministic table-driven language model.
///
/// Tokens are whitespace-separated words. A token that directly follows
/// `Answer:` gets its table NLL minus the bonus of every matching
/// [`CueRule`], floored at zero; every other token gets its table NLL.
#[derive(Debug, Clone, PartialEq)]
pub struct StubLm {
    config: StubLmConfig,
}

fn tokens(text: &str) -> Vec<(usize, &str)> {
    let mut out = Vec::new();
    let mut start = None;
    for (i, c) in text.char_indices() {
        match (c.is_whitespace(), start) {
            (true, Some(s)) => {
                out.push((s, &text[s..i]));
                start = None;
            }
            (false, None) => start = Some(i),
            _ => {}
        }
    }
    if let Some(s) = start {
        out.push((s, &text[s..]));
    }
    out
}

fn contains_ci(hay: &str, needle: &Option<String>) -> bool {
    match needle {
        None => true,
        Some(n) => hay.to_lowercase().contains(&n.to_lowercase()),
    }
}

impl StubLm {
    pub fn new(config: StubLmConfig) -> Self {
        StubLm { config }
    }

    pub fn config(&self) -> &StubLmConfig {
        &self.config
    }

    fn base(&self, token: &str) -> f64 {
        self.config
            .token_nll
            .get(&token.to_lowercase())
            .copied()
            .unwrap_or(self.config.default_nll)
    }

    /// NLL of `letter` answering `sentence` under `instruction`.
    pub fn answer_nll(&self, instruction: &str, sentence: &str, letter: &str) -> f64 {
        let bonus: f64 = self
            .config
            .rules
            .iter()
            .filter(|r| r.letter == letter)
            .filter(|r| contains_ci(instruction, &r.instruction_contains))
            .filter(|r| contains_ci(sentence, &r.sentence_contains))
            .map(|r| r.bonus)
            .sum();
        (self.base(letter) - bonus).max(0.0)
    }
}

impl LanguageModel for StubLm {
    fn id(&self) -> &str {
        "stub-lm"
    }

    fn token_nlls(&self, text: &str) -> Result<Vec<TokenScore>, PromptError> {
        let instruction = text.lines().next().unwrap_or("");
        let toks = tokens(text);
        Ok(toks
            .iter()
            .enumerate()
            .map(|(i, &(start, tok))| {
                let nll = if i > 0 && toks[i - 1].1 == "Answer:" {
                    let before = &text[..start];
                    let sentence = before
                        .rfind("Sentence: ")
                        .map(|p| before[p + "Sentence: ".len()..].lines().next().unwrap_or(""))
                        .unwrap_or("");
                    self.answer_nll(instruction, sentence, tok)
                } else {
                    self.base(tok)
                };
                TokenScore { start, nll }
            })
            .collect())
    }
}
