use super::PromptError;
use crate::labels::TaskId;
use serde::{Deserialize, Serialize};
use std::collections::HashSet;

pub const STANDARD_INSTRUCTIONS: [&str; 6] = [
    "Given a sentence, predict if the sentence contains a bias or not.",
    "Classify the given sentence as biased or not.",
    "Given a sentence, find if it contains a bias.",
    "Analyse the sentence and predict if it contains a bias or not.",
    "Decide if the given sentence contains a bias.",
    "Identify whether the given sentence is free from bias or not.",
];

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OptionLabel {
    pub letter: String,
    pub text: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Shot {
    pub sentence: String,
    pub answer: String,
    /// Record the shot was drawn from, when sampled.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub source_id: Option<String>,
}

impl Shot {
    pub fn new(sentence: impl Into<String>, answer: impl Into<String>) -> Self {
        Shot {
            sentence: sentence.into(),
            answer: answer.into(),
            source_id: None,
        }
    }
}

/// Instruction, lettered options (option `i` stands for class `i`), and
/// worked examples.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PromptSpec {
    #[serde(default)]
    pub name: String,
    pub instruction: String,
    pub options: Vec<OptionLabel>,
    #[serde(default)]
    pub shots: Vec<Shot>,
    pub task: TaskId,
}

/// Option texts derived from the task's label names: `no_bias` -> `no bias`.
pub fn default_options(task: TaskId) -> Vec<OptionLabel> {
    task.class_names()
        .into_iter()
        .enumerate()
        .map(|(i, name)| OptionLabel {
            letter: ((b'A' + i as u8) as char).to_string(),
            text: name.replace(['_', '+'], " "),
        })
        .collect()
}

impl PromptSpec {
    pub fn new(name: impl Into<String>, instruction: impl Into<String>, task: TaskId) -> Self {
        PromptSpec {
            name: name.into(),
            instruction: instruction.into(),
            options: default_options(task),
            shots: Vec::new(),
            task,
        }
    }

    pub fn with_shots(mut self, shots: Vec<Shot>) -> Self {
        self.shots = shots;
        self
    }

    /// The six standard instructions, named `prompt-1` .. `prompt-6`.
    pub fn standard_set(task: TaskId, shots: &[Shot]) -> Vec<PromptSpec> {
        STANDARD_INSTRUCTIONS
            .iter()
            .enumerate()
            .map(|(i, ins)| PromptSpec::new(format!("prompt-{}", i + 1), *ins, task).with_shots(shots.to_vec()))
            .collect()
    }

    pub fn validate(&self) -> Result<(), PromptError> {
        let bad = |m: String| Err(PromptError::Spec(m));
        if self.instruction.trim().is_empty() {
            return bad("instruction is empty".into());
        }
        if self.options.is_empty() {
            return bad("no options".into());
        }
        let mut seen = HashSet::new();
        for o in &self.options {
            if o.letter.trim().is_empty() || o.letter.chars().any(char::is_whitespace) {
                return bad(format!("option letter {:?} must be a single token", o.letter));
            }
            if !seen.insert(o.letter.as_str()) {
                return bad(format!("option letter {} repeats", o.letter));
            }
        }
        for s in &self.shots {
            if !seen.contains(s.answer.as_str()) {
                return bad(format!("shot answer {} is not an option letter", s.answer));
            }
            if s.sentence.trim().is_empty() {
                return bad("shot sentence is empty".into());
            }
        }
        Ok(())
    }

    pub fn is_zero_shot(&self) -> bool {
        self.shots.is_empty()
    }

    pub fn option_index(&self, letter: &str) -> Option<usize> {
        self.options.iter().position(|o| o.letter == letter)
    }
}

/// One full sequence ending in an answer letter.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Candidate {
    pub letter: String,
    pub text: String,
    /// Byte offset where the answer letter starts.
    pub answer_start: usize,
}

fn one_line(s: &str) -> String {
    s.split_whitespace().collect::<Vec<_>>().join(" ")
}

fn push_block(out: &mut String, spec: &PromptSpec, sentence: &str) {
    out.push_str("Sentence: ");
    out.push_str(&one_line(sentence));
    out.push('\n');
    for o in &spec.options {
        out.push_str(&o.letter);
        out.push_str(". ");
        out.push_str(&o.text);
        out.push('\n');
    }
    out.push_str("Answer: ");
}

/// Renders one candidate per option.
///
/// Layout, one item per line: the instruction; for each shot a `Sentence: `
/// line, one `<letter>. <text>` line per option and `Answer: <letter>`; then
/// the query block, whose `Answer: ` is followed by the candidate letter with
/// no trailing newline. Sentences are collapsed to a single line.
pub fn build_prompt(spec: &PromptSpec, sentence: &str) -> Result<Vec<Candidate>, PromptError> {
    spec.validate()?;
    if sentence.trim().is_empty() {
        return Err(PromptError::Input("query sentence is empty".into()));
    }
    let mut ctx = String::new();
    ctx.push_str(&one_line(&spec.instruction));
    ctx.push('\n');
    for shot in &spec.shots {
        push_block(&mut ctx, spec, &shot.sentence);
        ctx.push_str(&shot.answer);
        ctx.push('\n');
    }
    push_block(&mut ctx, spec, sentence);
    Ok(spec
        .options
        .iter()
        .map(|o| Candidate {
            letter: o.letter.clone(),
            text: format!("{ctx}{}", o.letter),
            answer_start: ctx.len(),
        })
        .collect())
}
