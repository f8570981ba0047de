use super::{Candidate, LanguageModel, PromptError};
use serde::{Deserialize, Serialize};

/// Which tokens enter the candidate score.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScoreSpan {
    /// Instruction, shots, query and answer.
    #[default]
    FullSequence,
    AnswerOnly,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Ranking {
    #[default]
    Perplexity,
    RawNll,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CandidateScore {
    pub letter: String,
    pub nll: f64,
    pub token_count: usize,
    /// `exp(nll / token_count)`.
    pub perplexity: f64,
}

pub fn score_candidates(
    lm: &dyn LanguageModel,
    candidates: &[Candidate],
    span: ScoreSpan,
) -> Result<Vec<CandidateScore>, PromptError> {
    candidates
        .iter()
        .map(|c| {
            let fail = |message: String| PromptError::Scoring {
                letter: c.letter.clone(),
                message,
            };
            let toks = lm.token_nlls(&c.text).map_err(|e| fail(e.to_string()))?;
            let kept: Vec<f64> = toks
                .iter()
                .filter(|t| span == ScoreSpan::FullSequence || t.start >= c.answer_start)
                .map(|t| t.nll)
                .collect();
            if kept.is_empty() {
                return Err(fail("no tokens to score".into()));
            }
            let nll: f64 = kept.iter().sum();
            if !nll.is_finite() {
                return Err(fail(format!("non-finite NLL {nll}")));
            }
            Ok(CandidateScore {
                letter: c.letter.clone(),
                nll,
                token_count: kept.len(),
                perplexity: (nll / kept.len() as f64).exp(),
            })
        })
        .collect()
}

/// Index of the winning candidate, earliest on exact ties.
///
/// Perplexity is compared through the mean NLL per token, which orders the
/// same way and stays finite where `exp` would overflow.
pub fn pick_answer(scores: &[CandidateScore], ranking: Ranking) -> Option<usize> {
    let key = |s: &CandidateScore| match ranking {
        Ranking::Perplexity => s.nll / s.token_count as f64,
        Ranking::RawNll => s.nll,
    };
    let mut best: Option<usize> = None;
    for (i, s) in scores.iter().enumerate() {
        if best.is_none_or(|b| key(s) < key(&scores[b])) {
            best = Some(i);
        }
    }
    best
}

#[cfg(test)]
mod tests {
    use super::*;

    fn s(letter: &str, nll: f64, n: usize) -> CandidateScore {
        CandidateScore {
            letter: letter.into(),
            nll,
            token_count: n,
            perplexity: (nll / n as f64).exp(),
        }
    }

    #[test]
    fn minimum_and_ties() {
        let a = s("A", 12.0f64.ln(), 1);
        let b = s("B", 9.5f64.ln(), 1);
        assert_eq!(pick_answer(&[a.clone(), b], Ranking::Perplexity), Some(1));
        let t1 = s("A", 14.0, 2);
        let t2 = s("B", 7.0, 1);
        assert_eq!(pick_answer(&[t1, t2], Ranking::Perplexity), Some(0));
        assert_eq!(pick_answer(&[a], Ranking::Perplexity), Some(0));
        assert_eq!(pick_answer(&[], Ranking::Perplexity), None);
    }

    #[test]
    fn rankings_can_disagree_on_unequal_lengths() {
        let a = s("A", 6.0, 3);
        let b = s("B", 5.0, 1);
        assert_eq!(pick_answer(&[a.clone(), b.clone()], Ranking::Perplexity), Some(0));
        assert_eq!(pick_answer(&[a, b], Ranking::RawNll), Some(1));
    }
}
