use super::CorpusError;
use crate::labels::{BinaryLabel, TaskId};
use serde::{Deserialize, Serialize};
use std::collections::{BTreeMap, BTreeSet};

/// One annotator's votes for one sentence.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AnnotationRecord {
    pub sentence_id: String,
    pub annotator_id: String,
    pub bias_vote: BinaryLabel,
    pub stereotype_vote: BinaryLabel,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AgreementReport {
    pub kappa_bias: f64,
    pub kappa_stereotype: f64,
    pub n_items: usize,
    pub n_annotators: usize,
}

/// A sentence whose votes for one task do not produce a majority.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TieCase {
    pub sentence_id: String,
    pub task: TaskId,
    pub positive_votes: usize,
    pub negative_votes: usize,
}

#[derive(Debug, Clone, Default)]
pub struct AggregatedLabels {
    /// sentence id -> (bias, stereotype); tied tasks are `None`.
    pub labels: BTreeMap<String, (Option<BinaryLabel>, Option<BinaryLabel>)>,
    pub ties: Vec<TieCase>,
}

/// Label with strictly more than half of the votes.
pub fn majority_vote(votes: &[BinaryLabel]) -> Result<BinaryLabel, CorpusError> {
    if votes.is_empty() {
        return Err(CorpusError::NoVotes);
    }
    let positive = votes.iter().filter(|v| v.is_positive()).count();
    let negative = votes.len() - positive;
    match positive.cmp(&negative) {
        std::cmp::Ordering::Greater => Ok(BinaryLabel::Positive),
        std::cmp::Ordering::Less => Ok(BinaryLabel::Negative),
        std::cmp::Ordering::Equal => Err(CorpusError::Tie { positive, negative }),
    }
}

/// Fleiss' kappa over an items x categories count table.
///
/// Each row must sum to the same number of raters `n >= 2`. When every item is
/// unanimous the result is exactly 1.0, which also covers the degenerate case
/// where all votes fall into a single category (expected agreement of 1).
pub fn fleiss_kappa(matrix: &[Vec<u32>]) -> Result<f64, CorpusError> {
    let n_items = matrix.len();
    if n_items == 0 {
        return Err(CorpusError::Shape("no items".into()));
    }
    let k = matrix[0].len();
    if k < 2 {
        return Err(CorpusError::Shape(format!("need at least 2 categories, got {k}")));
    }
    let raters: u32 = matrix[0].iter().sum();
    if raters < 2 {
        return Err(CorpusError::Shape(format!("need at least 2 raters per item, got {raters}")));
    }
    for (i, row) in matrix.iter().enumerate() {
        if row.len() != k {
            return Err(CorpusError::Shape(format!(
                "row {i} has {} categories, expected {k}",
                row.len()
            )));
        }
        let s: u32 = row.iter().sum();
        if s != raters {
            return Err(CorpusError::Shape(format!(
                "row {i} sums to {s}, expected {raters}"
            )));
        }
    }

    if matrix.iter().all(|row| row.iter().any(|&c| c == raters)) {
        return Ok(1.0);
    }

    let n = raters as f64;
    let total = n_items as f64 * n;
    let mut column = vec![0.0f64; k];
    let mut agreement_sum = 0.0;
    for row in matrix {
        let mut sq = 0.0;
        for (j, &c) in row.iter().enumerate() {
            let c = c as f64;
            column[j] += c;
            sq += c * c;
        }
        agreement_sum += (sq - n) / (n * (n - 1.0));
    }
    let p_bar = agreement_sum / n_items as f64;
    let p_e: f64 = column.iter().map(|c| (c / total).powi(2)).sum();
    // p_e == 1 implies unanimity, handled above
    Ok((p_bar - p_e) / (1.0 - p_e))
}

/// Builds the binary count table `[negative, positive]` per sentence.
pub fn count_matrix(
    annotations: &[AnnotationRecord],
    task: TaskId,
) -> Result<(Vec<String>, Vec<Vec<u32>>), CorpusError> {
    let mut counts: BTreeMap<&str, [u32; 2]> = BTreeMap::new();
    for a in annotations {
        let vote = match task {
            TaskId::Bias => a.bias_vote,
            TaskId::Stereotype => a.stereotype_vote,
            other => {
                return Err(CorpusError::Annotation(format!(
                    "annotations carry no {other} votes"
                )))
            }
        };
        counts.entry(&a.sentence_id).or_default()[vote.index()] += 1;
    }
    let ids = counts.keys().map(|s| s.to_string()).collect();
    let rows = counts.values().map(|c| c.to_vec()).collect();
    Ok((ids, rows))
}

/// Majority-votes every sentence and computes per-task Fleiss' kappa.
///
/// Fails on duplicate (sentence, annotator) pairs or sentences with fewer
/// than `min_annotators` votes. Ties are returned rather than raised so the
/// caller can route them to review.
pub fn aggregate_annotations(
    annotations: &[AnnotationRecord],
    min_annotators: usize,
) -> Result<(AggregatedLabels, AgreementReport), CorpusError> {
    let mut seen = BTreeSet::new();
    let mut by_sentence: BTreeMap<&str, Vec<&AnnotationRecord>> = BTreeMap::new();
    let mut annotators = BTreeSet::new();
    for a in annotations {
        if !seen.insert((a.sentence_id.as_str(), a.annotator_id.as_str())) {
            return Err(CorpusError::Annotation(format!(
                "duplicate vote from annotator {} on sentence {}",
                a.annotator_id, a.sentence_id
            )));
        }
        annotators.insert(a.annotator_id.as_str());
        by_sentence.entry(&a.sentence_id).or_default().push(a);
    }
    if by_sentence.is_empty() {
        return Err(CorpusError::Annotation("no annotations".into()));
    }

    let mut out = AggregatedLabels::default();
    for (id, votes) in &by_sentence {
        if votes.len() < min_annotators {
            return Err(CorpusError::Annotation(format!(
                "sentence {id} has {} votes, need at least {min_annotators}",
                votes.len()
            )));
        }
        let mut resolve = |task: TaskId, vs: Vec<BinaryLabel>| match majority_vote(&vs) {
            Ok(l) => Some(l),
            Err(_) => {
                let positive_votes = vs.iter().filter(|v| v.is_positive()).count();
                out.ties.push(TieCase {
                    sentence_id: id.to_string(),
                    task,
                    positive_votes,
                    negative_votes: vs.len() - positive_votes,
                });
                None
            }
        };
        let bias = resolve(TaskId::Bias, votes.iter().map(|a| a.bias_vote).collect());
        let stereo = resolve(
            TaskId::Stereotype,
            votes.iter().map(|a| a.stereotype_vote).collect(),
        );
        out.labels.insert(id.to_string(), (bias, stereo));
    }

    let (_, bias_rows) = count_matrix(annotations, TaskId::Bias)?;
    let (_, stereo_rows) = count_matrix(annotations, TaskId::Stereotype)?;
    let report = AgreementReport {
        kappa_bias: fleiss_kappa(&bias_rows)?,
        kappa_stereotype: fleiss_kappa(&stereo_rows)?,
        n_items: by_sentence.len(),
        n_annotators: annotators.len(),
    };
    Ok((out, report))
}
