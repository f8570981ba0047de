use super::{Category, CorpusError, SentenceRecord};
use crate::labels::{to_joint, JointLabel, TaskId};
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;

/// Label and category counts for a record set.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DistributionReport {
    pub total: usize,
    pub bias: BTreeMap<String, usize>,
    pub stereotype: BTreeMap<String, usize>,
    pub joint: BTreeMap<String, usize>,
    pub category: BTreeMap<String, usize>,
    pub source: BTreeMap<String, usize>,
}

impl DistributionReport {
    fn empty() -> Self {
        let zeros = |task: TaskId| {
            let (neg, pos) = task.canonical_names().unwrap();
            BTreeMap::from([(neg.to_string(), 0), (pos.to_string(), 0)])
        };
        DistributionReport {
            total: 0,
            bias: zeros(TaskId::Bias),
            stereotype: zeros(TaskId::Stereotype),
            joint: JointLabel::ALL.iter().map(|j| (joint_key(*j), 0)).collect(),
            category: Category::ALL.iter().map(|c| (c.to_string(), 0)).collect(),
            source: BTreeMap::new(),
        }
    }
}

pub fn joint_key(j: JointLabel) -> String {
    let (b, s) = j.decompose();
    format!(
        "{}:{}+{}",
        j.index(),
        TaskId::Bias.label_name(b),
        TaskId::Stereotype.label_name(s)
    )
}

pub fn dataset_stats(records: &[SentenceRecord]) -> Result<DistributionReport, CorpusError> {
    let mut rep = DistributionReport::empty();
    for r in records {
        let missing = |task| CorpusError::MissingLabel {
            id: r.id.clone(),
            task,
        };
        let b = r.bias.ok_or_else(|| missing(TaskId::Bias))?;
        let s = r.stereotype.ok_or_else(|| missing(TaskId::Stereotype))?;
        rep.total += 1;
        *rep.bias.get_mut(TaskId::Bias.label_name(b)).unwrap() += 1;
        *rep.stereotype.get_mut(TaskId::Stereotype.label_name(s)).unwrap() += 1;
        *rep.joint.get_mut(&joint_key(to_joint(b, s))).unwrap() += 1;
        *rep.category.get_mut(r.category.as_str()).unwrap() += 1;
        *rep.source.entry(r.source.to_string()).or_default() += 1;
    }
    Ok(rep)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::Source;
    use crate::labels::BinaryLabel::*;

    #[test]
    fn two_records() {
        let recs = vec![
            SentenceRecord::new("a", "x", Source::Synthetic).with_labels(Positive, Positive),
            SentenceRecord::new("b", "y", Source::Synthetic).with_labels(Negative, Negative),
        ];
        let rep = dataset_stats(&recs).unwrap();
        assert_eq!(rep.total, 2);
        assert!(rep.joint.values().all(|&c| c <= 1));
        assert_eq!(rep.joint.values().sum::<usize>(), 2);
        assert_eq!(rep.bias["bias"], 1);
        assert_eq!(rep.category["none"], 2);
    }

    #[test]
    fn empty_is_all_zero() {
        let rep = dataset_stats(&[]).unwrap();
        assert_eq!(rep.total, 0);
        assert!(rep.joint.values().chain(rep.bias.values()).all(|&c| c == 0));
    }

    #[test]
    fn unlabeled_record_errors_with_id() {
        let recs = vec![SentenceRecord::new("lonely", "x", Source::CrowsPairs)];
        match dataset_stats(&recs) {
            Err(CorpusError::MissingLabel { id, .. }) => assert_eq!(id, "lonely"),
            other => panic!("unexpected {other:?}"),
        }
    }
}
