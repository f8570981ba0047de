use super::EvalError;
use serde::{Deserialize, Serialize};

/// Square count table, rows = gold class, columns = predicted class.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionMatrix {
    pub counts: Vec<Vec<usize>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassMetrics {
    pub class: usize,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub support: usize,
}

impl ConfusionMatrix {
    pub fn from_labels(golds: &[usize], preds: &[usize], classes: usize) -> Result<Self, EvalError> {
        if golds.len() != preds.len() {
            return Err(EvalError::Shape(format!(
                "{} gold labels vs {} predictions",
                golds.len(),
                preds.len()
            )));
        }
        if golds.is_empty() {
            return Err(EvalError::Shape("no examples".into()));
        }
        let mut counts = vec![vec![0usize; classes]; classes];
        for (&g, &p) in golds.iter().zip(preds) {
            for label in [g, p] {
                if label >= classes {
                    return Err(EvalError::LabelRange { label, classes });
                }
            }
            counts[g][p] += 1;
        }
        Ok(ConfusionMatrix { counts })
    }

    pub fn classes(&self) -> usize {
        self.counts.len()
    }

    pub fn total(&self) -> usize {
        self.counts.iter().flatten().sum()
    }

    pub fn accuracy(&self) -> f64 {
        let correct: usize = (0..self.classes()).map(|c| self.counts[c][c]).sum();
        correct as f64 / self.total() as f64
    }

    /// Per-class scores; a class whose precision or recall is undefined gets F1 = 0.
    pub fn class_metrics(&self) -> Vec<ClassMetrics> {
        let k = self.classes();
        (0..k)
            .map(|c| {
                let tp = self.counts[c][c] as f64;
                let predicted: usize = (0..k).map(|g| self.counts[g][c]).sum();
                let support: usize = self.counts[c].iter().sum();
                let precision = if predicted == 0 { 0.0 } else { tp / predicted as f64 };
                let recall = if support == 0 { 0.0 } else { tp / support as f64 };
                let f1 = if predicted == 0 || support == 0 || tp == 0.0 {
                    0.0
                } else {
                    2.0 * precision * recall / (precision + recall)
                };
                ClassMetrics {
                    class: c,
                    precision,
                    recall,
                    f1,
                    support,
                }
            })
            .collect()
    }

    pub fn macro_f1(&self) -> f64 {
        let m = self.class_metrics();
        m.iter().map(|c| c.f1).sum::<f64>() / m.len() as f64
    }
}

/// Unweighted mean of per-class F1 over classes `0..classes`.
pub fn macro_f1(golds: &[usize], preds: &[usize], classes: usize) -> Result<f64, EvalError> {
    Ok(ConfusionMatrix::from_labels(golds, preds, classes)?.macro_f1())
}

pub fn per_class_metrics(
    golds: &[usize],
    preds: &[usize],
    classes: usize,
) -> Result<Vec<ClassMetrics>, EvalError> {
    Ok(ConfusionMatrix::from_labels(golds, preds, classes)?.class_metrics())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn perfect_predictions() {
        assert_eq!(macro_f1(&[0, 1, 1, 0], &[0, 1, 1, 0], 2).unwrap(), 1.0);
    }

    #[test]
    fn all_one_class_on_balanced_golds() {
        // F1_A = 2 * 0.5 * 1 / 1.5 = 2/3, F1_B = 0
        let golds = [0, 0, 1, 1];
        let preds = [0, 0, 0, 0];
        let m = per_class_metrics(&golds, &preds, 2).unwrap();
        assert!((m[0].f1 - 2.0 / 3.0).abs() < 1e-15);
        assert_eq!(m[1].f1, 0.0);
        assert!((macro_f1(&golds, &preds, 2).unwrap() - 1.0 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn errors() {
        assert!(matches!(macro_f1(&[0, 1], &[0], 2), Err(EvalError::Shape(_))));
        assert!(matches!(macro_f1(&[], &[], 2), Err(EvalError::Shape(_))));
        assert!(matches!(
            macro_f1(&[0, 2], &[0, 1], 2),
            Err(EvalError::LabelRange { label: 2, .. })
        ));
    }

    proptest! {
        #[test]
        fn invariant_under_relabeling_and_order(
            pairs in proptest::collection::vec((0usize..2, 0usize..2), 1..80),
            rot in 0usize..80,
        ) {
            let golds: Vec<usize> = pairs.iter().map(|p| p.0).collect();
            let preds: Vec<usize> = pairs.iter().map(|p| p.1).collect();
            let base = macro_f1(&golds, &preds, 2).unwrap();
            let flip = |v: &[usize]| v.iter().map(|x| 1 - x).collect::<Vec<_>>();
            let relabeled = macro_f1(&flip(&golds), &flip(&preds), 2).unwrap();
            prop_assert!((base - relabeled).abs() < 1e-15);
            let r = rot % golds.len();
            let (mut g2, mut p2) = (golds.clone(), preds.clone());
            g2.rotate_left(r);
            p2.rotate_left(r);
            prop_assert_eq!(base, macro_f1(&g2, &p2, 2).unwrap());
            prop_assert!((0.0..=1.0).contains(&base));
        }
    }
}
