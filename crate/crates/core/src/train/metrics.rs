use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ClassMetrics {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub support: usize,
    /// Never labelled and never predicted; its zero F1 is a convention.
    pub absent: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub accuracy: f64,
    pub macro_f1: f64,
    pub per_class: Vec<ClassMetrics>,
    /// `confusion[label][prediction]`.
    pub confusion: Vec<Vec<usize>>,
}

/// Accuracy, per-class precision/recall/F1 and macro-F1 from hard predictions.
pub fn compute_metrics(predictions: &[usize], labels: &[usize], classes: usize) -> Result<Metrics> {
    if predictions.is_empty() {
        return Err(Error::EmptyEvaluation);
    }
    if predictions.len() != labels.len() {
        return Err(Error::DimMismatch(format!(
            "{} predictions for {} labels",
            predictions.len(),
            labels.len()
        )));
    }
    let mut confusion = vec![vec![0usize; classes]; classes];
    for (&p, &l) in predictions.iter().zip(labels) {
        for c in [p, l] {
            if c >= classes {
                return Err(Error::LabelOutOfRange { label: c, classes });
            }
        }
        confusion[l][p] += 1;
    }
    let correct: usize = (0..classes).map(|c| confusion[c][c]).sum();
    let per_class: Vec<ClassMetrics> = (0..classes)
        .map(|c| {
            let tp = confusion[c][c] as f64;
            let support: usize = confusion[c].iter().sum();
            let predicted: usize = confusion.iter().map(|row| row[c]).sum();
            let precision = if predicted == 0 {
                0.0
            } else {
                tp / predicted as f64
            };
            let recall = if support == 0 {
                0.0
            } else {
                tp / support as f64
            };
            let f1 = if precision + recall == 0.0 {
                0.0
            } else {
                2.0 * precision * recall / (precision + recall)
            };
            ClassMetrics {
                precision,
                recall,
                f1,
                support,
                absent: support == 0 && predicted == 0,
            }
        })
        .collect();
    let macro_f1 = per_class.iter().map(|m| m.f1).sum::<f64>() / classes as f64;
    Ok(Metrics {
        accuracy: correct as f64 / predictions.len() as f64,
        macro_f1,
        per_class,
        confusion,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn hand_computed_example() {
        let m = compute_metrics(&[1, 1, 0, 0], &[1, 0, 0, 0], 2).unwrap();
        assert_eq!(m.accuracy, 0.75);
        assert!((m.per_class[1].f1 - 2.0 / 3.0).abs() < 1e-12);
        assert!((m.per_class[0].f1 - 0.8).abs() < 1e-12);
        assert!((m.macro_f1 - 0.7333).abs() < 1e-4);
        assert_eq!(m.confusion, vec![vec![2, 1], vec![0, 1]]);
    }

    #[test]
    fn all_correct() {
        let m = compute_metrics(&[0, 1, 1], &[0, 1, 1], 2).unwrap();
        assert_eq!((m.accuracy, m.macro_f1), (1.0, 1.0));
    }

    #[test]
    fn absent_class_is_flagged() {
        let m = compute_metrics(&[0, 1], &[0, 1], 3).unwrap();
        assert!(m.per_class[2].absent && m.per_class[2].f1 == 0.0);
        assert!(!m.per_class[0].absent);
    }

    #[test]
    fn empty_and_out_of_range() {
        assert!(matches!(
            compute_metrics(&[], &[], 2),
            Err(Error::EmptyEvaluation)
        ));
        assert!(compute_metrics(&[2], &[0], 2).is_err());
    }

    proptest! {
        #[test]
        fn confusion_rows_match_label_counts(pairs in prop::collection::vec((0usize..3, 0usize..3), 1..40)) {
            let (preds, labels): (Vec<_>, Vec<_>) = pairs.into_iter().unzip();
            let m = compute_metrics(&preds, &labels, 3).unwrap();
            for c in 0..3 {
                let count = labels.iter().filter(|&&l| l == c).count();
                prop_assert_eq!(m.confusion[c].iter().sum::<usize>(), count);
            }
            prop_assert_eq!(m.confusion.iter().flatten().sum::<usize>(), preds.len());
        }
    }
}
