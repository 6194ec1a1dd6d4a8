//! Accuracy and per-class F1, always computed over all data points (never
//! averaged batch-wise).

use serde::{Deserialize, Serialize};

use crate::error::{KpgError, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub accuracy: f64,
    pub f1_per_class: Vec<f64>,
}

pub fn evaluate_metrics(predictions: &[usize], labels: &[usize], classes: usize) -> Result<Metrics> {
    if predictions.is_empty() {
        return Err(KpgError::Input("evaluate_metrics: empty input".into()));
    }
    if predictions.len() != labels.len() {
        return Err(KpgError::Input(format!(
            "evaluate_metrics: {} predictions vs {} labels",
            predictions.len(),
            labels.len()
        )));
    }
    let n = predictions.len();
    let correct = predictions
        .iter()
        .zip(labels)
        .filter(|(p, l)| p == l)
        .count();
    let accuracy = correct as f64 / n as f64;

    let mut f1_per_class = Vec::with_capacity(classes);
    for c in 0..classes {
        let tp = predictions
            .iter()
            .zip(labels)
            .filter(|&(&p, &l)| p == c && l == c)
            .count() as f64;
        let fp = predictions
            .iter()
            .zip(labels)
            .filter(|&(&p, &l)| p == c && l != c)
            .count() as f64;
        let fn_ = predictions
            .iter()
            .zip(labels)
            .filter(|&(&p, &l)| p != c && l == c)
            .count() as f64;
        let precision = if tp + fp > 0.0 { tp / (tp + fp) } else { 0.0 };
        let recall = if tp + fn_ > 0.0 { tp / (tp + fn_) } else { 0.0 };
        let f1 = if precision + recall > 0.0 {
            2.0 * precision * recall / (precision + recall)
        } else {
            0.0
        };
        f1_per_class.push(f1);
    }
    Ok(Metrics {
        accuracy,
        f1_per_class,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn perfect_predictions() {
        let m = evaluate_metrics(&[0, 1, 1, 0], &[0, 1, 1, 0], 2).unwrap();
        assert_eq!(m.accuracy, 1.0);
        assert_eq!(m.f1_per_class, vec![1.0, 1.0]);
    }

    #[test]
    fn binary_f1_tabulated() {
        // class 1: TP=2, FP=1, FN=1, TN=6 -> F1 = 2/3
        let labels = vec![1, 1, 1, 0, 0, 0, 0, 0, 0, 0];
        let preds = vec![1, 1, 0, 1, 0, 0, 0, 0, 0, 0];
        let m = evaluate_metrics(&preds, &labels, 2).unwrap();
        assert!((m.f1_per_class[1] - 2.0 / 3.0).abs() < 1e-12);
    }

    #[test]
    fn whole_set_accuracy_not_batch_mean() {
        // 110 records: first 100 at 80% correct, last 10 at 90% correct.
        // Whole-set accuracy is 89/110, not the 0.85 batch mean.
        let mut labels = vec![0usize; 110];
        let mut preds = vec![0usize; 110];
        for p in preds.iter_mut().take(100).skip(80) {
            *p = 1; // 20 wrong in the first 100
        }
        for p in preds.iter_mut().skip(109) {
            *p = 1; // 1 wrong in the last 10
        }
        labels.iter_mut().for_each(|_| {});
        let m = evaluate_metrics(&preds, &labels, 2).unwrap();
        assert!((m.accuracy - 89.0 / 110.0).abs() < 1e-12);
        assert!((m.accuracy - 0.85).abs() > 1e-3);
    }

    #[test]
    fn degenerate_class_f1_is_zero() {
        let m = evaluate_metrics(&[0, 0], &[0, 0], 2).unwrap();
        assert_eq!(m.f1_per_class[1], 0.0);
    }

    #[test]
    fn empty_input_is_error() {
        assert!(evaluate_metrics(&[], &[], 2).is_err());
    }
}
