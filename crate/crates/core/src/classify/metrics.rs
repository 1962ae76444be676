//! Weighted classification metrics and ROC.

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RocPoint {
    pub threshold: f64,
    pub fpr: f64,
    pub tpr: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub n: usize,
    pub accuracy: f64,
    /// Support-weighted averages over the two classes.
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    /// `[[tn, fp], [fn, tp]]`, rows are true classes.
    pub confusion: [[usize; 2]; 2],
    pub roc: Vec<RocPoint>,
    /// `None` when the labels contain a single class.
    pub auc: Option<f64>,
}

pub fn confusion_matrix(y: &[u8], pred: &[u8]) -> [[usize; 2]; 2] {
    let mut m = [[0; 2]; 2];
    for (&t, &p) in y.iter().zip(pred) {
        m[usize::from(t)][usize::from(p)] += 1;
    }
    m
}

/// ROC points from distinct score thresholds, highest first, starting at (0, 0).
pub fn roc_curve(y: &[u8], scores: &[f64]) -> Vec<RocPoint> {
    let pos = y.iter().filter(|&&v| v == 1).count() as f64;
    let neg = y.len() as f64 - pos;
    let mut order: Vec<usize> = (0..y.len()).collect();
    order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]));
    let mut out = vec![RocPoint { threshold: f64::INFINITY, fpr: 0.0, tpr: 0.0 }];
    let (mut tp, mut fp) = (0.0, 0.0);
    for (k, &i) in order.iter().enumerate() {
        if y[i] == 1 {
            tp += 1.0;
        } else {
            fp += 1.0;
        }
        let last = k + 1 == order.len() || scores[order[k + 1]] != scores[i];
        if last {
            out.push(RocPoint {
                threshold: scores[i],
                fpr: if neg > 0.0 { fp / neg } else { 0.0 },
                tpr: if pos > 0.0 { tp / pos } else { 0.0 },
            });
        }
    }
    out
}

pub fn auc(roc: &[RocPoint]) -> f64 {
    roc.windows(2)
        .map(|w| (w[1].fpr - w[0].fpr) * (w[1].tpr + w[0].tpr) / 2.0)
        .sum()
}

pub fn evaluate_predictions(y: &[u8], pred: &[u8], scores: &[f64]) -> EvalReport {
    let n = y.len();
    let cm = confusion_matrix(y, pred);
    let correct = cm[0][0] + cm[1][1];
    let ratio = |a: usize, b: usize| if b == 0 { 0.0 } else { a as f64 / b as f64 };
    // support-weighted sums, divided by n once
    let (mut precision, mut f1) = (0.0, 0.0);
    for c in 0..2 {
        let support = cm[c][0] + cm[c][1];
        let predicted = cm[0][c] + cm[1][c];
        let p = ratio(cm[c][c], predicted);
        let r = ratio(cm[c][c], support);
        let f = if p + r > 0.0 { 2.0 * p * r / (p + r) } else { 0.0 };
        precision += support as f64 * p;
        f1 += support as f64 * f;
    }
    let nf = n.max(1) as f64;
    let (precision, f1) = (precision / nf, f1 / nf);
    // support * tp / support collapses to tp
    let recall = ratio(correct, n);
    let roc = roc_curve(y, scores);
    let both = cm[0][0] + cm[0][1] > 0 && cm[1][0] + cm[1][1] > 0;
    EvalReport {
        n,
        accuracy: ratio(correct, n),
        precision,
        recall,
        f1,
        confusion: cm,
        auc: both.then(|| auc(&roc)),
        roc,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn four_sample_example() {
        let r = evaluate_predictions(&[1, 1, 0, 0], &[1, 0, 0, 0], &[0.9, 0.4, 0.3, 0.1]);
        assert_eq!(r.accuracy, 0.75);
        assert!((r.precision - 5.0 / 6.0).abs() < 1e-12);
        assert_eq!(r.recall, 0.75);
        assert!((r.f1 - 0.7333333333333334).abs() < 1e-12);
        assert_eq!(r.confusion, [[2, 0], [1, 1]]);
        assert_eq!(r.auc, Some(1.0));
    }

    #[test]
    fn perfect_predictions() {
        let y = [0, 1, 1, 0, 1];
        let r = evaluate_predictions(&y, &y, &[0.0, 1.0, 1.0, 0.0, 1.0]);
        assert_eq!((r.accuracy, r.precision, r.recall, r.f1), (1.0, 1.0, 1.0, 1.0));
    }

    #[test]
    fn tied_scores_give_diagonal() {
        let r = roc_curve(&[0, 1, 0, 1], &[0.5; 4]);
        assert_eq!(r.len(), 2);
        assert_eq!(auc(&r), 0.5);
    }

    proptest::proptest! {
        #[test]
        fn weighted_recall_is_accuracy(pairs in proptest::collection::vec((0u8..2, 0u8..2), 1..60)) {
            let (y, p): (Vec<u8>, Vec<u8>) = pairs.into_iter().unzip();
            let s: Vec<f64> = p.iter().map(|&v| f64::from(v)).collect();
            let r = evaluate_predictions(&y, &p, &s);
            proptest::prop_assert_eq!(r.recall, r.accuracy);
            let total: usize = r.confusion.iter().flatten().sum();
            proptest::prop_assert_eq!(total, y.len());
        }
    }
}
