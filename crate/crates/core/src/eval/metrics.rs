//! F1, the majority baseline and ROC AUC.

use crate::error::{Error, Result};
use crate::kg::PerformanceLabel;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct Confusion {
    pub tp: usize,
    pub fp: usize,
    pub fn_: usize,
    pub tn: usize,
}

pub fn confusion(labels: &[PerformanceLabel], predictions: &[PerformanceLabel], positive: PerformanceLabel) -> Confusion {
    assert_eq!(labels.len(), predictions.len(), "labels and predictions differ in length");
    let mut c = Confusion::default();
    for (&l, &p) in labels.iter().zip(predictions) {
        match (l == positive, p == positive) {
            (true, true) => c.tp += 1,
            (false, true) => c.fp += 1,
            (true, false) => c.fn_ += 1,
            (false, false) => c.tn += 1,
        }
    }
    c
}

/// 2TP / (2TP + FP + FN), 0 when the denominator is 0.
pub fn f1(labels: &[PerformanceLabel], predictions: &[PerformanceLabel], positive: PerformanceLabel) -> f64 {
    let c = confusion(labels, predictions, positive);
    let denom = 2 * c.tp + c.fp + c.fn_;
    if denom == 0 {
        0.0
    } else {
        (2 * c.tp) as f64 / denom as f64
    }
}

/// Most frequent label; a tie resolves to `not_solved`.
pub fn majority_class(labels: &[PerformanceLabel]) -> Result<PerformanceLabel> {
    if labels.is_empty() {
        return Err(Error::InvalidInput("majority class of an empty label set".into()));
    }
    let solved = labels.iter().filter(|l| l.is_solved()).count();
    Ok(PerformanceLabel::from_solved(2 * solved > labels.len()))
}

/// The constant classifier fitted on `train` and its F1 on `test` with the
/// predicted class as positive. Returns (class, F1).
pub fn majority_baseline(train: &[PerformanceLabel], test: &[PerformanceLabel]) -> Result<(PerformanceLabel, f64)> {
    let class = majority_class(train)?;
    let preds = vec![class; test.len()];
    Ok((class, f1(test, &preds, class)))
}

/// Mann–Whitney U / (n_pos · n_neg) with tied scores sharing average ranks.
pub fn auc_roc(positive: &[bool], scores: &[f64]) -> Result<f64> {
    if positive.len() != scores.len() {
        return Err(Error::DimensionMismatch {
            expected: positive.len(),
            got: scores.len(),
        });
    }
    let n_pos = positive.iter().filter(|&&p| p).count();
    let n_neg = positive.len() - n_pos;
    if n_pos == 0 || n_neg == 0 {
        return Err(Error::Undefined("AUC needs both classes".into()));
    }
    if scores.iter().any(|s| s.is_nan()) {
        return Err(Error::InvalidInput("AUC scores must not be NaN".into()));
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[a].total_cmp(&scores[b]));
    let mut rank_sum = 0.0;
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && scores[order[j + 1]] == scores[order[i]] {
            j += 1;
        }
        // ranks are 1-based; the group i..=j shares their mean
        let avg = (i + j) as f64 / 2.0 + 1.0;
        for &idx in &order[i..=j] {
            if positive[idx] {
                rank_sum += avg;
            }
        }
        i = j + 1;
    }
    let u = rank_sum - (n_pos * (n_pos + 1)) as f64 / 2.0;
    Ok(u / (n_pos as f64 * n_neg as f64))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::seed::SeedMixer;
    use rand::Rng;
    use PerformanceLabel::{NotSolved as N, Solved as S};

    #[test]
    fn f1_examples() {
        assert_eq!(f1(&[S, N, S], &[S, N, S], S), 1.0);
        // TP=1, FP=1, FN=1
        assert_eq!(f1(&[S, N, S], &[S, S, N], S), 0.5);
        assert_eq!(f1(&[N, N], &[N, N], S), 0.0);
    }

    #[test]
    fn baseline_examples() {
        let (c, b) = majority_baseline(&[S, S, N], &[S, N]).unwrap();
        assert_eq!(c, S);
        assert!((b - 2.0 / 3.0).abs() < 1e-15);
        assert_eq!(majority_baseline(&[N], &[N, N]).unwrap().1, 1.0);
        assert_eq!(majority_class(&[S, N]).unwrap(), N);
        assert!(majority_class(&[]).is_err());
    }

    #[test]
    fn baseline_follows_prevalence_formula() {
        for n_major in 0..=40usize {
            let n = 40;
            let q = n_major as f64 / n as f64;
            let test: Vec<_> = (0..n).map(|i| if i < n_major { N } else { S }).collect();
            let (_, b) = majority_baseline(&[N, N, S], &test).unwrap();
            assert!((b - 2.0 * q / (1.0 + q)).abs() < 1e-12);
        }
        let (_, b) = majority_baseline(&[S], &[&[S; 988][..], &[N; 12][..]].concat()).unwrap();
        assert!((b - 0.994).abs() < 5e-4);
    }

    #[test]
    fn auc_examples() {
        assert_eq!(auc_roc(&[false, false, true, true], &[0.1, 0.2, 0.3, 0.4]).unwrap(), 1.0);
        assert_eq!(auc_roc(&[true, true, false, false], &[0.1, 0.2, 0.3, 0.4]).unwrap(), 0.0);
        assert_eq!(auc_roc(&[true, false, true, false], &[1.0; 4]).unwrap(), 0.5);
        assert!(matches!(auc_roc(&[true, true], &[0.1, 0.2]), Err(Error::Undefined(_))));
    }

    #[test]
    fn f1_and_auc_match_brute_force() {
        let mut rng = SeedMixer::new(12).rng();
        for _ in 0..300 {
            let n = rng.gen_range(2..60);
            let labels: Vec<_> = (0..n).map(|_| PerformanceLabel::from_solved(rng.gen_bool(0.4))).collect();
            let preds: Vec<_> = (0..n).map(|_| PerformanceLabel::from_solved(rng.gen_bool(0.5))).collect();
            for pos in [S, N] {
                let (mut tp, mut fp, mut fn_) = (0, 0, 0);
                for i in 0..n {
                    tp += (labels[i] == pos && preds[i] == pos) as usize;
                    fp += (labels[i] != pos && preds[i] == pos) as usize;
                    fn_ += (labels[i] == pos && preds[i] != pos) as usize;
                }
                let want = if tp + fp + fn_ == 0 { 0.0 } else { 2.0 * tp as f64 / (2 * tp + fp + fn_) as f64 };
                assert_eq!(f1(&labels, &preds, pos), want);
            }
            let is_pos: Vec<bool> = labels.iter().map(|l| l.is_solved()).collect();
            let scores: Vec<f64> = (0..n).map(|_| rng.gen_range(0..8) as f64).collect();
            let mut pairs = 0.0;
            let mut good = 0.0;
            for i in 0..n {
                for j in 0..n {
                    if is_pos[i] && !is_pos[j] {
                        pairs += 1.0;
                        good += if scores[i] > scores[j] { 1.0 } else if scores[i] == scores[j] { 0.5 } else { 0.0 };
                    }
                }
            }
            if pairs > 0.0 {
                assert!((auc_roc(&is_pos, &scores).unwrap() - good / pairs).abs() < 1e-12);
            }
        }
    }
}
