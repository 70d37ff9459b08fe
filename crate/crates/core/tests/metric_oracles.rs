//! Ranking metrics against brute-force enumeration over thresholds and pairs.

use hhsae_core::evaluation::{auc, auprc, best_f1, recall_at_specificity};
use proptest::prelude::*;

/// Scores drawn from a small grid so ties are common; both classes present.
fn instance() -> impl Strategy<Value = (Vec<f64>, Vec<u8>)> {
    (2usize..=30)
        .prop_flat_map(|n| {
            (
                prop::collection::vec((0u8..8).prop_map(|v| f64::from(v) / 4.0 - 0.5), n),
                prop::collection::vec(0u8..2, n),
            )
        })
        .prop_filter("both classes", |(_, y)| y.contains(&0) && y.contains(&1))
}

fn counts(y: &[u8]) -> (u64, u64) {
    let p = y.iter().filter(|&&v| v == 1).count() as u64;
    (p, y.len() as u64 - p)
}

fn brute_auc(s: &[f64], y: &[u8]) -> f64 {
    let (np, nn) = counts(y);
    let (mut wins, mut ties) = (0u64, 0u64);
    for i in 0..s.len() {
        for j in 0..s.len() {
            if y[i] == 1 && y[j] == 0 {
                if s[i] > s[j] {
                    wins += 1;
                } else if s[i] == s[j] {
                    ties += 1;
                }
            }
        }
    }
    (2 * wins + ties) as f64 / (2 * np * nn) as f64
}

/// Distinct thresholds, descending.
fn thresholds(s: &[f64]) -> Vec<f64> {
    let mut t = s.to_vec();
    t.sort_by(|a, b| b.total_cmp(a));
    t.dedup();
    t
}

/// `(tp, fp)` when predicting positive for `score >= t`.
fn confusion(s: &[f64], y: &[u8], t: f64) -> (u64, u64) {
    let mut tp = 0;
    let mut fp = 0;
    for (v, l) in s.iter().zip(y) {
        if *v >= t {
            if *l == 1 {
                tp += 1;
            } else {
                fp += 1;
            }
        }
    }
    (tp, fp)
}

fn brute_ap(s: &[f64], y: &[u8]) -> f64 {
    let (np, _) = counts(y);
    let mut prev_tp = 0;
    let mut ap = 0.0;
    for t in thresholds(s) {
        let (tp, fp) = confusion(s, y, t);
        if tp > prev_tp {
            ap += (tp - prev_tp) as f64 / np as f64 * (tp as f64 / (tp + fp) as f64);
        }
        prev_tp = tp;
    }
    ap
}

fn brute_recall_at_spec(s: &[f64], y: &[u8], target: f64) -> f64 {
    let (np, nn) = counts(y);
    let mut best = 0.0f64;
    for t in thresholds(s) {
        let (tp, fp) = confusion(s, y, t);
        if (nn - fp) as f64 / nn as f64 >= target {
            best = best.max(tp as f64 / np as f64);
        }
    }
    best
}

fn brute_f1(s: &[f64], y: &[u8]) -> f64 {
    let (np, _) = counts(y);
    let mut best = 0.0f64;
    for t in thresholds(s) {
        let (tp, fp) = confusion(s, y, t);
        best = best.max((2 * tp) as f64 / (2 * tp + fp + (np - tp)) as f64);
    }
    best
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(500))]

    #[test]
    fn metrics_match_enumeration((s, y) in instance()) {
        prop_assert_eq!(auc(&s, &y).unwrap(), brute_auc(&s, &y));
        prop_assert_eq!(auprc(&s, &y).unwrap(), brute_ap(&s, &y));
        prop_assert_eq!(recall_at_specificity(&s, &y, 0.9).unwrap(), brute_recall_at_spec(&s, &y, 0.9));
        prop_assert_eq!(best_f1(&s, &y).unwrap(), brute_f1(&s, &y));
    }

    #[test]
    fn auc_ignores_monotone_transforms((s, y) in instance(), a in 0.1f64..5.0, b in -3.0f64..3.0) {
        let base = auc(&s, &y).unwrap();
        let affine: Vec<f64> = s.iter().map(|v| a * v + b).collect();
        let cubed: Vec<f64> = s.iter().map(|v| v * v * v).collect();
        let exp: Vec<f64> = s.iter().map(|v| v.exp()).collect();
        prop_assert_eq!(auc(&affine, &y).unwrap(), base);
        prop_assert_eq!(auc(&cubed, &y).unwrap(), base);
        prop_assert_eq!(auc(&exp, &y).unwrap(), base);
    }

    #[test]
    fn metrics_stay_in_unit_interval((s, y) in instance(), target in 0.0f64..1.0) {
        for v in [
            auc(&s, &y).unwrap(),
            auprc(&s, &y).unwrap(),
            recall_at_specificity(&s, &y, target).unwrap(),
            best_f1(&s, &y).unwrap(),
        ] {
            prop_assert!((0.0..=1.0).contains(&v));
        }
    }
}

#[test]
fn reversed_scores_flip_auc() {
    let y = [1, 0, 1, 0, 0, 1];
    let s = [0.3, 0.1, 0.8, 0.5, 0.2, 0.4];
    let neg: Vec<f64> = s.iter().map(|v| -v).collect();
    let a = auc(&s, &y).unwrap();
    assert!((a + auc(&neg, &y).unwrap() - 1.0).abs() < 1e-15);
}
