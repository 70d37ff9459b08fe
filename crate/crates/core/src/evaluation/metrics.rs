//! Ranking metrics with exact tie handling.

use alloc::vec::Vec;

use crate::{Error, Result};

fn check(scores: &[f64], labels: &[u8]) -> Result<(u64, u64)> {
    if scores.len() != labels.len() {
        return Err(Error::length("metric labels", scores.len(), labels.len()));
    }
    if scores.iter().any(|s| s.is_nan()) {
        return Err(Error::NonFinite("metric scores contain NaN".into()));
    }
    let pos = labels.iter().filter(|&&y| y != 0).count() as u64;
    Ok((pos, labels.len() as u64 - pos))
}

/// `(score, positives, negatives)` per distinct score, descending.
fn groups(scores: &[f64], labels: &[u8]) -> Vec<(f64, u64, u64)> {
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]));
    let mut out: Vec<(f64, u64, u64)> = Vec::new();
    for i in order {
        let (p, n) = if labels[i] != 0 { (1, 0) } else { (0, 1) };
        match out.last_mut() {
            Some(g) if g.0 == scores[i] => {
                g.1 += p;
                g.2 += n;
            }
            _ => out.push((scores[i], p, n)),
        }
    }
    out
}

/// Probability that a random positive outscores a random negative, ties
/// counting one half.
pub fn auc(scores: &[f64], labels: &[u8]) -> Result<f64> {
    let (np, nn) = check(scores, labels)?;
    if np == 0 || nn == 0 {
        return Err(Error::data("auc needs both classes"));
    }
    let mut neg_below = nn;
    let (mut wins, mut ties) = (0u64, 0u64);
    for (_, p, n) in groups(scores, labels) {
        neg_below -= n;
        wins += p * neg_below;
        ties += p * n;
    }
    Ok((2 * wins + ties) as f64 / (2 * np * nn) as f64)
}

/// Average precision: precision at each distinct threshold weighted by the
/// recall it adds.
pub fn auprc(scores: &[f64], labels: &[u8]) -> Result<f64> {
    let (np, _) = check(scores, labels)?;
    if np == 0 {
        return Err(Error::data("auprc needs at least one positive"));
    }
    let (mut tp, mut fp) = (0u64, 0u64);
    let mut ap = 0.0;
    for (_, p, n) in groups(scores, labels) {
        tp += p;
        fp += n;
        if p > 0 {
            ap += p as f64 / np as f64 * (tp as f64 / (tp + fp) as f64);
        }
    }
    Ok(ap)
}

/// Recall at the smallest threshold whose specificity reaches
/// `spec_target`; samples with `score >= threshold` are predicted positive.
pub fn recall_at_specificity(scores: &[f64], labels: &[u8], spec_target: f64) -> Result<f64> {
    let (np, nn) = check(scores, labels)?;
    if np == 0 || nn == 0 {
        return Err(Error::data("recall at specificity needs both classes"));
    }
    let g = groups(scores, labels);
    // Walk thresholds from high to low, keeping the last one that still
    // meets the target.
    let (mut tp, mut fp) = (0u64, 0u64);
    let mut best_tp = 0u64;
    for (_, p, n) in g {
        tp += p;
        fp += n;
        let spec = (nn - fp) as f64 / nn as f64;
        if spec >= spec_target {
            best_tp = tp;
        } else {
            break;
        }
    }
    Ok(best_tp as f64 / np as f64)
}

/// Maximum F1 over all distinct score thresholds.
pub fn best_f1(scores: &[f64], labels: &[u8]) -> Result<f64> {
    let (np, _) = check(scores, labels)?;
    if np == 0 {
        return Err(Error::data("best F1 needs at least one positive"));
    }
    let (mut tp, mut fp) = (0u64, 0u64);
    let mut best = 0.0f64;
    for (_, p, n) in groups(scores, labels) {
        tp += p;
        fp += n;
        let f1 = (2 * tp) as f64 / (2 * tp + fp + (np - tp)) as f64;
        best = best.max(f1);
    }
    Ok(best)
}
