//! Evaluation scores: ROC-AUC, F1 and clamped R².

use std::collections::BTreeSet;

use crate::dataset::TaskKind;
use crate::error::{Error, Result};

/// Area under the ROC curve in the Mann–Whitney form: the fraction of
/// (positive, negative) pairs ranked correctly, ties counting one half.
/// `labels` are 0 (negative) or 1 (positive).
pub fn roc_auc(labels: &[u32], scores: &[f64]) -> Result<f64> {
    if labels.len() != scores.len() {
        return Err(Error::Metric(format!(
            "{} labels vs {} scores",
            labels.len(),
            scores.len()
        )));
    }
    let n_pos = labels.iter().filter(|&&l| l == 1).count() as u128;
    let n_neg = labels.len() as u128 - n_pos;
    if n_pos == 0 || n_neg == 0 {
        return Err(Error::Metric("roc_auc needs both classes".into()));
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[a].total_cmp(&scores[b]));
    // twice the Mann–Whitney U, kept integral so the result is exact
    let mut twice_u: u128 = 0;
    let mut neg_below: u128 = 0;
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        let (mut pos, mut neg) = (0u128, 0u128);
        while j < order.len() && scores[order[j]].total_cmp(&scores[order[i]]).is_eq() {
            if labels[order[j]] == 1 {
                pos += 1;
            } else {
                neg += 1;
            }
            j += 1;
        }
        twice_u += 2 * pos * neg_below + pos * neg;
        neg_below += neg;
        i = j;
    }
    Ok(twice_u as f64 / (2 * n_pos * n_neg) as f64)
}

/// Binary F1 on class 1 for `Binclass`; macro-averaged F1 over every class
/// seen in either list otherwise.
pub fn f1_score(labels: &[u32], predictions: &[u32], task: TaskKind) -> Result<f64> {
    if labels.is_empty() || labels.len() != predictions.len() {
        return Err(Error::Metric(format!(
            "f1 needs equal non-empty inputs, got {} and {}",
            labels.len(),
            predictions.len()
        )));
    }
    let class_f1 = |c: u32| {
        let (mut tp, mut fp, mut fneg) = (0usize, 0usize, 0usize);
        for (&l, &p) in labels.iter().zip(predictions) {
            match (l == c, p == c) {
                (true, true) => tp += 1,
                (false, true) => fp += 1,
                (true, false) => fneg += 1,
                (false, false) => {}
            }
        }
        if tp == 0 {
            0.0
        } else {
            2.0 * tp as f64 / (2 * tp + fp + fneg) as f64
        }
    };
    Ok(match task {
        TaskKind::Binclass => class_f1(1),
        _ => {
            let classes: BTreeSet<u32> = labels.iter().chain(predictions).copied().collect();
            classes.iter().map(|&c| class_f1(c)).sum::<f64>() / classes.len() as f64
        }
    })
}

/// `max(0, 1 − SS_res / SS_tot)`.
pub fn r2_normalized(y_true: &[f64], y_pred: &[f64]) -> Result<f64> {
    if y_true.len() < 2 || y_true.len() != y_pred.len() {
        return Err(Error::Metric(format!(
            "r2 needs at least two paired values, got {} and {}",
            y_true.len(),
            y_pred.len()
        )));
    }
    let mean = y_true.iter().sum::<f64>() / y_true.len() as f64;
    let ss_tot: f64 = y_true.iter().map(|y| (y - mean).powi(2)).sum();
    if ss_tot == 0.0 {
        return Err(Error::Metric("r2 undefined for a constant target".into()));
    }
    let ss_res: f64 = y_true.iter().zip(y_pred).map(|(y, p)| (y - p).powi(2)).sum();
    Ok((1.0 - ss_res / ss_tot).max(0.0))
}
