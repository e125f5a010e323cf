//! AUC, log loss and size-weighted federated averaging of metrics.

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::nn::loss::bce_loss;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum AucMode {
    /// Mann–Whitney statistic, ties counted as one half.
    #[default]
    Exact,
    /// Trapezoidal ROC area over thresholds 0, 1/9, …, 1.
    Thresholded10,
}

fn class_counts(labels: &[u8]) -> Result<(usize, usize)> {
    let mut pos = 0;
    for &l in labels {
        match l {
            0 => {}
            1 => pos += 1,
            _ => return Err(invalid!("label {l} is not binary")),
        }
    }
    let neg = labels.len() - pos;
    if pos == 0 || neg == 0 {
        return Err(Error::Undefined("AUC needs both classes".into()));
    }
    Ok((pos, neg))
}

pub fn auc(scores: &[f64], labels: &[u8], mode: AucMode) -> Result<f64> {
    if scores.len() != labels.len() {
        return Err(Error::Shape(format!("{} scores for {} labels", scores.len(), labels.len())));
    }
    if let Some(s) = scores.iter().find(|s| s.is_nan()) {
        return Err(Error::NonFinite(format!("score {s}")));
    }
    let (pos, neg) = class_counts(labels)?;
    Ok(match mode {
        AucMode::Exact => exact_auc(scores, labels, pos, neg),
        AucMode::Thresholded10 => thresholded_auc(scores, labels, pos, neg, 10),
    })
}

fn exact_auc(scores: &[f64], labels: &[u8], pos: usize, neg: usize) -> f64 {
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[a].total_cmp(&scores[b]));
    // Sum of 1-based ranks of positives, tied groups sharing their mean rank.
    let mut rank_sum = 0.0;
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && scores[order[j + 1]] == scores[order[i]] {
            j += 1;
        }
        let mean_rank = (i + j + 2) as f64 / 2.0;
        let positives = order[i..=j].iter().filter(|&&k| labels[k] == 1).count();
        rank_sum += mean_rank * positives as f64;
        i = j + 1;
    }
    let p = pos as f64;
    (rank_sum - p * (p + 1.0) / 2.0) / (p * neg as f64)
}

fn thresholded_auc(scores: &[f64], labels: &[u8], pos: usize, neg: usize, n_thresholds: usize) -> f64 {
    let mut points = vec![(0.0, 0.0), (1.0, 1.0)];
    for i in 0..n_thresholds {
        let t = i as f64 / (n_thresholds - 1) as f64;
        let (mut tp, mut fp) = (0usize, 0usize);
        for (s, l) in scores.iter().zip(labels) {
            if *s > t {
                if *l == 1 {
                    tp += 1;
                } else {
                    fp += 1;
                }
            }
        }
        points.push((fp as f64 / neg as f64, tp as f64 / pos as f64));
    }
    points.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.total_cmp(&b.1)));
    points
        .windows(2)
        .map(|w| (w[1].0 - w[0].0) * (w[1].1 + w[0].1) / 2.0)
        .sum()
}

/// Mean binary cross-entropy with the same clamping as training.
pub fn logloss(probs: &[f64], labels: &[u8]) -> Result<f64> {
    let y: Vec<f64> = labels.iter().map(|&l| f64::from(l)).collect();
    Ok(bce_loss(probs, &y)?.0)
}

/// `Σ_i (|D_i| / |D|)·value_i`.
pub fn federated_metric(values: &[f64], sizes: &[usize]) -> Result<f64> {
    if values.len() != sizes.len() {
        return Err(Error::Shape(format!("{} values for {} sizes", values.len(), sizes.len())));
    }
    if values.is_empty() || sizes.iter().any(|&s| s == 0) {
        return Err(invalid!("federated metric needs clients with positive sizes"));
    }
    let total: usize = sizes.iter().sum();
    Ok(values
        .iter()
        .zip(sizes)
        .map(|(v, &n)| v * (n as f64 / total as f64))
        .sum())
}
