use serde::{Deserialize, Serialize};

use crate::error::{GmcError, Result};

/// Rank-based (Mann-Whitney) area under the ROC curve; ties count one half.
pub fn roc_auc(scores: &[f64], labels: &[u8]) -> Result<f64> {
    if scores.len() != labels.len() {
        return Err(GmcError::dim(
            "eval::roc_auc",
            format!("{} scores for {} labels", scores.len(), labels.len()),
        ));
    }
    if scores.iter().any(|s| s.is_nan()) {
        return Err(GmcError::invalid("eval::roc_auc", "NaN score"));
    }
    let pos = labels.iter().filter(|&&l| l == 1).count();
    let neg = labels.iter().filter(|&&l| l == 0).count();
    if pos + neg != labels.len() {
        return Err(GmcError::invalid("eval::roc_auc", "labels must be 0 or 1"));
    }
    if pos == 0 || neg == 0 {
        return Err(GmcError::invalid(
            "eval::roc_auc",
            "both classes must be present",
        ));
    }
    let mut idx: Vec<usize> = (0..scores.len()).collect();
    idx.sort_by(|&a, &b| scores[a].total_cmp(&scores[b]));
    // Average 1-based ranks over tie groups.
    let mut rank_sum_pos = 0.0;
    let mut start = 0;
    while start < idx.len() {
        let mut end = start + 1;
        while end < idx.len() && scores[idx[end]] == scores[idx[start]] {
            end += 1;
        }
        let avg_rank = (start + 1 + end) as f64 / 2.0;
        for &i in &idx[start..end] {
            if labels[i] == 1 {
                rank_sum_pos += avg_rank;
            }
        }
        start = end;
    }
    let (p, n) = (pos as f64, neg as f64);
    Ok((rank_sum_pos - p * (p + 1.0) / 2.0) / (p * n))
}

/// Fraction of correct decisions at threshold 0.5 (`p >= 0.5` predicts 1).
pub fn accuracy(probs: &[f64], labels: &[u8]) -> Result<f64> {
    if probs.len() != labels.len() || probs.is_empty() {
        return Err(GmcError::dim(
            "eval::accuracy",
            format!("{} probabilities for {} labels", probs.len(), labels.len()),
        ));
    }
    let hits = probs
        .iter()
        .zip(labels)
        .filter(|(&p, &l)| u8::from(p >= 0.5) == l)
        .count();
    Ok(hits as f64 / probs.len() as f64)
}

/// Mean and population standard deviation; NaN entries are skipped.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub mean: f64,
    pub std: f64,
    pub count: usize,
}

impl Summary {
    pub fn of(values: &[f64]) -> Summary {
        let v: Vec<f64> = values.iter().copied().filter(|x| !x.is_nan()).collect();
        if v.is_empty() {
            return Summary {
                mean: f64::NAN,
                std: f64::NAN,
                count: 0,
            };
        }
        let n = v.len() as f64;
        let mean = v.iter().sum::<f64>() / n;
        let var = v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n;
        Summary {
            mean,
            std: var.sqrt(),
            count: v.len(),
        }
    }
}
