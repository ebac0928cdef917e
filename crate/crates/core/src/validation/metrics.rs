use serde::{Deserialize, Serialize};

use super::{Result, ValidationError};

/// The probability of the observed class is floored at `ε` before taking logs,
/// i.e. predictions are clamped to `[ε, 1 − ε]`.
pub const LOG_LOSS_EPS: f64 = 1e-15;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub window_id: String,
    /// Absent when the labels contain a single class.
    pub auc: Option<f64>,
    pub accuracy: f64,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub log_loss: f64,
    pub n: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct Confusion {
    pub tp: usize,
    pub fp: usize,
    pub tn: usize,
    pub fn_: usize,
}

pub fn confusion(pred: &[u8], y: &[u8]) -> Confusion {
    let mut c = Confusion::default();
    for (&p, &t) in pred.iter().zip(y) {
        match (p == 1, t == 1) {
            (true, true) => c.tp += 1,
            (true, false) => c.fp += 1,
            (false, false) => c.tn += 1,
            (false, true) => c.fn_ += 1,
        }
    }
    c
}

/// Mann-Whitney AUC with mid-ranks, equal to the fraction of
/// (positive, negative) pairs ranked correctly with ties counting ½.
pub fn auc(score: &[f64], y: &[u8]) -> Option<f64> {
    let n1 = y.iter().filter(|&&v| v == 1).count();
    let n0 = y.len() - n1;
    if n1 == 0 || n0 == 0 {
        return None;
    }
    let mut idx: Vec<usize> = (0..score.len()).collect();
    idx.sort_by(|&a, &b| score[a].total_cmp(&score[b]));
    // Twice the rank sum keeps mid-ranks integral.
    let mut rank2_sum: u64 = 0;
    let mut i = 0;
    while i < idx.len() {
        let mut j = i;
        while j + 1 < idx.len() && score[idx[j + 1]] == score[idx[i]] {
            j += 1;
        }
        let mid2 = (i + 1 + j + 1) as u64;
        for &k in &idx[i..=j] {
            if y[k] == 1 {
                rank2_sum += mid2;
            }
        }
        i = j + 1;
    }
    let n1u = n1 as u64;
    // U = R1 − n1(n1+1)/2; twice U is an integer.
    let u2 = rank2_sum - n1u * (n1u + 1);
    Some(u2 as f64 / 2.0 / (n1 as f64 * n0 as f64))
}

pub fn log_loss(proba: &[f64], y: &[u8]) -> f64 {
    let s: f64 = proba
        .iter()
        .zip(y)
        .map(|(&p, &t)| {
            let q = if t == 1 { p } else { 1.0 - p };
            -q.max(LOG_LOSS_EPS).ln()
        })
        .sum();
    s / y.len() as f64
}

/// Metrics of one prediction set. Precision (recall) is 0 when nothing is
/// predicted (present) positive; F1 is 0 when both are 0.
pub fn evaluate(window_id: &str, proba: &[f64], pred: &[u8], y: &[u8]) -> Result<MetricsReport> {
    if proba.len() != y.len() {
        return Err(ValidationError::LengthMismatch(proba.len(), y.len()));
    }
    if pred.len() != y.len() {
        return Err(ValidationError::LengthMismatch(pred.len(), y.len()));
    }
    if y.is_empty() {
        return Err(ValidationError::Empty);
    }
    let c = confusion(pred, y);
    let ratio = |a: usize, b: usize| if b == 0 { 0.0 } else { a as f64 / b as f64 };
    let precision = ratio(c.tp, c.tp + c.fp);
    let recall = ratio(c.tp, c.tp + c.fn_);
    let f1 = if precision + recall > 0.0 {
        2.0 * precision * recall / (precision + recall)
    } else {
        0.0
    };
    Ok(MetricsReport {
        window_id: window_id.to_string(),
        auc: auc(proba, y),
        accuracy: ratio(c.tp + c.tn, y.len()),
        precision,
        recall,
        f1,
        log_loss: log_loss(proba, y),
        n: y.len(),
    })
}
