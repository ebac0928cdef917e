//! Gaussian naive Bayes evaluated in log space.

use serde::{Deserialize, Serialize};

use super::{sigmoid, Dataset, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NaiveBayesModel {
    /// Indexed by class label.
    pub log_prior: [f64; 2],
    pub mean: [Vec<f64>; 2],
    pub var: [Vec<f64>; 2],
}

impl NaiveBayesModel {
    /// Log of prior times class-conditional density.
    pub fn joint_log_likelihood(&self, row: &[f64], class: usize) -> f64 {
        let ll: f64 = row
            .iter()
            .zip(&self.mean[class])
            .zip(&self.var[class])
            .map(|((x, m), v)| -0.5 * (2.0 * std::f64::consts::PI * v).ln() - (x - m) * (x - m) / (2.0 * v))
            .sum();
        self.log_prior[class] + ll
    }

    /// `[P(y=0 | x), P(y=1 | x)]`.
    pub fn posteriors(&self, row: &[f64]) -> [f64; 2] {
        let d = self.joint_log_likelihood(row, 1) - self.joint_log_likelihood(row, 0);
        [sigmoid(-d), sigmoid(d)]
    }

    pub fn proba_row(&self, row: &[f64]) -> f64 {
        self.posteriors(row)[1]
    }
}

/// Per-class maximum-likelihood means and variances. Each variance is
/// floored at `1e-9` times the feature's overall variance (or `1e-9` for a
/// constant feature) so a class-constant feature cannot produce a zero.
pub(crate) fn train(data: &Dataset) -> Result<NaiveBayesModel> {
    data.check_trainable(2)?;
    let x = data.x.data();
    let p = x.cols();
    let n = data.len() as f64;
    let mut overall_mean = vec![0.0; p];
    for r in x.iter_rows() {
        for (m, v) in overall_mean.iter_mut().zip(r) {
            *m += v / n;
        }
    }
    let mut overall_var = vec![0.0; p];
    for r in x.iter_rows() {
        for ((s, v), m) in overall_var.iter_mut().zip(r).zip(&overall_mean) {
            *s += (v - m) * (v - m) / n;
        }
    }
    let floor: Vec<f64> = overall_var
        .iter()
        .map(|&v| if v > 0.0 { 1e-9 * v } else { 1e-9 })
        .collect();

    let mut log_prior = [0.0; 2];
    let mut mean = [vec![0.0; p], vec![0.0; p]];
    let mut var = [vec![0.0; p], vec![0.0; p]];
    for c in 0..2 {
        let rows: Vec<&[f64]> = x
            .iter_rows()
            .zip(&data.y)
            .filter(|(_, &y)| usize::from(y) == c)
            .map(|(r, _)| r)
            .collect();
        let nc = rows.len() as f64;
        log_prior[c] = (nc / n).ln();
        for r in &rows {
            for (m, v) in mean[c].iter_mut().zip(r.iter()) {
                *m += v / nc;
            }
        }
        for r in &rows {
            for ((s, v), m) in var[c].iter_mut().zip(r.iter()).zip(&mean[c]) {
                *s += (v - m) * (v - m) / nc;
            }
        }
        for (v, f) in var[c].iter_mut().zip(&floor) {
            *v = v.max(*f);
        }
    }
    Ok(NaiveBayesModel {
        log_prior,
        mean,
        var,
    })
}
