//! k-nearest neighbours by Euclidean distance on standardized features.

use serde::{Deserialize, Serialize};

use super::scaling::Standardizer;
use super::{Dataset, ModelError, Result};
use crate::Matrix;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KnnParams {
    pub k: usize,
}

impl Default for KnnParams {
    fn default() -> Self {
        Self { k: 5 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KnnModel {
    pub k: usize,
    pub scaler: Standardizer,
    pub points: Matrix,
    pub labels: Vec<u8>,
}

impl KnnModel {
    /// Training-row indices of the `k` nearest points; equal distances keep
    /// the lower index first.
    pub fn neighbors(&self, row: &[f64]) -> Vec<usize> {
        let z = self.scaler.transform_row(row);
        let mut d: Vec<(f64, usize)> = self
            .points
            .iter_rows()
            .enumerate()
            .map(|(i, p)| (p.iter().zip(&z).map(|(a, b)| (a - b) * (a - b)).sum(), i))
            .collect();
        d.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
        d.into_iter().take(self.k).map(|(_, i)| i).collect()
    }

    pub fn proba_row(&self, row: &[f64]) -> f64 {
        let nn = self.neighbors(row);
        nn.iter().filter(|&&i| self.labels[i] == 1).count() as f64 / nn.len() as f64
    }
}

pub(crate) fn train(data: &Dataset, p: &KnnParams) -> Result<KnnModel> {
    if p.k < 1 || p.k > data.len() {
        return Err(ModelError::BadHyperparams(format!(
            "k = {} with {} training rows",
            p.k,
            data.len()
        )));
    }
    data.check_trainable(1)?;
    let scaler = Standardizer::fit(data.x.data());
    Ok(KnnModel {
        k: p.k,
        points: scaler.transform(data.x.data()),
        scaler,
        labels: data.y.clone(),
    })
}
