//! Bagged classification trees with per-node feature sampling.

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::tree::{grow, GrowInput, Tree, TreeConfig};
use super::{Dataset, ModelError, Result};
use crate::rng::{derive_seed, rng_from_seed};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ForestParams {
    pub n_estimators: usize,
    pub max_depth: usize,
    pub min_samples_split: usize,
    pub min_samples_leaf: usize,
    /// Fraction of features drawn at each node.
    pub max_features: f64,
    pub bootstrap: bool,
}

impl Default for ForestParams {
    fn default() -> Self {
        Self {
            n_estimators: 100,
            max_depth: 32,
            min_samples_split: 2,
            min_samples_leaf: 1,
            max_features: 0.5,
            bootstrap: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ForestModel {
    pub trees: Vec<Tree>,
    /// Out-of-bag accuracy over rows left out by at least one tree.
    pub oob_accuracy: Option<f64>,
}

impl ForestModel {
    /// Mean of the member trees' class-1 fractions.
    pub fn proba_row(&self, row: &[f64]) -> f64 {
        self.trees.iter().map(|t| t.predict(row)).sum::<f64>() / self.trees.len() as f64
    }
}

pub(crate) fn train(data: &Dataset, p: &ForestParams, seed: u64) -> Result<ForestModel> {
    if p.n_estimators == 0
        || p.max_depth == 0
        || p.min_samples_leaf == 0
        || !(p.max_features > 0.0 && p.max_features <= 1.0)
    {
        return Err(ModelError::BadHyperparams(format!("{p:?}")));
    }
    data.check_trainable(20)?;
    let x = data.x.data();
    let n = data.len();
    let n_feat = x.cols();
    let features: Vec<usize> = (0..n_feat).collect();
    let categorical = vec![false; n_feat];
    let per_node = ((p.max_features * n_feat as f64).round() as usize).clamp(1, n_feat);
    let cfg = TreeConfig {
        max_depth: p.max_depth,
        max_leaves: None,
        min_child_weight: 0.0,
        min_samples_leaf: p.min_samples_leaf,
        min_samples_split: p.min_samples_split,
        lambda: 0.0,
        alpha: 0.0,
        gamma: 0.0,
        node_features: (per_node < n_feat).then_some(per_node),
    };

    let fitted: Vec<(Tree, Vec<bool>)> = (0..p.n_estimators)
        .into_par_iter()
        .map(|b| {
            let mut rng = rng_from_seed(derive_seed(seed, &["tree", &b.to_string()]));
            let rows: Vec<usize> = if p.bootstrap {
                let mut r: Vec<usize> = (0..n).map(|_| rng.gen_range(0..n)).collect();
                r.sort_unstable();
                r
            } else {
                (0..n).collect()
            };
            let mut in_bag = vec![false; n];
            for &r in &rows {
                in_bag[r] = true;
            }
            let g: Vec<f64> = rows.iter().map(|&r| -f64::from(data.y[r])).collect();
            let h = vec![1.0; rows.len()];
            let inp = GrowInput {
                x,
                rows: &rows,
                g: &g,
                h: &h,
                features: &features,
                categorical: &categorical,
                binned: None,
            };
            (grow(&inp, &cfg, &mut rng), in_bag)
        })
        .collect();

    let mut votes = vec![(0.0, 0usize); n];
    for (tree, in_bag) in &fitted {
        for r in (0..n).filter(|&r| !in_bag[r]) {
            votes[r].0 += tree.predict(x.row(r));
            votes[r].1 += 1;
        }
    }
    let scored: Vec<bool> = votes
        .iter()
        .zip(&data.y)
        .filter(|(v, _)| v.1 > 0)
        .map(|(v, &y)| u8::from(v.0 / v.1 as f64 >= 0.5) == y)
        .collect();
    let oob_accuracy = (!scored.is_empty())
        .then(|| scored.iter().filter(|&&c| c).count() as f64 / scored.len() as f64);

    Ok(ForestModel {
        trees: fitted.into_iter().map(|(t, _)| t).collect(),
        oob_accuracy,
    })
}
