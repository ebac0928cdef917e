//! Gradient-boosted trees on the logistic loss with leaf regularization.

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::tree::{grow, Binned, GrowInput, Tree, TreeConfig};
use super::{sigmoid, softplus, Dataset, ModelError, Result};
use crate::rng::rng_from_seed;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GbtParams {
    pub max_depth: usize,
    pub min_child_weight: f64,
    pub subsample: f64,
    pub colsample_bytree: f64,
    pub reg_alpha: f64,
    pub reg_lambda: f64,
    pub gamma: f64,
    pub n_estimators: usize,
    pub learning_rate: f64,
    /// Leaf budget for leaf-wise growth (histogram configuration only).
    pub num_leaves: usize,
    /// Bin count for the histogram configuration.
    pub max_bin: usize,
}

impl Default for GbtParams {
    fn default() -> Self {
        Self {
            max_depth: 6,
            min_child_weight: 1.0,
            subsample: 1.0,
            colsample_bytree: 1.0,
            reg_alpha: 0.0,
            reg_lambda: 1.0,
            gamma: 0.0,
            n_estimators: 100,
            learning_rate: 0.1,
            num_leaves: 31,
            max_bin: 64,
        }
    }
}

impl GbtParams {
    fn validate(&self) -> Result<()> {
        let frac = |v: f64| v > 0.0 && v <= 1.0;
        let ok = self.max_depth >= 1
            && self.min_child_weight >= 0.0
            && frac(self.subsample)
            && frac(self.colsample_bytree)
            && self.reg_alpha >= 0.0
            && self.reg_lambda >= 0.0
            && self.gamma >= 0.0
            && self.learning_rate > 0.0
            && self.num_leaves >= 2
            && self.max_bin >= 2;
        // NaN fails every comparison above.
        if ok {
            Ok(())
        } else {
            Err(ModelError::BadHyperparams(format!("{self:?}")))
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) enum Config {
    /// Exact greedy splits, level-wise growth.
    Exact,
    /// Binned splits, leaf-wise growth, category sorting on declared columns.
    Histogram,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GbtModel {
    /// Prior log-odds every prediction starts from.
    pub base_score: f64,
    /// Trees with the learning rate already folded into the leaves.
    pub trees: Vec<Tree>,
    /// Mean training log-loss before the first tree and after each round.
    pub train_loss: Vec<f64>,
}

impl GbtModel {
    pub fn margin(&self, row: &[f64]) -> f64 {
        self.base_score + self.trees.iter().map(|t| t.predict(row)).sum::<f64>()
    }

    pub fn proba_row(&self, row: &[f64]) -> f64 {
        sigmoid(self.margin(row))
    }

    pub fn max_abs_leaf(&self) -> f64 {
        self.trees
            .iter()
            .flat_map(|t| t.leaf_values())
            .fold(0.0, |m, v| m.max(v.abs()))
    }
}

fn mean_log_loss(margin: &[f64], y: &[f64]) -> f64 {
    // -[y ln σ(F) + (1-y) ln(1-σ(F))] = softplus(F) - y F
    margin
        .iter()
        .zip(y)
        .map(|(f, y)| softplus(*f) - y * f)
        .sum::<f64>()
        / y.len() as f64
}

fn sample_sorted<R: Rng>(rng: &mut R, n: usize, frac: f64) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..n).collect();
    if frac >= 1.0 {
        return idx;
    }
    let m = ((frac * n as f64).round() as usize).clamp(1, n);
    for k in 0..m {
        let j = rng.gen_range(k..n);
        idx.swap(k, j);
    }
    idx.truncate(m);
    idx.sort_unstable();
    idx
}

pub(crate) fn train(data: &Dataset, p: &GbtParams, config: Config, seed: u64) -> Result<GbtModel> {
    p.validate()?;
    data.check_trainable(20)?;
    let x = data.x.data();
    let n = data.len();
    let y: Vec<f64> = data.y.iter().map(|&v| f64::from(v)).collect();
    let prior = y.iter().sum::<f64>() / n as f64;
    let base_score = (prior / (1.0 - prior)).ln();

    let all: Vec<usize> = (0..n).collect();
    let binned = match config {
        Config::Histogram => Some(Binned::new(x, &all, p.max_bin)),
        Config::Exact => None,
    };
    let mut categorical = vec![false; x.cols()];
    if config == Config::Histogram {
        for &c in &data.categorical {
            if c < categorical.len() {
                categorical[c] = true;
            }
        }
    }
    let cfg = TreeConfig {
        max_depth: p.max_depth,
        max_leaves: match config {
            Config::Histogram => Some(p.num_leaves),
            Config::Exact => None,
        },
        min_child_weight: p.min_child_weight,
        min_samples_leaf: 1,
        min_samples_split: 2,
        lambda: p.reg_lambda,
        alpha: p.reg_alpha,
        gamma: p.gamma,
        node_features: None,
    };

    let mut rng = rng_from_seed(seed);
    let mut margin = vec![base_score; n];
    let mut train_loss = vec![mean_log_loss(&margin, &y)];
    let mut trees = Vec::with_capacity(p.n_estimators);
    for _ in 0..p.n_estimators {
        let rows = sample_sorted(&mut rng, n, p.subsample);
        let features = sample_sorted(&mut rng, x.cols(), p.colsample_bytree);
        let mut g = Vec::with_capacity(rows.len());
        let mut h = Vec::with_capacity(rows.len());
        for &r in &rows {
            let pr = sigmoid(margin[r]);
            g.push(pr - y[r]);
            h.push((pr * (1.0 - pr)).max(1e-16));
        }
        let inp = GrowInput {
            x,
            rows: &rows,
            g: &g,
            h: &h,
            features: &features,
            categorical: &categorical,
            binned: binned.as_ref(),
        };
        let mut tree = grow(&inp, &cfg, &mut rng);
        tree.scale_leaves(p.learning_rate);
        for (r, m) in margin.iter_mut().enumerate() {
            *m += tree.predict(x.row(r));
        }
        train_loss.push(mean_log_loss(&margin, &y));
        trees.push(tree);
    }
    Ok(GbtModel {
        base_score,
        trees,
        train_loss,
    })
}
