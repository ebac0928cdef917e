use log::{info, warn};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::folds::FoldPlan;
use super::metrics::log_loss;
use super::{Result, ValidationError};
use crate::classifiers::{train, Dataset, Family, HyperparamSpace, Hyperparams, ParamPoint};
use crate::indicators::FeatureFrame;
use crate::rng::{derive_seed, stream};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SearchOptions {
    pub n_iter: usize,
    pub seed: u64,
    /// Folds with fewer training rows are left out of the search.
    pub min_train_rows: usize,
}

impl Default for SearchOptions {
    fn default() -> Self {
        Self {
            n_iter: 100,
            seed: 0,
            min_train_rows: 20,
        }
    }
}

/// Materialized train/test rows of one fold.
#[derive(Debug, Clone)]
pub struct FoldData {
    pub fold: usize,
    pub train: Dataset,
    pub test: Dataset,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SkippedFold {
    pub fold: usize,
    pub reason: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trial {
    pub index: usize,
    pub point: ParamPoint,
    /// Test log-loss per used fold, in fold order.
    pub fold_log_loss: Vec<f64>,
    pub mean_log_loss: Option<f64>,
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SearchResult {
    pub family: Family,
    pub best_trial: usize,
    pub best_point: ParamPoint,
    pub best_hyperparams: Hyperparams,
    pub best_mean_log_loss: f64,
    pub best_fold_log_loss: Vec<f64>,
    pub folds_used: Vec<usize>,
    pub skipped_folds: Vec<SkippedFold>,
    pub trials: Vec<Trial>,
}

/// Splits `frame` by `plan`, keeping folds with enough rows and both classes
/// in training.
pub fn prepare_folds(plan: &FoldPlan, frame: &FeatureFrame, min_train_rows: usize) -> (Vec<FoldData>, Vec<SkippedFold>) {
    let mut used = Vec::new();
    let mut skipped = Vec::new();
    for k in 0..plan.folds.len() {
        let (tr, te) = plan.rows(k, frame.timestamps());
        let train = frame.dataset(&tr);
        let reason = if tr.len() < min_train_rows {
            Some(format!("{} training rows, need {min_train_rows}", tr.len()))
        } else if train.positives() == 0 || train.positives() == train.len() {
            Some("training rows hold a single class".to_string())
        } else if te.is_empty() {
            Some("no test rows".to_string())
        } else {
            None
        };
        match reason {
            Some(reason) => {
                warn!("fold {k} left out of search: {reason}");
                skipped.push(SkippedFold { fold: k, reason });
            }
            None => used.push(FoldData {
                fold: k,
                train,
                test: frame.dataset(&te),
            }),
        }
    }
    (used, skipped)
}

fn run_trial(family: Family, index: usize, point: &ParamPoint, hp: &Hyperparams, folds: &[FoldData], seed: u64) -> Trial {
    let mut fold_log_loss = Vec::with_capacity(folds.len());
    for f in folds {
        let fit_seed = derive_seed(seed, &["fit", family.as_str(), &index.to_string(), &f.fold.to_string()]);
        let outcome = train(&f.train, hp, fit_seed).and_then(|m| m.predict_proba(&f.test.x));
        match outcome {
            Ok(p) => fold_log_loss.push(log_loss(&p, &f.test.y)),
            Err(e) => {
                return Trial {
                    index,
                    point: point.clone(),
                    fold_log_loss,
                    mean_log_loss: None,
                    error: Some(format!("fold {}: {e}", f.fold)),
                }
            }
        }
    }
    let mean = fold_log_loss.iter().sum::<f64>() / fold_log_loss.len() as f64;
    Trial {
        index,
        point: point.clone(),
        fold_log_loss,
        mean_log_loss: Some(mean),
        error: None,
    }
}

/// Scores each candidate point by mean fold log-loss. Trials run in
/// parallel; results come back in candidate order.
pub fn evaluate_candidates(space: &HyperparamSpace, points: &[ParamPoint], folds: &[FoldData], seed: u64) -> Vec<Trial> {
    points
        .par_iter()
        .enumerate()
        .map(|(i, p)| match space.hyperparams(p) {
            Ok(hp) => run_trial(space.family, i, p, &hp, folds, seed),
            Err(e) => Trial {
                index: i,
                point: p.clone(),
                fold_log_loss: Vec::new(),
                mean_log_loss: None,
                error: Some(e.to_string()),
            },
        })
        .collect()
}

/// Lowest mean log-loss; ties go to the earlier trial.
fn select(trials: &[Trial]) -> Option<&Trial> {
    let mut best: Option<&Trial> = None;
    for t in trials {
        if let Some(m) = t.mean_log_loss {
            if best.map_or(true, |b| m < b.mean_log_loss.unwrap()) {
                best = Some(t);
            }
        }
    }
    best
}

/// Samples `n_iter` points (one when the space is empty) from per-trial
/// substreams of `seed` and returns the argmin with the full trial log.
pub fn random_search(space: &HyperparamSpace, plan: &FoldPlan, frame: &FeatureFrame, opts: &SearchOptions) -> Result<SearchResult> {
    if opts.n_iter == 0 {
        return Err(ValidationError::NoIterations);
    }
    space.validate()?;
    let (folds, skipped_folds) = prepare_folds(plan, frame, opts.min_train_rows);
    if folds.is_empty() {
        return Err(ValidationError::NoUsableFolds);
    }
    let n = if space.is_empty() { 1 } else { opts.n_iter };
    let family = space.family.as_str();
    let points: Vec<ParamPoint> = (0..n)
        .map(|i| space.sample(&mut stream(opts.seed, &["sample", family, &i.to_string()])))
        .collect();
    let trials = evaluate_candidates(space, &points, &folds, opts.seed);
    let failed = trials.iter().filter(|t| t.error.is_some()).count();
    if failed > 0 {
        warn!("{family}: {failed} of {n} trials failed");
    }
    let best = select(&trials).ok_or_else(|| {
        ValidationError::AllTrialsFailed(trials[0].error.clone().unwrap_or_default())
    })?;
    info!(
        "{family}: best trial {} mean log-loss {:.6}",
        best.index,
        best.mean_log_loss.unwrap()
    );
    Ok(SearchResult {
        family: space.family,
        best_trial: best.index,
        best_point: best.point.clone(),
        best_hyperparams: space.hyperparams(&best.point)?,
        best_mean_log_loss: best.mean_log_loss.unwrap(),
        best_fold_log_loss: best.fold_log_loss.clone(),
        folds_used: folds.iter().map(|f| f.fold).collect(),
        skipped_folds,
        trials,
    })
}
