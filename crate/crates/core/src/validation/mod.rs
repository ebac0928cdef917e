//! Purged walk-forward folds, seeded random search and classification metrics.

mod folds;
mod metrics;
mod search;

use thiserror::Error;

pub use folds::{build_purged_folds, study_fold_boundaries, Fold, FoldBoundary, FoldPlan};
pub use metrics::{auc, confusion, evaluate, log_loss, Confusion, MetricsReport, LOG_LOSS_EPS};
pub use search::{evaluate_candidates, prepare_folds, random_search, FoldData, SearchOptions, SearchResult, SkippedFold, Trial};

use crate::classifiers::ModelError;

#[derive(Debug, Error)]
pub enum ValidationError {
    #[error("fold {fold}: {reason}")]
    BadFold { fold: usize, reason: String },
    #[error("fold {fold}: no training rows remain after purging")]
    EmptyTrain { fold: usize },
    #[error("fold {fold}: no test rows")]
    EmptyTest { fold: usize },
    #[error("prediction and label lengths differ ({0} vs {1})")]
    LengthMismatch(usize, usize),
    #[error("cannot evaluate an empty prediction set")]
    Empty,
    #[error("no fold has enough training data for search")]
    NoUsableFolds,
    #[error("every search trial failed; first error: {0}")]
    AllTrialsFailed(String),
    #[error("search needs at least one iteration")]
    NoIterations,
    #[error(transparent)]
    Model(#[from] ModelError),
}

pub type Result<T> = std::result::Result<T, ValidationError>;
