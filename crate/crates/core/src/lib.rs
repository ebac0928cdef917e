//! Daily price-direction classification for crypto assets.
//!
//! The crate covers the whole experiment:
//!
//! - [`market_data`]: per-exchange OHLCV ingest, volume-weighted merge, gap
//!   imputation and next-day direction labels.
//! - [`indicators`]: the volume/volatility/trend/momentum indicator catalog,
//!   batch and streaming, producing a [`indicators::FeatureFrame`].
//! - [`classifiers`]: nine level-0 learners (two boosted-tree configurations,
//!   random forest, SVM, KNN, elastic-net logistic regression, naive Bayes,
//!   LDA and QDA) behind one train/predict interface.
//! - [`validation`]: purged walk-forward folds, seeded random search and
//!   classification metrics.
//! - [`stacking`]: level-one data and the one-hidden-layer meta-learner.
//! - [`importance`]: partial dependence, PDP-based importance and the
//!   combined importance of a stacked model.
//! - [`pipeline`]: config-driven orchestration, artifacts, manifest and reports.

pub mod classifiers;
pub mod importance;
pub mod indicators;
pub mod market_data;
pub mod matrix;
pub mod pipeline;
pub mod rng;
pub mod stacking;
pub mod synthetic;
pub mod validation;

pub use chrono::NaiveDate;
pub use matrix::Matrix;

use serde::{Deserialize, Serialize};

/// Inclusive calendar-date interval.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct DateRange {
    pub start: NaiveDate,
    pub end: NaiveDate,
}

impl DateRange {
    pub fn new(start: NaiveDate, end: NaiveDate) -> Self {
        Self { start, end }
    }

    pub fn contains(&self, date: NaiveDate) -> bool {
        self.start <= date && date <= self.end
    }

    pub fn overlaps(&self, other: &DateRange) -> bool {
        self.start <= other.end && other.start <= self.end
    }

    pub fn is_empty(&self) -> bool {
        self.start > self.end
    }
}

impl std::fmt::Display for DateRange {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}..{}", self.start, self.end)
    }
}
