use chrono::{Days, NaiveDate};
use serde::{Deserialize, Serialize};

use super::{Result, ValidationError};
use crate::DateRange;

/// Unpurged fold boundaries: the training span and the following test span.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct FoldBoundary {
    pub train: DateRange,
    pub test: DateRange,
}

/// One fold after purging.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Fold {
    pub train: DateRange,
    /// Dropped tail of the original training span; `None` when purge is 0.
    pub purge: Option<DateRange>,
    pub test: DateRange,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FoldPlan {
    pub folds: Vec<Fold>,
    pub purge_days: u64,
}

impl FoldPlan {
    /// True when every fold's last training day plus `purge_days` still
    /// falls before its first test day.
    pub fn is_leakage_free(&self) -> bool {
        self.folds
            .iter()
            .all(|f| f.train.end + Days::new(self.purge_days) < f.test.start)
    }

    /// `(train, test)` positions of `index` for fold `k`.
    pub fn rows(&self, k: usize, index: &[NaiveDate]) -> (Vec<usize>, Vec<usize>) {
        let f = &self.folds[k];
        let pick = |r: &DateRange| {
            index
                .iter()
                .enumerate()
                .filter(|(_, t)| r.contains(**t))
                .map(|(i, _)| i)
                .collect()
        };
        (pick(&f.train), pick(&f.test))
    }
}

fn ymd(y: i32, m: u32, d: u32) -> NaiveDate {
    NaiveDate::from_ymd_opt(y, m, d).expect("valid calendar date")
}

fn month_end(y: i32, m: u32) -> NaiveDate {
    let (ny, nm) = if m == 12 { (y + 1, 1) } else { (y, m + 1) };
    ymd(ny, nm, 1) - Days::new(1)
}

/// Five expanding folds: training always starts 1 Aug 2017 and runs up to
/// the test month; test months are Nov 2017 through Mar 2018.
pub fn study_fold_boundaries() -> Vec<FoldBoundary> {
    let start = ymd(2017, 8, 1);
    [(2017, 11), (2017, 12), (2018, 1), (2018, 2), (2018, 3)]
        .into_iter()
        .map(|(y, m)| {
            let test_start = ymd(y, m, 1);
            FoldBoundary {
                train: DateRange::new(start, test_start - Days::new(1)),
                test: DateRange::new(test_start, month_end(y, m)),
            }
        })
        .collect()
}

/// Purges the trailing `purge_days` calendar days of each training span and
/// checks that every fold keeps at least one training and one test point of
/// `index`.
pub fn build_purged_folds(index: &[NaiveDate], boundaries: &[FoldBoundary], purge_days: u64) -> Result<FoldPlan> {
    let mut folds = Vec::with_capacity(boundaries.len());
    for (k, b) in boundaries.iter().enumerate() {
        let bad = |reason: &str| ValidationError::BadFold {
            fold: k,
            reason: reason.to_string(),
        };
        if b.train.is_empty() || b.test.is_empty() {
            return Err(bad("empty date range"));
        }
        if b.train.end >= b.test.start {
            return Err(bad("training span must end before the test span starts"));
        }
        if let Some(prev) = folds.last().map(|f: &Fold| f.test) {
            if b.test.start <= prev.end {
                return Err(bad("test spans must be ordered and non-overlapping"));
            }
        }
        let (train, purge) = if purge_days == 0 {
            (b.train, None)
        } else {
            let cut = b.train.end - Days::new(purge_days);
            let purge_start = cut + Days::new(1);
            (
                DateRange::new(b.train.start, cut),
                Some(DateRange::new(purge_start.max(b.train.start), b.train.end)),
            )
        };
        if train.is_empty() || !index.iter().any(|t| train.contains(*t)) {
            return Err(ValidationError::EmptyTrain { fold: k });
        }
        if !index.iter().any(|t| b.test.contains(*t)) {
            return Err(ValidationError::EmptyTest { fold: k });
        }
        folds.push(Fold {
            train,
            purge,
            test: b.test,
        });
    }
    Ok(FoldPlan { folds, purge_days })
}
