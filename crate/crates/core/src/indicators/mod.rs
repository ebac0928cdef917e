//! Technical-indicator features.

mod catalog;
mod frame;
mod primitives;

use std::collections::HashSet;

use chrono::NaiveDate;
use rayon::prelude::*;
use thiserror::Error;

pub use catalog::{catalog_spec, default_catalog, IndicatorFamily, IndicatorSpec};
pub use frame::{attach_external_columns, read_external_csv, ExternalColumn, FeatureFrame};

use crate::market_data::{label_direction, Bar, BarSeries, MarketDataError};

#[derive(Debug, Error)]
pub enum IndicatorError {
    #[error("unknown indicator `{0}`")]
    UnknownIndicator(String),
    #[error("indicator `{name}` parameter `{param}`: {reason}")]
    BadParam {
        name: String,
        param: String,
        reason: String,
    },
    #[error("duplicate column `{0}`")]
    DuplicateColumn(String),
    #[error("series of {got} bars is too short for `{name}` (warm-up {warmup}, plus one labeled row)")]
    SeriesTooShort {
        name: String,
        warmup: usize,
        got: usize,
    },
    #[error("incremental update before warm-up complete ({seen} of {needed} bars)")]
    NotWarmedUp { seen: usize, needed: usize },
    #[error("non-finite value in `{column}` on {date}")]
    NonFinite { column: String, date: NaiveDate },
    #[error("column `{0}` not found")]
    MissingColumn(String),
    #[error("frame csv: {0}")]
    Format(String),
    #[error(transparent)]
    MarketData(#[from] MarketDataError),
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, IndicatorError>;

fn check_unique(specs: &[IndicatorSpec]) -> Result<()> {
    let mut seen = HashSet::new();
    for s in specs {
        if !seen.insert(s.name.as_str()) {
            return Err(IndicatorError::DuplicateColumn(s.name.clone()));
        }
    }
    Ok(())
}

/// Evaluates each spec over every bar; `None` marks warm-up positions.
pub fn compute_columns(bars: &[Bar], specs: &[IndicatorSpec]) -> Result<Vec<Vec<Option<f64>>>> {
    check_unique(specs)?;
    specs
        .par_iter()
        .map(|s| {
            let mut step = catalog::build(s)?;
            Ok(bars.iter().map(|b| step(b)).collect())
        })
        .collect()
}

/// Largest warm-up across `specs`.
pub fn max_warmup(specs: &[IndicatorSpec]) -> Result<usize> {
    specs.iter().map(|s| s.warmup()).try_fold(0, |m, w| Ok(m.max(w?)))
}

/// Computes the selected indicators and aligns them with next-day labels.
///
/// Row `t` holds indicator values through bar `t` and the label of the move
/// from bar `t` to bar `t + 1`. Rows inside any indicator's warm-up and the
/// final bar (no next-day label) are dropped.
pub fn compute_catalog(series: &BarSeries, specs: &[IndicatorSpec]) -> Result<FeatureFrame> {
    check_unique(specs)?;
    for s in specs {
        let w = s.warmup()?;
        if series.len() < w + 2 {
            return Err(IndicatorError::SeriesTooShort {
                name: s.name.clone(),
                warmup: w,
                got: series.len(),
            });
        }
    }
    let start = max_warmup(specs)?;
    let labeled = label_direction(series)?;
    let raw = compute_columns(series.bars(), specs)?;
    let bars = series.bars();
    let end = bars.len() - 1;
    let timestamps: Vec<NaiveDate> = bars[start..end].iter().map(|b| b.timestamp).collect();
    let mut columns = Vec::with_capacity(specs.len());
    for (s, col) in specs.iter().zip(raw) {
        let mut out = Vec::with_capacity(end - start);
        for (t, v) in col.into_iter().enumerate().take(end).skip(start) {
            let v = v.expect("value defined after warm-up");
            if !v.is_finite() {
                return Err(IndicatorError::NonFinite {
                    column: s.name.clone(),
                    date: bars[t].timestamp,
                });
            }
            out.push(v);
        }
        columns.push(out);
    }
    let labels = labeled.labels[start..end].to_vec();
    FeatureFrame::new(
        timestamps,
        specs.iter().map(|s| s.name.clone()).collect(),
        columns,
        labels,
    )
}

/// Streaming evaluation of a fixed indicator set.
///
/// Values are produced by the same step functions the batch path uses, so a
/// bar appended here yields exactly what a batch recompute over the extended
/// series yields at that position.
pub struct IncrementalState {
    names: Vec<String>,
    steps: Vec<catalog::StepFn>,
    needed: usize,
    seen: usize,
    latest: Vec<Option<f64>>,
}

impl IncrementalState {
    pub fn new(specs: &[IndicatorSpec]) -> Result<Self> {
        check_unique(specs)?;
        Ok(Self {
            names: specs.iter().map(|s| s.name.clone()).collect(),
            steps: specs.iter().map(catalog::build).collect::<Result<_>>()?,
            needed: max_warmup(specs)?,
            seen: 0,
            latest: vec![None; specs.len()],
        })
    }

    /// Initializes from history; needs at least the longest warm-up in bars.
    pub fn from_history(bars: &[Bar], specs: &[IndicatorSpec]) -> Result<Self> {
        let mut st = Self::new(specs)?;
        if bars.len() < st.needed {
            return Err(IndicatorError::NotWarmedUp {
                seen: bars.len(),
                needed: st.needed,
            });
        }
        for b in bars {
            st.push(b);
        }
        Ok(st)
    }

    /// Feeds a bar regardless of warm-up state.
    pub fn push(&mut self, bar: &Bar) -> &[Option<f64>] {
        for (slot, step) in self.latest.iter_mut().zip(self.steps.iter_mut()) {
            *slot = step(bar);
        }
        self.seen += 1;
        &self.latest
    }

    pub fn is_warm(&self) -> bool {
        self.seen >= self.needed
    }

    /// Appends a bar to a warmed-up state and returns every indicator's value.
    pub fn update(&mut self, bar: &Bar) -> Result<Vec<(String, f64)>> {
        if !self.is_warm() {
            return Err(IndicatorError::NotWarmedUp {
                seen: self.seen,
                needed: self.needed,
            });
        }
        self.push(bar);
        Ok(self
            .names
            .iter()
            .zip(&self.latest)
            .map(|(n, v)| (n.clone(), v.expect("defined after warm-up")))
            .collect())
    }

    pub fn bars_seen(&self) -> usize {
        self.seen
    }
}
