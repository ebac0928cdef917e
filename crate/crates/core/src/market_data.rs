//! OHLCV ingest, multi-exchange merge, gap imputation and direction labels.

use std::collections::BTreeMap;
use std::io::{Read, Write};
use std::path::Path;

use chrono::NaiveDate;
use log::warn;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum MarketDataError {
    #[error("no source series given")]
    NoSources,
    #[error("series is empty")]
    EmptySeries,
    #[error("timestamps not strictly increasing at {0}")]
    Unordered(NaiveDate),
    #[error("bar {date}: {reason}")]
    InvalidBar { date: NaiveDate, reason: String },
    #[error("first bar ({0}) has missing fields; imputation needs a fully observed start")]
    MissingFirstBar(NaiveDate),
    #[error("smoothing factor {0} outside (0, 1]")]
    BadAlpha(f64),
    #[error("need at least {needed} bars, got {got}")]
    TooShort { needed: usize, got: usize },
    #[error("nonpositive close {close} on {date}")]
    NonPositiveClose { date: NaiveDate, close: f64 },
    #[error("csv line {line}: {reason}")]
    Parse { line: usize, reason: String },
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, MarketDataError>;

/// One fully observed daily bar.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Bar {
    pub timestamp: NaiveDate,
    pub open: f64,
    pub high: f64,
    pub low: f64,
    pub close: f64,
    pub volume: f64,
}

impl Bar {
    pub fn validate(&self) -> Result<()> {
        let bad = |reason: &str| MarketDataError::InvalidBar {
            date: self.timestamp,
            reason: reason.to_string(),
        };
        let fields = [self.open, self.high, self.low, self.close, self.volume];
        if fields.iter().any(|v| !v.is_finite()) {
            return Err(bad("non-finite field"));
        }
        if self.low > self.open.min(self.close) {
            return Err(bad("low above min(open, close)"));
        }
        if self.high < self.open.max(self.close) {
            return Err(bad("high below max(open, close)"));
        }
        if self.volume < 0.0 {
            return Err(bad("negative volume"));
        }
        Ok(())
    }
}

/// A bar whose fields may be missing (empty CSV fields).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ObservedBar {
    pub timestamp: NaiveDate,
    pub open: Option<f64>,
    pub high: Option<f64>,
    pub low: Option<f64>,
    pub close: Option<f64>,
    pub volume: Option<f64>,
}

impl ObservedBar {
    fn fields(&self) -> [Option<f64>; 5] {
        [self.open, self.high, self.low, self.close, self.volume]
    }

    fn from_fields(timestamp: NaiveDate, f: [Option<f64>; 5]) -> Self {
        Self {
            timestamp,
            open: f[0],
            high: f[1],
            low: f[2],
            close: f[3],
            volume: f[4],
        }
    }

    pub fn is_complete(&self) -> bool {
        self.fields().iter().all(Option::is_some)
    }
}

impl From<Bar> for ObservedBar {
    fn from(b: Bar) -> Self {
        Self {
            timestamp: b.timestamp,
            open: Some(b.open),
            high: Some(b.high),
            low: Some(b.low),
            close: Some(b.close),
            volume: Some(b.volume),
        }
    }
}

/// Bars as read from a file, possibly with gaps.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RawSeries {
    pub bars: Vec<ObservedBar>,
    pub exchange_id: Option<String>,
}

impl RawSeries {
    pub fn new(bars: Vec<ObservedBar>, exchange_id: Option<String>) -> Result<Self> {
        check_order(bars.iter().map(|b| b.timestamp))?;
        Ok(Self { bars, exchange_id })
    }

    pub fn len(&self) -> usize {
        self.bars.len()
    }

    pub fn is_empty(&self) -> bool {
        self.bars.is_empty()
    }

    pub fn missing_count(&self) -> usize {
        self.bars
            .iter()
            .map(|b| b.fields().iter().filter(|f| f.is_none()).count())
            .sum()
    }
}

/// Complete, time-ordered daily bars.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BarSeries {
    bars: Vec<Bar>,
    pub exchange_id: Option<String>,
}

impl BarSeries {
    pub fn new(bars: Vec<Bar>, exchange_id: Option<String>) -> Result<Self> {
        check_order(bars.iter().map(|b| b.timestamp))?;
        for b in &bars {
            b.validate()?;
        }
        Ok(Self { bars, exchange_id })
    }

    pub fn bars(&self) -> &[Bar] {
        &self.bars
    }

    pub fn len(&self) -> usize {
        self.bars.len()
    }

    pub fn is_empty(&self) -> bool {
        self.bars.is_empty()
    }

    pub fn timestamps(&self) -> Vec<NaiveDate> {
        self.bars.iter().map(|b| b.timestamp).collect()
    }

    pub fn closes(&self) -> Vec<f64> {
        self.bars.iter().map(|b| b.close).collect()
    }

    pub fn to_raw(&self) -> RawSeries {
        RawSeries {
            bars: self.bars.iter().copied().map(ObservedBar::from).collect(),
            exchange_id: self.exchange_id.clone(),
        }
    }

    /// Bars whose timestamp falls in `[start, end]`.
    pub fn slice_dates(&self, start: NaiveDate, end: NaiveDate) -> BarSeries {
        BarSeries {
            bars: self
                .bars
                .iter()
                .filter(|b| b.timestamp >= start && b.timestamp <= end)
                .copied()
                .collect(),
            exchange_id: self.exchange_id.clone(),
        }
    }
}

fn check_order(ts: impl Iterator<Item = NaiveDate>) -> Result<()> {
    let mut prev: Option<NaiveDate> = None;
    for t in ts {
        if let Some(p) = prev {
            if t <= p {
                return Err(MarketDataError::Unordered(t));
            }
        }
        prev = Some(t);
    }
    Ok(())
}

/// Merges exchange feeds into one volume-weighted composite.
///
/// For each date present in any source, each price field is the
/// volume-weighted mean over the sources that observed both that field and
/// volume on that date; composite volume is the sum of observed volumes.
/// A date whose contributing sources report zero total volume falls back to
/// the unweighted mean. When gaps make the averaged high (low) fall below
/// (above) the averaged open or close, it is widened to cover them.
pub fn merge_exchanges(sources: &[RawSeries]) -> Result<RawSeries> {
    if sources.is_empty() {
        return Err(MarketDataError::NoSources);
    }
    let mut by_date: BTreeMap<NaiveDate, Vec<ObservedBar>> = BTreeMap::new();
    for s in sources {
        for b in &s.bars {
            by_date.entry(b.timestamp).or_default().push(*b);
        }
    }
    let mut out = Vec::with_capacity(by_date.len());
    for (date, mut bars) in by_date {
        // Source order must not matter; sum in a canonical order.
        bars.sort_by(|a, b| {
            let ka = a.fields().map(|f| f.map(f64::to_bits));
            let kb = b.fields().map(|f| f.map(f64::to_bits));
            ka.cmp(&kb)
        });
        let mut fields = [None; 5];
        for (k, slot) in fields.iter_mut().enumerate().take(4) {
            let obs: Vec<(f64, f64)> = bars
                .iter()
                .filter_map(|b| {
                    let f = b.fields();
                    Some((f[k]?, f[4]?))
                })
                .collect();
            if obs.is_empty() {
                // No volume to weight by: use plain mean of whatever was observed.
                let plain: Vec<f64> = bars.iter().filter_map(|b| b.fields()[k]).collect();
                if !plain.is_empty() {
                    *slot = Some(plain.iter().sum::<f64>() / plain.len() as f64);
                }
                continue;
            }
            let total_vol: f64 = obs.iter().map(|(_, v)| v).sum();
            if obs.len() == 1 {
                *slot = Some(obs[0].0);
            } else if total_vol > 0.0 {
                let num: f64 = obs.iter().map(|(p, v)| p * v).sum();
                *slot = Some(num / total_vol);
            } else {
                warn!("{date}: zero total volume across sources, using unweighted mean");
                *slot = Some(obs.iter().map(|(p, _)| p).sum::<f64>() / obs.len() as f64);
            }
        }
        let vols: Vec<f64> = bars.iter().filter_map(|b| b.volume).collect();
        if !vols.is_empty() {
            fields[4] = Some(vols.iter().sum());
        }
        // Fields averaged over different source subsets can cross; widen
        // the range so the composite stays a valid bar.
        let body = [fields[0], fields[3]].into_iter().flatten();
        let (lo, hi) = body.fold((f64::INFINITY, f64::NEG_INFINITY), |(l, h), v| (l.min(v), h.max(v)));
        if let Some(h) = fields[1].as_mut() {
            *h = h.max(hi);
        }
        if let Some(l) = fields[2].as_mut() {
            *l = l.min(lo);
        }
        out.push(ObservedBar::from_fields(date, fields));
    }
    let id = if sources.len() == 1 {
        sources[0].exchange_id.clone()
    } else {
        Some("composite".to_string())
    };
    Ok(RawSeries {
        bars: out,
        exchange_id: id,
    })
}

/// Default imputation factor `2 / (n + 1)` with `n = 10`.
pub const DEFAULT_IMPUTE_ALPHA: f64 = 2.0 / 11.0;

/// Fills each missing field with the exponentially weighted average of that
/// field's previously observed values.
///
/// The running average starts at the first observation and is updated only by
/// observed values: `s = alpha * x + (1 - alpha) * s`. An imputed bar whose
/// filled fields break the OHLC ordering has its high/low widened to cover
/// open and close.
pub fn impute_missing(series: &RawSeries, alpha: f64) -> Result<BarSeries> {
    if !(alpha > 0.0 && alpha <= 1.0) {
        return Err(MarketDataError::BadAlpha(alpha));
    }
    let first = series.bars.first().ok_or(MarketDataError::EmptySeries)?;
    if !first.is_complete() {
        return Err(MarketDataError::MissingFirstBar(first.timestamp));
    }
    let mut state: [f64; 5] = first.fields().map(|f| f.unwrap_or(0.0));
    let mut bars = Vec::with_capacity(series.bars.len());
    for (i, ob) in series.bars.iter().enumerate() {
        let f = ob.fields();
        let mut filled = [0.0; 5];
        let mut imputed = false;
        for k in 0..5 {
            match f[k] {
                Some(x) => {
                    if i > 0 {
                        state[k] = alpha * x + (1.0 - alpha) * state[k];
                    }
                    filled[k] = x;
                }
                None => {
                    filled[k] = state[k];
                    imputed = true;
                }
            }
        }
        let mut bar = Bar {
            timestamp: ob.timestamp,
            open: filled[0],
            high: filled[1],
            low: filled[2],
            close: filled[3],
            volume: filled[4],
        };
        if imputed {
            bar.high = bar.high.max(bar.open).max(bar.close);
            bar.low = bar.low.min(bar.open).min(bar.close);
        }
        bars.push(bar);
    }
    BarSeries::new(bars, series.exchange_id.clone())
}

/// Close-to-close returns and next-day direction labels.
///
/// `returns[i]` and `labels[i]` describe the move from bar `i` to bar `i + 1`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabeledSeries {
    pub series: BarSeries,
    pub returns: Vec<f64>,
    pub labels: Vec<u8>,
}

/// Labels each transition 1 when the next close is strictly higher, else 0.
pub fn label_direction(series: &BarSeries) -> Result<LabeledSeries> {
    let bars = series.bars();
    if bars.len() < 2 {
        return Err(MarketDataError::TooShort {
            needed: 2,
            got: bars.len(),
        });
    }
    if let Some(b) = bars.iter().find(|b| b.close <= 0.0) {
        return Err(MarketDataError::NonPositiveClose {
            date: b.timestamp,
            close: b.close,
        });
    }
    let returns: Vec<f64> = bars
        .windows(2)
        .map(|w| w[1].close / w[0].close - 1.0)
        .collect();
    let labels = returns.iter().map(|&r| u8::from(r > 0.0)).collect();
    Ok(LabeledSeries {
        series: series.clone(),
        returns,
        labels,
    })
}

/// Parses an ISO-8601 date or date-time, keeping the calendar date.
pub fn parse_date(s: &str) -> Option<NaiveDate> {
    let s = s.trim();
    let head = s.get(..10).unwrap_or(s);
    NaiveDate::parse_from_str(head, "%Y-%m-%d").ok()
}

const HEADER: [&str; 6] = ["timestamp", "open", "high", "low", "close", "volume"];

/// Reads `timestamp,open,high,low,close,volume` rows; empty fields are missing.
pub fn read_bars_csv<R: Read>(reader: R, exchange_id: Option<String>) -> Result<RawSeries> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
    let headers = rdr.headers()?.clone();
    let cols: Vec<usize> = HEADER
        .iter()
        .map(|h| {
            headers
                .iter()
                .position(|x| x.eq_ignore_ascii_case(h))
                .ok_or_else(|| MarketDataError::Parse {
                    line: 1,
                    reason: format!("missing column `{h}`"),
                })
        })
        .collect::<Result<_>>()?;
    let mut bars = Vec::new();
    for (n, rec) in rdr.records().enumerate() {
        let rec = rec?;
        let line = n + 2;
        let ts_raw = rec.get(cols[0]).unwrap_or("");
        let timestamp = parse_date(ts_raw).ok_or_else(|| MarketDataError::Parse {
            line,
            reason: format!("bad timestamp `{ts_raw}`"),
        })?;
        let mut f = [None; 5];
        for k in 0..5 {
            let raw = rec.get(cols[k + 1]).unwrap_or("");
            if raw.is_empty() {
                continue;
            }
            let v: f64 = raw.parse().map_err(|_| MarketDataError::Parse {
                line,
                reason: format!("bad number `{raw}` in `{}`", HEADER[k + 1]),
            })?;
            f[k] = Some(v);
        }
        bars.push(ObservedBar::from_fields(timestamp, f));
    }
    RawSeries::new(bars, exchange_id)
}

pub fn read_bars_file(path: &Path, exchange_id: Option<String>) -> Result<RawSeries> {
    let f = std::fs::File::open(path)?;
    read_bars_csv(f, exchange_id)
}

pub fn write_bars_csv<W: Write>(writer: W, series: &RawSeries) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(HEADER)?;
    let fmt = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
    for b in &series.bars {
        w.write_record([
            b.timestamp.to_string(),
            fmt(b.open),
            fmt(b.high),
            fmt(b.low),
            fmt(b.close),
            fmt(b.volume),
        ])?;
    }
    w.flush()?;
    Ok(())
}
