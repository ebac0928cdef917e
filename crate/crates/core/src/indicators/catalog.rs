//! The built-in indicator catalog.
//!
//! Every entry is a small state machine over bars assembled from the
//! streaming primitives; batch evaluation just runs it over the series.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::primitives::{Ema, Lag, RollingMax, RollingMin, RollingStd, RollingSum, Sma, Stream};
use super::IndicatorError;
use crate::market_data::Bar;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum IndicatorFamily {
    Volume,
    Volatility,
    Trend,
    Momentum,
}

/// One catalog column: a canonical id, its family, named windows/constants
/// and the formula it evaluates.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IndicatorSpec {
    pub name: String,
    pub family: IndicatorFamily,
    pub params: BTreeMap<String, f64>,
    pub formula: String,
}

impl IndicatorSpec {
    fn new(name: &str, family: IndicatorFamily, params: &[(&str, f64)], formula: &str) -> Self {
        Self {
            name: name.to_string(),
            family,
            params: params.iter().map(|(k, v)| (k.to_string(), *v)).collect(),
            formula: formula.to_string(),
        }
    }

    fn window(&self, key: &str) -> Result<usize, IndicatorError> {
        let v = *self.params.get(key).ok_or_else(|| IndicatorError::BadParam {
            name: self.name.clone(),
            param: key.to_string(),
            reason: "missing".into(),
        })?;
        if v < 1.0 || v.fract() != 0.0 || !v.is_finite() {
            return Err(IndicatorError::BadParam {
                name: self.name.clone(),
                param: key.to_string(),
                reason: format!("window must be an integer >= 1, got {v}"),
            });
        }
        Ok(v as usize)
    }

    fn constant(&self, key: &str) -> Result<f64, IndicatorError> {
        self.params
            .get(key)
            .copied()
            .filter(|v| v.is_finite())
            .ok_or_else(|| IndicatorError::BadParam {
                name: self.name.clone(),
                param: key.to_string(),
                reason: "missing or non-finite".into(),
            })
    }

    /// Number of leading bars for which this indicator has no value.
    pub fn warmup(&self) -> Result<usize, IndicatorError> {
        let w = |k: &str| self.window(k);
        Ok(match self.name.as_str() {
            "volume_adi" | "volume_obv" | "volume_vpt" | "volume_nvi" => 0,
            "volume_fi" => 1,
            "volume_obvm" | "volume_cmf" => w("window")? - 1,
            "volume_em" => w("window")?,
            "volatility_atr" => w("window")?,
            "volatility_bbm" | "volatility_bbh" | "volatility_bbl" | "volatility_bbhi"
            | "volatility_bbli" | "volatility_kcc" | "volatility_kch" | "volatility_kcl"
            | "volatility_kchi" | "volatility_kcli" | "volatility_dch" | "volatility_dcl"
            | "volatility_dchi" | "volatility_dcli" | "trend_cci" | "trend_ema"
            | "momentum_stoch" | "momentum_wr" => w("window")? - 1,
            "trend_macd" => w("fast")?.max(w("slow")?) - 1,
            "trend_macd_signal" | "trend_macd_diff" => {
                w("fast")?.max(w("slow")?) - 1 + w("signal")? - 1
            }
            "trend_adx_pos" | "trend_adx_neg" | "trend_adx_ind" => w("window")?,
            "trend_adx" => w("window")? + w("smoothing")? - 1,
            "trend_vortex_ind_pos" | "trend_vortex_ind_neg" | "trend_vortex_diff" => w("window")?,
            "trend_trix" => 3 * (w("window")? - 1) + 1,
            "trend_mass_index" => w("fast")? - 1 + w("slow")? - 1 + w("sum")? - 1,
            "trend_dpo" => w("shift")?.max(w("window")? - 1),
            "trend_kst" => self.kst_warmup()?,
            "trend_kst_sig" => self.kst_warmup()? + w("signal")? - 1,
            "trend_ichimoku_a" => w("conversion")?.max(w("base")?) - 1 + w("base")?,
            "trend_ichimoku_b" => w("span")? - 1 + w("base")?,
            "momentum_rsi" => w("window")?,
            "momentum_tsi" => w("slow")? + w("fast")? - 1,
            "momentum_uo" => w("short")?.max(w("medium")?).max(w("long")?),
            "momentum_stoch_signal" => w("window")? - 1 + w("smooth")? - 1,
            "momentum_ao" => w("short")?.max(w("long")?) - 1,
            other => return Err(IndicatorError::UnknownIndicator(other.to_string())),
        })
    }

    fn kst_warmup(&self) -> Result<usize, IndicatorError> {
        let mut m = 0;
        for i in 1..=4 {
            m = m.max(self.window(&format!("r{i}"))? + self.window(&format!("n{i}"))? - 1);
        }
        Ok(m)
    }
}

pub(crate) type StepFn = Box<dyn FnMut(&Bar) -> Option<f64> + Send>;

/// The full catalog with default windows.
pub fn default_catalog() -> Vec<IndicatorSpec> {
    use IndicatorFamily::*;
    let s = IndicatorSpec::new;
    let kst = [
        ("r1", 10.0),
        ("r2", 15.0),
        ("r3", 20.0),
        ("r4", 30.0),
        ("n1", 10.0),
        ("n2", 10.0),
        ("n3", 10.0),
        ("n4", 15.0),
    ];
    let mut kst_sig = kst.to_vec();
    kst_sig.push(("signal", 9.0));
    let clv = "CLV = ((close - low) - (high - close)) / (high - low)";
    vec![
        s("volume_adi", Volume, &[], &format!("{clv}; adi_t = adi_(t-1) + volume_t * CLV_t")),
        s("volume_obv", Volume, &[], "obv_t = obv_(t-1) + sign(close_t - close_(t-1)) * volume_t, obv_0 = 0"),
        s("volume_obvm", Volume, &[("window", 10.0)], "MA(obv, window)"),
        s("volume_cmf", Volume, &[("window", 20.0)], &format!("{clv}; EMA(CLV * volume, window) / EMA(volume, window)")),
        s("volume_fi", Volume, &[], "(close_t - close_(t-1)) * volume_t"),
        s("volume_em", Volume, &[("window", 20.0)], "MA(((high - high_prev) + (low - low_prev)) * (high - low) / (2 * volume), window)"),
        s("volume_vpt", Volume, &[], "vpt_t = vpt_(t-1) + volume_t * (close_t - close_(t-1)) / close_(t-1), vpt_0 = 0"),
        s("volume_nvi", Volume, &[], "nvi_t = nvi_(t-1) * (1 + ret_t) if volume_t > volume_(t-1) else nvi_(t-1), nvi_0 = 1000"),
        s("volatility_atr", Volatility, &[("window", 20.0)], "EMA(max(high, close_prev) - max(low, close_prev), window)"),
        s("volatility_bbm", Volatility, &[("window", 20.0)], "MA(close, window)"),
        s("volatility_bbh", Volatility, &[("window", 20.0), ("ndev", 2.0)], "MA(close, window) + ndev * std(close, window)"),
        s("volatility_bbl", Volatility, &[("window", 20.0), ("ndev", 2.0)], "MA(close, window) - ndev * std(close, window)"),
        s("volatility_bbhi", Volatility, &[("window", 20.0), ("ndev", 2.0)], "1 if close > bbh else 0"),
        s("volatility_bbli", Volatility, &[("window", 20.0), ("ndev", 2.0)], "1 if close < bbl else 0"),
        s("volatility_kcc", Volatility, &[("window", 20.0)], "MA((high + low + close) / 3, window)"),
        s("volatility_kch", Volatility, &[("window", 10.0)], "MA((4 * high - 2 * low + close) / 3, window)"),
        s("volatility_kcl", Volatility, &[("window", 10.0)], "MA((-2 * high + 4 * low + close) / 3, window)"),
        s("volatility_kchi", Volatility, &[("window", 10.0)], "1 if close > kch else 0"),
        s("volatility_kcli", Volatility, &[("window", 10.0)], "1 if close < kcl else 0"),
        s("volatility_dch", Volatility, &[("window", 20.0)], "max(close, window)"),
        s("volatility_dcl", Volatility, &[("window", 20.0)], "min(close, window)"),
        s("volatility_dchi", Volatility, &[("window", 20.0)], "1 if close > dch else 0"),
        s("volatility_dcli", Volatility, &[("window", 20.0)], "1 if close < dcl else 0"),
        s("trend_macd", Trend, &[("fast", 12.0), ("slow", 26.0)], "EMA(close, fast) - EMA(close, slow)"),
        s("trend_macd_signal", Trend, &[("fast", 12.0), ("slow", 26.0), ("signal", 9.0)], "EMA(macd, signal)"),
        s("trend_macd_diff", Trend, &[("fast", 12.0), ("slow", 26.0), ("signal", 9.0)], "macd - EMA(macd, signal)"),
        s("trend_ema", Trend, &[("window", 12.0)], "EMA(close, window)"),
        s("trend_adx", Trend, &[("window", 20.0), ("smoothing", 14.0)], "EMA(100 * |dip - din| / (dip + din), smoothing)"),
        s("trend_adx_pos", Trend, &[("window", 20.0)], "dip = 100 * Sum(pos_dm, window) / Sum(tr, window)"),
        s("trend_adx_neg", Trend, &[("window", 20.0)], "din = 100 * Sum(neg_dm, window) / Sum(tr, window)"),
        s("trend_adx_ind", Trend, &[("window", 20.0)], "1 if dip - din > 0 else 0"),
        s("trend_vortex_ind_pos", Trend, &[("window", 14.0)], "Sum(|high - low_prev|, window) / Sum(tr, window)"),
        s("trend_vortex_ind_neg", Trend, &[("window", 14.0)], "Sum(|low - high_prev|, window) / Sum(tr, window)"),
        s("trend_vortex_diff", Trend, &[("window", 14.0)], "vortex_pos - vortex_neg"),
        s("trend_trix", Trend, &[("window", 14.0)], "e3 = EMA(EMA(EMA(close))); (e3_t - e3_(t-1)) / e3_(t-1)"),
        s("trend_mass_index", Trend, &[("fast", 9.0), ("slow", 26.0), ("sum", 25.0)], "Sum(EMA(high - low, fast) / EMA(EMA(high - low, fast), slow), sum)"),
        s("trend_cci", Trend, &[("window", 20.0), ("constant", 0.015)], "(pp - MA(pp, window)) / (constant * std(pp, window)), pp = (high + low + close) / 3"),
        s("trend_dpo", Trend, &[("window", 20.0), ("shift", 10.0)], "close_(t-shift) - MA(close, window)"),
        s("trend_kst", Trend, &kst, "100 * sum_i i * (close_t - close_(t-r_i)) / MA(close_(t-r_i), n_i)"),
        s("trend_kst_sig", Trend, &kst_sig, "MA(kst, signal)"),
        s("trend_ichimoku_a", Trend, &[("conversion", 9.0), ("base", 26.0)], "((max(high, conversion) + min(low, conversion)) / 2 + (max(high, base) + min(low, base)) / 2) / 2, lagged by base"),
        s("trend_ichimoku_b", Trend, &[("base", 26.0), ("span", 52.0)], "(max(high, span) + min(low, span)) / 2, lagged by base"),
        s("momentum_rsi", Momentum, &[("window", 14.0)], "100 * EMA(up, window) / (EMA(up, window) + EMA(down, window))"),
        s("momentum_tsi", Momentum, &[("slow", 25.0), ("fast", 13.0)], "100 * EMA(EMA(m, slow), fast) / EMA(EMA(|m|, slow), fast), m = close_t - close_(t-1)"),
        s("momentum_uo", Momentum, &[("short", 7.0), ("medium", 14.0), ("long", 28.0), ("ws", 4.0), ("wm", 2.0), ("wl", 1.0)], "100 * (ws * avg_short + wm * avg_medium + wl * avg_long) / (ws + wm + wl), avg_n = Sum(bp, n) / Sum(tr, n)"),
        s("momentum_stoch", Momentum, &[("window", 14.0)], "100 * (close - min(low, window)) / (max(high, window) - min(low, window))"),
        s("momentum_stoch_signal", Momentum, &[("window", 14.0), ("smooth", 3.0)], "MA(stoch, smooth)"),
        s("momentum_wr", Momentum, &[("window", 14.0)], "-100 * (max(high, window) - close) / (max(high, window) - min(low, window))"),
        s("momentum_ao", Momentum, &[("short", 5.0), ("long", 34.0)], "MA((high + low) / 2, short) - MA((high + low) / 2, long)"),
    ]
}

/// Looks up a catalog entry by canonical id.
pub fn catalog_spec(name: &str) -> Option<IndicatorSpec> {
    default_catalog().into_iter().find(|s| s.name == name)
}

fn ratio_or_zero(num: f64, den: f64) -> f64 {
    if den == 0.0 {
        0.0
    } else {
        num / den
    }
}

fn clv(b: &Bar) -> f64 {
    ratio_or_zero((b.close - b.low) - (b.high - b.close), b.high - b.low)
}

fn flag(cond: bool) -> f64 {
    if cond {
        1.0
    } else {
        0.0
    }
}

/// Tracks the previous bar and yields `(bar, prev)` from the second bar on.
#[derive(Default)]
struct Prev(Option<Bar>);

impl Prev {
    fn step(&mut self, b: &Bar) -> Option<Bar> {
        self.0.replace(*b)
    }
}

struct Adx {
    prev: Prev,
    tr: RollingSum,
    pos: RollingSum,
    neg: RollingSum,
}

impl Adx {
    fn new(n: usize) -> Self {
        Self {
            prev: Prev::default(),
            tr: RollingSum::new(n),
            pos: RollingSum::new(n),
            neg: RollingSum::new(n),
        }
    }

    /// Returns `(dip, din)`.
    fn step(&mut self, b: &Bar) -> Option<(f64, f64)> {
        let p = self.prev.step(b)?;
        let tr = b.high.max(p.close) - b.low.min(p.close);
        let up = b.high - p.high;
        let dn = p.low - b.low;
        let pos = if up > dn && up > 0.0 { up } else { 0.0 };
        let neg = if dn > up && dn > 0.0 { dn } else { 0.0 };
        let trs = self.tr.next(tr);
        let sp = self.pos.next(pos);
        let sn = self.neg.next(neg);
        let trs = trs?;
        Some((100.0 * ratio_or_zero(sp?, trs), 100.0 * ratio_or_zero(sn?, trs)))
    }
}

struct Vortex {
    prev: Prev,
    tr: RollingSum,
    vmp: RollingSum,
    vmn: RollingSum,
}

impl Vortex {
    fn new(n: usize) -> Self {
        Self {
            prev: Prev::default(),
            tr: RollingSum::new(n),
            vmp: RollingSum::new(n),
            vmn: RollingSum::new(n),
        }
    }

    fn step(&mut self, b: &Bar) -> Option<(f64, f64)> {
        let p = self.prev.step(b)?;
        let tr = b.high.max(p.close) - b.low.min(p.close);
        let trn = self.tr.next(tr);
        let sp = self.vmp.next((b.high - p.low).abs());
        let sn = self.vmn.next((b.low - p.high).abs());
        let trn = trn?;
        Some((ratio_or_zero(sp?, trn), ratio_or_zero(sn?, trn)))
    }
}

struct Kst {
    lags: Vec<Lag>,
    mas: Vec<Sma>,
}

impl Kst {
    fn new(spec: &IndicatorSpec) -> Result<Self, IndicatorError> {
        let mut lags = Vec::new();
        let mut mas = Vec::new();
        for i in 1..=4 {
            lags.push(Lag::new(spec.window(&format!("r{i}"))?));
            mas.push(Sma::new(spec.window(&format!("n{i}"))?));
        }
        Ok(Self { lags, mas })
    }

    fn step(&mut self, b: &Bar) -> Option<f64> {
        let mut rocs = [None; 4];
        for i in 0..4 {
            let lagged = self.lags[i].next(b.close);
            let ma = self.mas[i].feed(lagged);
            rocs[i] = match (lagged, ma) {
                (Some(l), Some(m)) => Some((b.close - l) / m),
                _ => None,
            };
        }
        let [r1, r2, r3, r4] = rocs;
        Some(100.0 * (r1? + 2.0 * r2? + 3.0 * r3? + 4.0 * r4?))
    }
}

struct Macd {
    fast: Ema,
    slow: Ema,
}

impl Macd {
    fn step(&mut self, c: f64) -> Option<f64> {
        let f = self.fast.next(c);
        let s = self.slow.next(c);
        Some(f? - s?)
    }
}

struct Stoch {
    lo: RollingMin,
    hi: RollingMax,
}

impl Stoch {
    fn new(n: usize) -> Self {
        Self {
            lo: RollingMin::new(n),
            hi: RollingMax::new(n),
        }
    }

    fn step(&mut self, b: &Bar) -> Option<f64> {
        let lo = self.lo.next(b.low);
        let hi = self.hi.next(b.high);
        let (lo, hi) = (lo?, hi?);
        Some(if hi == lo {
            50.0
        } else {
            100.0 * (b.close - lo) / (hi - lo)
        })
    }
}

struct Bollinger {
    ma: Sma,
    sd: RollingStd,
    ndev: f64,
}

impl Bollinger {
    fn new(spec: &IndicatorSpec) -> Result<Self, IndicatorError> {
        let n = spec.window("window")?;
        Ok(Self {
            ma: Sma::new(n),
            sd: RollingStd::new(n),
            // The middle band has no width parameter.
            ndev: if spec.params.contains_key("ndev") {
                spec.constant("ndev")?
            } else {
                0.0
            },
        })
    }

    /// Returns `(mavg, high, low)`.
    fn step(&mut self, c: f64) -> Option<(f64, f64, f64)> {
        let m = self.ma.next(c);
        let s = self.sd.next(c);
        let (m, s) = (m?, s?);
        Some((m, m + self.ndev * s, m - self.ndev * s))
    }
}

/// Builds the per-bar step function for `spec`.
pub(crate) fn build(spec: &IndicatorSpec) -> Result<StepFn, IndicatorError> {
    // Validates the name and every window param up front.
    spec.warmup()?;
    let w = |k: &str| spec.window(k);
    let f: StepFn = match spec.name.as_str() {
        "volume_adi" => {
            let mut acc = 0.0;
            Box::new(move |b| {
                acc += b.volume * clv(b);
                Some(acc)
            })
        }
        "volume_obv" | "volume_obvm" => {
            let mut prev = Prev::default();
            let mut obv = 0.0;
            let mut ma = (spec.name == "volume_obvm").then(|| Sma::new(w("window").unwrap()));
            Box::new(move |b| {
                if let Some(p) = prev.step(b) {
                    if b.close > p.close {
                        obv += b.volume;
                    } else if b.close < p.close {
                        obv -= b.volume;
                    }
                }
                match ma.as_mut() {
                    Some(ma) => ma.next(obv),
                    None => Some(obv),
                }
            })
        }
        "volume_cmf" => {
            let n = w("window")?;
            let (mut num, mut den) = (Ema::new(n), Ema::new(n));
            Box::new(move |b| {
                let a = num.next(clv(b) * b.volume);
                let v = den.next(b.volume);
                Some(ratio_or_zero(a?, v?))
            })
        }
        "volume_fi" => {
            let mut prev = Prev::default();
            Box::new(move |b| prev.step(b).map(|p| (b.close - p.close) * b.volume))
        }
        "volume_em" => {
            let mut prev = Prev::default();
            let mut ma = Sma::new(w("window")?);
            Box::new(move |b| {
                let emv = prev.step(b).map(|p| {
                    ratio_or_zero(
                        ((b.high - p.high) + (b.low - p.low)) * (b.high - b.low),
                        2.0 * b.volume,
                    )
                });
                ma.feed(emv)
            })
        }
        "volume_vpt" => {
            let mut prev = Prev::default();
            let mut vpt = 0.0;
            Box::new(move |b| {
                if let Some(p) = prev.step(b) {
                    vpt += b.volume * (b.close - p.close) / p.close;
                }
                Some(vpt)
            })
        }
        "volume_nvi" => {
            let mut prev = Prev::default();
            let mut nvi = 1000.0;
            Box::new(move |b| {
                if let Some(p) = prev.step(b) {
                    if b.volume > p.volume {
                        nvi *= 1.0 + (b.close - p.close) / p.close;
                    }
                }
                Some(nvi)
            })
        }
        "volatility_atr" => {
            let mut prev = Prev::default();
            let mut ema = Ema::new(w("window")?);
            Box::new(move |b| {
                let tr = prev
                    .step(b)
                    .map(|p| b.high.max(p.close) - b.low.max(p.close));
                ema.feed(tr)
            })
        }
        "volatility_bbm" | "volatility_bbh" | "volatility_bbl" | "volatility_bbhi"
        | "volatility_bbli" => {
            let mut bb = Bollinger::new(spec)?;
            let which = spec.name.clone();
            Box::new(move |b| {
                let (m, h, l) = bb.step(b.close)?;
                Some(match which.as_str() {
                    "volatility_bbm" => m,
                    "volatility_bbh" => h,
                    "volatility_bbl" => l,
                    "volatility_bbhi" => flag(b.close > h),
                    _ => flag(b.close < l),
                })
            })
        }
        "volatility_kcc" => {
            let mut ma = Sma::new(w("window")?);
            Box::new(move |b| ma.next((b.high + b.low + b.close) / 3.0))
        }
        "volatility_kch" | "volatility_kchi" => {
            let mut ma = Sma::new(w("window")?);
            let ind = spec.name.ends_with('i');
            Box::new(move |b| {
                let k = ma.next((4.0 * b.high - 2.0 * b.low + b.close) / 3.0)?;
                Some(if ind { flag(b.close > k) } else { k })
            })
        }
        "volatility_kcl" | "volatility_kcli" => {
            let mut ma = Sma::new(w("window")?);
            let ind = spec.name.ends_with('i');
            Box::new(move |b| {
                let k = ma.next((-2.0 * b.high + 4.0 * b.low + b.close) / 3.0)?;
                Some(if ind { flag(b.close < k) } else { k })
            })
        }
        "volatility_dch" | "volatility_dchi" => {
            let mut mx = RollingMax::new(w("window")?);
            let ind = spec.name.ends_with('i');
            Box::new(move |b| {
                let d = mx.next(b.close)?;
                Some(if ind { flag(b.close > d) } else { d })
            })
        }
        "volatility_dcl" | "volatility_dcli" => {
            let mut mn = RollingMin::new(w("window")?);
            let ind = spec.name.ends_with('i');
            Box::new(move |b| {
                let d = mn.next(b.close)?;
                Some(if ind { flag(b.close < d) } else { d })
            })
        }
        "trend_macd" => {
            let mut m = Macd {
                fast: Ema::new(w("fast")?),
                slow: Ema::new(w("slow")?),
            };
            Box::new(move |b| m.step(b.close))
        }
        "trend_macd_signal" | "trend_macd_diff" => {
            let mut m = Macd {
                fast: Ema::new(w("fast")?),
                slow: Ema::new(w("slow")?),
            };
            let mut sig = Ema::new(w("signal")?);
            let diff = spec.name == "trend_macd_diff";
            Box::new(move |b| {
                let macd = m.step(b.close);
                let s = sig.feed(macd)?;
                Some(if diff { macd? - s } else { s })
            })
        }
        "trend_ema" => {
            let mut e = Ema::new(w("window")?);
            Box::new(move |b| e.next(b.close))
        }
        "trend_adx_pos" | "trend_adx_neg" | "trend_adx_ind" => {
            let mut adx = Adx::new(w("window")?);
            let which = spec.name.clone();
            Box::new(move |b| {
                let (dip, din) = adx.step(b)?;
                Some(match which.as_str() {
                    "trend_adx_pos" => dip,
                    "trend_adx_neg" => din,
                    _ => flag(dip - din > 0.0),
                })
            })
        }
        "trend_adx" => {
            let mut adx = Adx::new(w("window")?);
            let mut ema = Ema::new(w("smoothing")?);
            Box::new(move |b| {
                let dx = adx
                    .step(b)
                    .map(|(p, n)| 100.0 * ratio_or_zero((p - n).abs(), p + n));
                ema.feed(dx)
            })
        }
        "trend_vortex_ind_pos" | "trend_vortex_ind_neg" | "trend_vortex_diff" => {
            let mut v = Vortex::new(w("window")?);
            let which = spec.name.clone();
            Box::new(move |b| {
                let (p, n) = v.step(b)?;
                Some(match which.as_str() {
                    "trend_vortex_ind_pos" => p,
                    "trend_vortex_ind_neg" => n,
                    _ => p - n,
                })
            })
        }
        "trend_trix" => {
            let n = w("window")?;
            let (mut e1, mut e2, mut e3) = (Ema::new(n), Ema::new(n), Ema::new(n));
            let mut last: Option<f64> = None;
            Box::new(move |b| {
                let x = e1.next(b.close);
                let x = e2.feed(x);
                let cur = e3.feed(x)?;
                let out = last.map(|p| ratio_or_zero(cur - p, p));
                last = Some(cur);
                out
            })
        }
        "trend_mass_index" => {
            let mut e1 = Ema::new(w("fast")?);
            let mut e2 = Ema::new(w("slow")?);
            let mut sum = RollingSum::new(w("sum")?);
            Box::new(move |b| {
                let a = e1.next(b.high - b.low)?;
                let d = e2.next(a)?;
                let ratio = if d == 0.0 { 1.0 } else { a / d };
                sum.next(ratio)
            })
        }
        "trend_cci" => {
            let n = w("window")?;
            let c = spec.constant("constant")?;
            let (mut ma, mut sd) = (Sma::new(n), RollingStd::new(n));
            Box::new(move |b| {
                let pp = (b.high + b.low + b.close) / 3.0;
                let m = ma.next(pp);
                let s = sd.next(pp);
                Some(ratio_or_zero(pp - m?, c * s?))
            })
        }
        "trend_dpo" => {
            let mut lag = Lag::new(w("shift")?);
            let mut ma = Sma::new(w("window")?);
            Box::new(move |b| {
                let l = lag.next(b.close);
                let m = ma.next(b.close);
                Some(l? - m?)
            })
        }
        "trend_kst" => {
            let mut k = Kst::new(spec)?;
            Box::new(move |b| k.step(b))
        }
        "trend_kst_sig" => {
            let mut k = Kst::new(spec)?;
            let mut ma = Sma::new(w("signal")?);
            Box::new(move |b| ma.feed(k.step(b)))
        }
        "trend_ichimoku_a" => {
            let (cn, bn) = (w("conversion")?, w("base")?);
            let (mut ch, mut cl) = (RollingMax::new(cn), RollingMin::new(cn));
            let (mut bh, mut bl) = (RollingMax::new(bn), RollingMin::new(bn));
            let mut lag = Lag::new(bn);
            Box::new(move |b| {
                let (a, c) = (ch.next(b.high), cl.next(b.low));
                let (d, e) = (bh.next(b.high), bl.next(b.low));
                let raw = match (a, c, d, e) {
                    (Some(a), Some(c), Some(d), Some(e)) => Some(((a + c) / 2.0 + (d + e) / 2.0) / 2.0),
                    _ => None,
                };
                lag.feed(raw)
            })
        }
        "trend_ichimoku_b" => {
            let sn = w("span")?;
            let (mut hi, mut lo) = (RollingMax::new(sn), RollingMin::new(sn));
            let mut lag = Lag::new(w("base")?);
            Box::new(move |b| {
                let (h, l) = (hi.next(b.high), lo.next(b.low));
                let raw = match (h, l) {
                    (Some(h), Some(l)) => Some((h + l) / 2.0),
                    _ => None,
                };
                lag.feed(raw)
            })
        }
        "momentum_rsi" => {
            let n = w("window")?;
            let mut prev = Prev::default();
            let (mut up, mut dn) = (Ema::new(n), Ema::new(n));
            Box::new(move |b| {
                let p = prev.step(b)?;
                let d = b.close - p.close;
                let u = up.next(d.max(0.0));
                let v = dn.next((-d).max(0.0));
                let (u, v) = (u?, v?);
                Some(if u + v == 0.0 { 50.0 } else { 100.0 * u / (u + v) })
            })
        }
        "momentum_tsi" => {
            let (r, s) = (w("slow")?, w("fast")?);
            let mut prev = Prev::default();
            let (mut a1, mut a2) = (Ema::new(r), Ema::new(s));
            let (mut b1, mut b2) = (Ema::new(r), Ema::new(s));
            Box::new(move |b| {
                let p = prev.step(b)?;
                let m = b.close - p.close;
                let x = a1.next(m);
                let m1 = a2.feed(x);
                let y = b1.next(m.abs());
                let m2 = b2.feed(y);
                Some(100.0 * ratio_or_zero(m1?, m2?))
            })
        }
        "momentum_uo" => {
            let ns = [w("short")?, w("medium")?, w("long")?];
            let ws = [spec.constant("ws")?, spec.constant("wm")?, spec.constant("wl")?];
            let mut prev = Prev::default();
            let mut bps: Vec<RollingSum> = ns.iter().map(|&n| RollingSum::new(n)).collect();
            let mut trs: Vec<RollingSum> = ns.iter().map(|&n| RollingSum::new(n)).collect();
            Box::new(move |b| {
                let p = prev.step(b)?;
                let floor = b.low.min(p.close);
                let bp = b.close - floor;
                let tr = b.high.max(p.close) - floor;
                let mut avgs = [None; 3];
                for k in 0..3 {
                    let s1 = bps[k].next(bp);
                    let s2 = trs[k].next(tr);
                    avgs[k] = match (s1, s2) {
                        (Some(x), Some(y)) => Some(ratio_or_zero(x, y)),
                        _ => None,
                    };
                }
                let [a, m, l] = avgs;
                Some(100.0 * (ws[0] * a? + ws[1] * m? + ws[2] * l?) / (ws[0] + ws[1] + ws[2]))
            })
        }
        "momentum_stoch" => {
            let mut st = Stoch::new(w("window")?);
            Box::new(move |b| st.step(b))
        }
        "momentum_stoch_signal" => {
            let mut st = Stoch::new(w("window")?);
            let mut ma = Sma::new(w("smooth")?);
            Box::new(move |b| ma.feed(st.step(b)))
        }
        "momentum_wr" => {
            let n = w("window")?;
            let (mut hi, mut lo) = (RollingMax::new(n), RollingMin::new(n));
            Box::new(move |b| {
                let h = hi.next(b.high);
                let l = lo.next(b.low);
                let (h, l) = (h?, l?);
                Some(if h == l { 0.0 } else { -100.0 * (h - b.close) / (h - l) })
            })
        }
        "momentum_ao" => {
            let (mut s, mut l) = (Sma::new(w("short")?), Sma::new(w("long")?));
            Box::new(move |b| {
                let mp = (b.high + b.low) / 2.0;
                let a = s.next(mp);
                let c = l.next(mp);
                Some(a? - c?)
            })
        }
        other => return Err(IndicatorError::UnknownIndicator(other.to_string())),
    };
    Ok(f)
}
