//! Seeded synthetic data: price paths, multi-exchange feeds and toy
//! classification sets for tests and demos.

use chrono::{Days, NaiveDate};
use rand::Rng;
use rand_distr::{Distribution, Normal};

use crate::classifiers::{Dataset, FeatureMatrix};
use crate::market_data::{Bar, BarSeries, ObservedBar, RawSeries};
use crate::rng::rng_from_seed;
use crate::Matrix;

/// Geometric random walk with consistent OHLC and lognormal volume.
pub fn random_walk_bars(n: usize, seed: u64, start: NaiveDate) -> BarSeries {
    let mut rng = rng_from_seed(seed);
    let ret = Normal::new(0.0005, 0.03).unwrap();
    let wick = Normal::new(0.0, 0.012).unwrap();
    let vol = Normal::new(9.0, 0.5).unwrap();
    let mut close = 4000.0 + rng.gen_range(0.0..2000.0);
    let mut bars = Vec::with_capacity(n);
    for i in 0..n {
        let open = close;
        close = open * f64::exp(ret.sample(&mut rng));
        let top = open.max(close);
        let bot = open.min(close);
        let high = top * (1.0 + f64::abs(wick.sample(&mut rng)));
        let low = bot * (1.0 - f64::abs(wick.sample(&mut rng)).min(0.5));
        bars.push(Bar {
            timestamp: start + Days::new(i as u64),
            open,
            high,
            low,
            close,
            volume: f64::exp(vol.sample(&mut rng)),
        });
    }
    BarSeries::new(bars, None).expect("generated bars are valid")
}

/// Per-exchange feeds around one latent price path, with independent
/// volume, small price dislocations and randomly blanked fields.
///
/// The first bar of every feed is fully observed.
pub fn exchange_feeds(
    n: usize,
    seed: u64,
    start: NaiveDate,
    exchanges: &[&str],
    missing_rate: f64,
) -> Vec<RawSeries> {
    let base = random_walk_bars(n, seed, start);
    exchanges
        .iter()
        .enumerate()
        .map(|(k, name)| {
            let mut rng = rng_from_seed(seed ^ (0x9e37_79b9_7f4a_7c15_u64.wrapping_mul(k as u64 + 1)));
            let noise = Normal::new(0.0, 0.002).unwrap();
            let bars = base
                .bars()
                .iter()
                .enumerate()
                .map(|(i, b)| {
                    let s = 1.0 + noise.sample(&mut rng);
                    let v = b.volume * rng.gen_range(0.2..1.8);
                    let mut ob = ObservedBar::from(Bar {
                        timestamp: b.timestamp,
                        open: b.open * s,
                        high: b.high * s,
                        low: b.low * s,
                        close: b.close * s,
                        volume: v,
                    });
                    if i > 0 {
                        for f in [&mut ob.open, &mut ob.high, &mut ob.low, &mut ob.close, &mut ob.volume] {
                            if rng.gen_bool(missing_rate) {
                                *f = None;
                            }
                        }
                    }
                    ob
                })
                .collect();
            RawSeries::new(bars, Some(name.to_string())).expect("ordered")
        })
        .collect()
}

/// Two isotropic 2-D Gaussian classes with means at `±sep/2` on both axes.
pub fn two_gaussians(n: usize, sep: f64, seed: u64) -> Dataset {
    let mut rng = rng_from_seed(seed);
    let z = Normal::new(0.0, 1.0).unwrap();
    let mut rows = Vec::with_capacity(n);
    let mut y = Vec::with_capacity(n);
    for i in 0..n {
        let label = (i % 2) as u8;
        let c = if label == 1 { sep / 2.0 } else { -sep / 2.0 };
        rows.push([c + z.sample(&mut rng), c + z.sample(&mut rng)]);
        y.push(label);
    }
    let x = FeatureMatrix::new(vec!["x1".into(), "x2".into()], Matrix::from_rows(&rows)).unwrap();
    Dataset::new(x, y).unwrap()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn feeds_are_deterministic_and_start_complete() {
        let d0 = NaiveDate::from_ymd_opt(2017, 8, 1).unwrap();
        let a = exchange_feeds(50, 4, d0, &["a", "b"], 0.05);
        let b = exchange_feeds(50, 4, d0, &["a", "b"], 0.05);
        assert_eq!(a, b);
        assert!(a.iter().all(|s| s.bars[0].is_complete()));
        assert_ne!(a[0].bars[1].close, a[1].bars[1].close);
    }
}
