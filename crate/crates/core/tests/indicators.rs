mod common;

use cryptostack::indicators::{compute_columns, default_catalog};
use cryptostack::market_data::Bar;
use cryptostack::synthetic::random_walk_bars;
use cryptostack::NaiveDate;
use proptest::prelude::*;

fn d0() -> NaiveDate {
    NaiveDate::from_ymd_opt(2017, 8, 1).unwrap()
}

/// Compares every catalog column with the oracle; returns mismatch messages.
fn oracle_mismatches(bars: &[Bar]) -> Vec<String> {
    let specs = default_catalog();
    let got = compute_columns(bars, &specs).unwrap();
    let want = common::indicator_oracle(bars);
    let mut bad = Vec::new();
    assert_eq!(want.len(), specs.len(), "oracle covers every catalog column");
    for (spec, col) in specs.iter().zip(&got) {
        let (_, w) = want
            .iter()
            .find(|(n, _)| *n == spec.name)
            .unwrap_or_else(|| panic!("oracle lacks {}", spec.name));
        for (t, (g, o)) in col.iter().zip(w).enumerate() {
            let ok = match g {
                None => o.is_nan(),
                Some(g) => !o.is_nan() && common::close_rel(*g, *o, 1e-9),
            };
            if !ok {
                bad.push(format!("{} t={t}: got {g:?}, oracle {o}", spec.name));
                break;
            }
        }
    }
    bad
}

#[test]
fn catalog_matches_oracle_on_random_series() {
    let t0 = std::time::Instant::now();
    for seed in 0..10 {
        let s = random_walk_bars(250, seed, d0());
        let bad = oracle_mismatches(s.bars());
        assert!(bad.is_empty(), "seed {seed}: {bad:#?}");
    }
    assert!(t0.elapsed().as_secs_f64() < 10.0);
}

#[test]
fn catalog_matches_oracle_on_flat_stretches() {
    // Constant prices hit every zero-range branch.
    let mut bars = random_walk_bars(220, 3, d0()).bars().to_vec();
    for b in &mut bars[60..120] {
        let p = 5000.0;
        (b.open, b.high, b.low, b.close) = (p, p, p, p);
    }
    let bad = oracle_mismatches(&bars);
    assert!(bad.is_empty(), "{bad:#?}");
}

#[test]
fn warmup_matches_first_defined_value() {
    let s = random_walk_bars(250, 11, d0());
    let specs = default_catalog();
    let cols = compute_columns(s.bars(), &specs).unwrap();
    for (spec, col) in specs.iter().zip(&cols) {
        let first = col.iter().position(Option::is_some).unwrap();
        assert_eq!(first, spec.warmup().unwrap(), "{}", spec.name);
        assert!(col[first..].iter().all(Option::is_some), "{} has a gap", spec.name);
    }
}

fn column<'a>(cols: &'a [Vec<Option<f64>>], name: &str) -> &'a [Option<f64>] {
    let i = default_catalog().iter().position(|s| s.name == name).unwrap();
    &cols[i]
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(1000))]

    #[test]
    fn oscillators_and_bands_stay_in_bounds(seed in any::<u64>(), n in 60usize..200) {
        let s = random_walk_bars(n, seed, d0());
        let cols = compute_columns(s.bars(), &default_catalog()).unwrap();
        let vals = |name| column(&cols, name).iter().flatten().copied().collect::<Vec<f64>>();
        for v in vals("momentum_rsi").into_iter().chain(vals("momentum_stoch")).chain(vals("momentum_stoch_signal")) {
            prop_assert!((0.0..=100.0).contains(&v), "oscillator {v}");
        }
        for v in vals("momentum_wr") {
            prop_assert!((-100.0..=0.0).contains(&v), "wr {v}");
        }
        for v in vals("volatility_atr") {
            prop_assert!(v >= 0.0, "atr {v}");
        }
        let (l, m, h) = (vals("volatility_bbl"), vals("volatility_bbm"), vals("volatility_bbh"));
        for i in 0..m.len() {
            prop_assert!(l[i] <= m[i] && m[i] <= h[i]);
        }
    }
}
