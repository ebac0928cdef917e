//! One line per headline criterion, with the measured value next to its
//! pinned tolerance. Exits non-zero if any line fails.

mod common;

use std::time::Instant;

use chrono::Days;
use cryptostack::classifiers::svm::{kernel_matrix, solve_dual};
use cryptostack::classifiers::{train, EnetParams, Family, FittedModel, GbtParams, Hyperparams, Kernel, TrainedClassifier};
use cryptostack::importance::{combine_importance, stacked_importance, DEFAULT_GRID_SIZE};
use cryptostack::indicators::{compute_columns, default_catalog, FeatureFrame};
use cryptostack::pipeline::{emit_report, run_pipeline, window_label, RunConfig, METRIC_ROWS};
use cryptostack::rng::rng_from_seed;
use cryptostack::stacking::{build_level_one, train_meta, LevelOneData, MetaConfig, MetaLearner, StackMode};
use cryptostack::synthetic::{random_walk_bars, two_gaussians};
use cryptostack::validation::{auc, build_purged_folds, log_loss, study_fold_boundaries};
use cryptostack::{DateRange, Matrix, NaiveDate};
use nalgebra::DMatrix;
use rand::Rng;

const INDICATOR_TOL: f64 = 1e-9;
const INDICATOR_SECS: f64 = 10.0;
const MIN_ACCURACY: f64 = 0.95;
const ENET_TOL: f64 = 1e-4;
const LEAF_TOL: f64 = 1e-6;
const KKT_TOL: f64 = 1e-4;
const QP_TOL: f64 = 1e-6;
const PURGE_DAYS: i64 = 7;
const GRAD_TOL: f64 = 1e-5;
const PERFECT_LOSS: f64 = 0.1;
const STACK_MARGIN: f64 = 0.02;
const LN2_TOL: f64 = 1e-12;
const DESK_SECS: f64 = 600.0;

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: String) -> Outcome {
    Outcome { pass, detail }
}

fn d0() -> NaiveDate {
    NaiveDate::from_ymd_opt(2017, 8, 1).unwrap()
}

fn indicator_oracle() -> Outcome {
    let t0 = Instant::now();
    let specs = default_catalog();
    let mut mismatches = 0;
    let mut checked = 0;
    for seed in 0..10 {
        let s = random_walk_bars(250, seed, d0());
        let got = compute_columns(s.bars(), &specs).unwrap();
        let want = common::indicator_oracle(s.bars());
        for (spec, col) in specs.iter().zip(&got) {
            let w = &want.iter().find(|(n, _)| *n == spec.name).unwrap().1;
            for (g, o) in col.iter().zip(w) {
                checked += 1;
                let ok = match g {
                    None => o.is_nan(),
                    Some(g) => !o.is_nan() && common::close_rel(*g, *o, INDICATOR_TOL),
                };
                mismatches += usize::from(!ok);
            }
        }
    }
    let secs = t0.elapsed().as_secs_f64();
    outcome(
        mismatches == 0 && secs < INDICATOR_SECS,
        format!(
            "{} columns x 10 series x 250 bars, {mismatches}/{checked} mismatches at rel {INDICATOR_TOL:e}, {secs:.2}s < {INDICATOR_SECS}s",
            specs.len()
        ),
    )
}

fn bounds() -> Outcome {
    let specs = default_catalog();
    let idx = |n: &str| specs.iter().position(|s| s.name == n).unwrap();
    let (rsi, st, sts, wr, atr) = (idx("momentum_rsi"), idx("momentum_stoch"), idx("momentum_stoch_signal"), idx("momentum_wr"), idx("volatility_atr"));
    let (bl, bm, bh) = (idx("volatility_bbl"), idx("volatility_bbm"), idx("volatility_bbh"));
    let mut violations = 0;
    for seed in 0..1000u64 {
        let n = 60 + (seed as usize * 37) % 200;
        let s = random_walk_bars(n, 10_000 + seed, d0());
        let c = compute_columns(s.bars(), &specs).unwrap();
        for t in 0..n {
            for j in [rsi, st, sts] {
                violations += c[j][t].map_or(0, |v| usize::from(!(0.0..=100.0).contains(&v)));
            }
            violations += c[wr][t].map_or(0, |v| usize::from(!(-100.0..=0.0).contains(&v)));
            violations += c[atr][t].map_or(0, |v| usize::from(v < 0.0));
            if let (Some(l), Some(m), Some(h)) = (c[bl][t], c[bm][t], c[bh][t]) {
                violations += usize::from(!(l <= m && m <= h));
            }
        }
    }
    outcome(violations == 0, format!("1000 series, {violations} violations"))
}

const FAMILIES: [Family; 9] = [
    Family::Xgb,
    Family::Lgbm,
    Family::Rf,
    Family::Svm,
    Family::Knn,
    Family::LogitEnet,
    Family::Nb,
    Family::Lda,
    Family::Qda,
];

fn rows_of(x: &Matrix) -> Vec<Vec<f64>> {
    x.iter_rows().map(<[f64]>::to_vec).collect()
}

fn classifier_sanity() -> Outcome {
    let tr = two_gaussians(400, 4.0, 1);
    let te = two_gaussians(400, 4.0, 2);
    let mut worst = (1.0, Family::Xgb);
    for f in FAMILIES {
        let m = train(&tr, &Hyperparams::default_for(f), 5).unwrap();
        let pred = m.predict_label(&te.x).unwrap();
        let acc = pred.iter().zip(&te.y).filter(|(a, b)| a == b).count() as f64 / te.y.len() as f64;
        if acc < worst.0 {
            worst = (acc, f);
        }
    }
    let mut disagreements = 0;
    for seed in 0..5 {
        let a = two_gaussians(400, 1.5, 100 + seed);
        let b = two_gaussians(400, 1.5, 200 + seed);
        for (hp, pooled) in [(Hyperparams::Lda, true), (Hyperparams::Qda, false)] {
            let m = train(&a, &hp, 0).unwrap();
            let oracle = common::GaussianOracle::fit(&rows_of(a.x.data()), &a.y, pooled);
            let got = m.predict_label(&b.x).unwrap();
            disagreements += rows_of(b.x.data()).iter().zip(&got).filter(|(r, g)| oracle.predict(r) != **g).count();
        }
    }
    let d = two_gaussians(400, 1.0, 9);
    let hp = Hyperparams::LogitEnet(EnetParams { alpha: 0.5, lambda: 0.0, tol: 1e-12, max_sweeps: 10_000 });
    let FittedModel::Enet(e) = train(&d, &hp, 0).unwrap().model else { unreachable!() };
    let (b0, b) = common::logistic_mle(&rows_of(d.x.data()), &d.y);
    let dist = ((e.intercept - b0).powi(2) + e.coefficients.iter().zip(&b).map(|(x, y)| (x - y).powi(2)).sum::<f64>()).sqrt();
    outcome(
        worst.0 >= MIN_ACCURACY && disagreements == 0 && dist < ENET_TOL,
        format!(
            "min held-out accuracy {:.4} ({:?}) >= {MIN_ACCURACY}; LDA/QDA oracle disagreements {disagreements}/4000; enet-MLE distance {dist:.2e} < {ENET_TOL:e}",
            worst.0, worst.1
        ),
    )
}

fn gbt_model(hp: Hyperparams) -> cryptostack::classifiers::GbtModel {
    let d = two_gaussians(300, 1.0, 4);
    match train(&d, &hp, 3).unwrap().model {
        FittedModel::Gbt(m) => m,
        _ => unreachable!(),
    }
}

fn gbt() -> Outcome {
    let mut max_rise = f64::NEG_INFINITY;
    let mut max_leaf: f64 = 0.0;
    for hist in [false, true] {
        let wrap = |p| if hist { Hyperparams::Lgbm(p) } else { Hyperparams::Xgb(p) };
        let m = gbt_model(wrap(GbtParams { n_estimators: 100, ..GbtParams::default() }));
        for w in m.train_loss.windows(2) {
            max_rise = max_rise.max(w[1] - w[0]);
        }
        let m = gbt_model(wrap(GbtParams { reg_lambda: 1e12, n_estimators: 20, ..GbtParams::default() }));
        max_leaf = max_leaf.max(m.max_abs_leaf());
    }
    outcome(
        max_rise <= 0.0 && max_leaf < LEAF_TOL,
        format!("largest per-round loss change {max_rise:.3e} <= 0 over 100 rounds; max |leaf| at lambda=1e12 {max_leaf:.2e} < {LEAF_TOL:e}"),
    )
}

fn svm_instance(n: usize, seed: u64) -> (Matrix, Vec<f64>) {
    let d = two_gaussians(n, 1.0, seed);
    (d.x.data().clone(), d.y.iter().map(|&v| if v == 1 { 1.0 } else { -1.0 }).collect())
}

fn svm() -> Outcome {
    let (x, y) = svm_instance(200, 8);
    let mut infeasible = 0;
    let mut max_kkt: f64 = 0.0;
    for (kernel, c) in [(Kernel::Rbf, 1.0), (Kernel::Rbf, 10.0), (Kernel::Linear, 0.5)] {
        let s = solve_dual(&kernel_matrix(&x, kernel, 0.5), &y, c, 1e-5, 1_000_000).unwrap();
        infeasible += s.alpha.iter().filter(|a| !(0.0..=c).contains(*a)).count();
        max_kkt = max_kkt.max(s.kkt_residual);
    }
    let mut max_gap: f64 = 0.0;
    for seed in 0..10 {
        let n = 12 + (seed as usize % 9);
        let (x, y) = svm_instance(n, 300 + seed);
        for (kernel, c) in [(Kernel::Rbf, 1.0), (Kernel::Linear, 0.3), (Kernel::Rbf, 50.0)] {
            let k = kernel_matrix(&x, kernel, 0.7);
            let s = solve_dual(&k, &y, c, 1e-10, 1_000_000).unwrap();
            let (_, obj) = common::dense_qp_oracle(&DMatrix::from_fn(n, n, |i, j| k.get(i, j)), &y, c);
            max_gap = max_gap.max((s.objective - obj).abs());
        }
    }
    outcome(
        infeasible == 0 && max_kkt < KKT_TOL && max_gap < QP_TOL,
        format!("{infeasible} alphas outside [0, C]; max KKT residual {max_kkt:.2e} < {KKT_TOL:e}; n<=20 objective gap {max_gap:.2e} < {QP_TOL:e}"),
    )
}

fn ymd(y: i32, m: u32, d: u32) -> NaiveDate {
    NaiveDate::from_ymd_opt(y, m, d).unwrap()
}

fn purged_cv() -> Outcome {
    let idx: Vec<NaiveDate> = (0..365).map(|i| d0() + Days::new(i)).collect();
    let plan = build_purged_folds(&idx, &study_fold_boundaries(), PURGE_DAYS as u64).unwrap();
    let table = [
        (ymd(2017, 10, 31), ymd(2017, 11, 1), ymd(2017, 11, 30)),
        (ymd(2017, 11, 30), ymd(2017, 12, 1), ymd(2017, 12, 31)),
        (ymd(2017, 12, 31), ymd(2018, 1, 1), ymd(2018, 1, 31)),
        (ymd(2018, 1, 31), ymd(2018, 2, 1), ymd(2018, 2, 28)),
        (ymd(2018, 2, 28), ymd(2018, 3, 1), ymd(2018, 3, 31)),
    ];
    let exact = plan.folds.len() == 5
        && plan.folds.iter().zip(table).all(|(f, (te, ss, se))| {
            f.train == DateRange::new(d0(), te - Days::new(PURGE_DAYS as u64))
                && f.purge == Some(DateRange::new(te - Days::new(PURGE_DAYS as u64 - 1), te))
                && f.test == DateRange::new(ss, se)
        });
    let min_gap = plan.folds.iter().map(|f| (f.test.start - f.train.end).num_days()).min().unwrap();
    outcome(
        exact && min_gap > PURGE_DAYS,
        format!("5 folds Aug-Oct 2017/Nov 2017 .. Aug 2017-Feb 2018/Mar 2018 exact: {exact}; min(test) - max(train) = {min_gap} > {PURGE_DAYS} days"),
    )
}

fn meta_learner() -> Outcome {
    let mut rng = rng_from_seed(2024);
    let h = 1e-5;
    let mut worst: f64 = 0.0;
    for net in 0..50 {
        let k = rng.gen_range(2..6);
        let width = rng.gen_range(0..7);
        let n = rng.gen_range(5..30);
        let mut m = MetaLearner::init((0..k).map(|i| format!("m{i}")).collect(), MetaConfig { hidden_width: width, seed: net, ..MetaConfig::default() });
        let p: Vec<f64> = m.params().iter().map(|_| rng.gen_range(-2.0..2.0)).collect();
        m.set_params(&p);
        let z = Matrix::from_vec(n, k, (0..n * k).map(|_| rng.gen::<f64>()).collect());
        let y: Vec<u8> = (0..n).map(|_| rng.gen_range(0..2u8)).collect();
        let g = m.gradient(&z, &y);
        for i in 0..p.len() {
            let mut probe = m.clone();
            let mut q = p.clone();
            q[i] += h;
            probe.set_params(&q);
            let up = probe.loss(&z, &y);
            q[i] = p[i] - h;
            probe.set_params(&q);
            let fd = (up - probe.loss(&z, &y)) / (2.0 * h);
            worst = worst.max((g[i] - fd).abs() / g[i].abs().max(fd.abs()).max(1e-4));
        }
    }
    let mut rng = rng_from_seed(5);
    let n = 200;
    let y: Vec<u8> = (0..n).map(|_| rng.gen_range(0..2u8)).collect();
    let z: Vec<[f64; 3]> = y.iter().map(|&v| [f64::from(v), f64::from(rng.gen_range(0..2u8)), f64::from(rng.gen_range(0..2u8))]).collect();
    let ts: Vec<NaiveDate> = (0..n).map(|i| d0() + Days::new(i as u64)).collect();
    let data = LevelOneData::new(ts, Matrix::from_rows(&z), y, vec!["a".into(), "b".into(), "c".into()], StackMode::Hard).unwrap();
    let m = train_meta(&data, &MetaConfig::default()).unwrap();
    let last = *m.training_curve.last().unwrap();
    let epochs = m.training_curve.len() - 1;
    outcome(
        worst <= GRAD_TOL && last < PERFECT_LOSS && epochs <= 5000,
        format!("50 nets, worst backprop/central-difference rel error {worst:.2e} <= {GRAD_TOL:e}; perfect-column loss {last:.4} < {PERFECT_LOSS} after {epochs} epochs"),
    )
}

fn weak_trio(n: usize, rng: &mut impl Rng, start: u64) -> LevelOneData {
    let mut y = Vec::new();
    let mut z = Vec::new();
    for _ in 0..n {
        let label = rng.gen_range(0..2u8);
        let row: Vec<f64> = (0..3)
            .map(|_| if (if rng.gen_bool(0.7) { label } else { 1 - label }) == 1 { 0.7 } else { 0.3 })
            .collect();
        y.push(label);
        z.push(row);
    }
    let ts = (0..n as u64).map(|i| d0() + Days::new(start + i)).collect();
    LevelOneData::new(ts, Matrix::from_rows(&z), y, vec!["a".into(), "b".into(), "c".into()], StackMode::Proba).unwrap()
}

fn stack_once(seed: u64) -> (f64, f64) {
    let mut rng = rng_from_seed(seed);
    let tr = weak_trio(400, &mut rng, 0);
    let te = weak_trio(400, &mut rng, 400);
    let meta = train_meta(&tr, &MetaConfig { seed, ..MetaConfig::default() }).unwrap();
    let stacked = log_loss(&meta.predict_all(&te.z).unwrap(), &te.y);
    let best = (0..3).map(|k| log_loss(&te.z.column(k), &te.y)).fold(f64::INFINITY, f64::min);
    (stacked, best)
}

fn stacking_value() -> Outcome {
    let (stacked, best) = stack_once(1);
    let again = stack_once(1);
    outcome(
        stacked <= best + STACK_MARGIN && again == (stacked, best),
        format!("held-out log-loss stacked {stacked:.4} <= best single {best:.4} + {STACK_MARGIN}; rerun identical: {}", again == (stacked, best)),
    )
}

fn importance() -> Outcome {
    let mut rng = rng_from_seed(8);
    let mut max_sum_err: f64 = 0.0;
    for _ in 0..200 {
        let k = rng.gen_range(1..8);
        let scores: Vec<f64> = (0..k).map(|_| rng.gen_range(0.0..3.0)).collect();
        let per: Vec<Vec<f64>> = (0..k).map(|_| vec![rng.gen(); 4]).collect();
        let c = combine_importance(&scores, &per);
        max_sum_err = max_sum_err.max((c.weights.iter().sum::<f64>() - 1.0).abs());
    }
    let single = vec![0.3, 0.0, 0.125, 7.5];
    let exact = [0.4, 1.0, 17.0].iter().all(|&s| {
        let c = combine_importance(&[s], std::slice::from_ref(&single));
        c.weights == [1.0] && c.combined == single
    });
    let mut first = 0;
    for seed in 0..20 {
        let mut rng = rng_from_seed(seed);
        let n = 300;
        let a: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let b: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let y = a.iter().map(|&v| u8::from(v > 0.0) ^ u8::from(rng.gen_bool(0.1))).collect();
        let ts: Vec<NaiveDate> = (0..n).map(|i| d0() + Days::new(i as u64)).collect();
        let frame = FeatureFrame::new(ts.clone(), vec!["a".into(), "b".into()], vec![a, b], y).unwrap();
        let l0 = DateRange::new(ts[0], ts[199]);
        let l1 = DateRange::new(ts[200], ts[299]);
        let models: Vec<TrainedClassifier> = [Hyperparams::Lda, Hyperparams::default_for(Family::Knn), Hyperparams::Nb]
            .iter()
            .map(|hp| {
                let mut m = train(&frame.dataset(&frame.rows_in(&l0)), hp, seed).unwrap();
                m.training_window = Some(l0);
                m
            })
            .collect();
        let level_one = build_level_one(&models, &frame, &l1, StackMode::Hard).unwrap();
        let meta = train_meta(&level_one, &MetaConfig { seed, ..MetaConfig::default() }).unwrap();
        let report = stacked_importance(&meta, &models, &level_one, &frame, DEFAULT_GRID_SIZE).unwrap();
        let wsum: f64 = report.models.iter().map(|m| m.weight).sum();
        max_sum_err = max_sum_err.max((wsum - 1.0).abs());
        first += usize::from(report.ranking()[0].feature == "a");
    }
    outcome(
        max_sum_err < 1e-12 && exact && first == 20,
        format!("max |sum(w) - 1| {max_sum_err:.1e} < 1e-12; K=1 exact: {exact}; signal feature first in {first}/20 seeds"),
    )
}

fn metrics() -> Outcome {
    let mut rng = rng_from_seed(77);
    let mut unequal = 0;
    for round in 0..20 {
        let score: Vec<f64> = (0..200)
            .map(|_| if round % 2 == 0 { rng.gen::<f64>() } else { f64::from(rng.gen_range(0..8u8)) / 8.0 })
            .collect();
        let y: Vec<u8> = (0..200).map(|_| rng.gen_range(0..2u8)).collect();
        unequal += usize::from(auc(&score, &y).unwrap() != common::auc_pairs(&score, &y));
    }
    let y: Vec<u8> = (0..200).map(|i| (i % 2) as u8).collect();
    let err = (log_loss(&[0.5; 200], &y) - std::f64::consts::LN_2).abs();
    outcome(
        unequal == 0 && err <= LN2_TOL,
        format!("AUC vs pair counting on 200 points: {unequal}/20 rounds differ; |logloss(0.5) - ln 2| = {err:.1e} <= {LN2_TOL:e}"),
    )
}

fn determinism_and_desk_run(dir: &std::path::Path) -> (Outcome, RunConfig) {
    let small = dir.join("small");
    std::fs::create_dir_all(&small).unwrap();
    let base = common::synthetic_config(&small, &[Family::Xgb, Family::Rf, Family::Knn, Family::Lda, Family::Nb], 4, 11);
    let run = |threads: usize, out: &str| {
        let mut c = base.clone();
        c.out_dir = small.join(out);
        let pool = rayon::ThreadPoolBuilder::new().num_threads(threads).build().unwrap();
        pool.install(|| run_pipeline(c.clone())).unwrap();
        common::artifact_bytes(&c.out_dir)
    };
    let a = run(1, "one");
    let b = run(4, "four");
    let identical = a == b;

    let desk = dir.join("desk");
    std::fs::create_dir_all(&desk).unwrap();
    let c = common::synthetic_config(&desk, &FAMILIES, 100, 7);
    let t0 = Instant::now();
    let ok = run_pipeline(c.clone()).is_ok();
    let secs = t0.elapsed().as_secs_f64();
    (
        outcome(
            identical && ok && secs < DESK_SECS,
            format!(
                "{} artifacts byte-identical under 1 vs 4 threads: {identical}; desk run (365 bars, 9 models, 100 iterations) {secs:.0}s < {DESK_SECS}s",
                a.len()
            ),
        ),
        c,
    )
}

fn report_schema(c: &RunConfig) -> Outcome {
    let Ok(text) = emit_report(&c.out_dir) else {
        return outcome(false, "no report".into());
    };
    let labels = [window_label(&c.windows.level1), window_label(&c.windows.evaluation)];
    let lines: Vec<&str> = text.lines().collect();
    let mut tables = 0;
    let mut bad = 0;
    for (i, l) in lines.iter().enumerate() {
        if !l.starts_with("Model: ") {
            continue;
        }
        tables += 1;
        let header: Vec<&str> = lines[i + 1].split("  ").map(str::trim).filter(|s| !s.is_empty()).collect();
        bad += usize::from(header != ["Parameter", labels[0].as_str(), labels[1].as_str()]);
        let rows: Vec<&str> = (0..METRIC_ROWS.len()).map(|k| lines[i + 2 + k].split_whitespace().next().unwrap_or("")).collect();
        bad += usize::from(rows != METRIC_ROWS);
        bad += usize::from(!lines[i + 2 + METRIC_ROWS.len()].is_empty());
        bad += (0..METRIC_ROWS.len()).filter(|k| lines[i + 2 + k].split_whitespace().count() != 3).count();
    }
    outcome(
        bad == 0 && tables == 10,
        format!("{tables} tables (9 models + stacked), rows {METRIC_ROWS:?}, columns [{}, {}], {bad} schema faults", labels[0], labels[1]),
    )
}

fn main() {
    let dir = tempfile::tempdir().unwrap();
    let mut results: Vec<(&str, Outcome)> = vec![
        ("indicator oracle", indicator_oracle()),
        ("indicator bounds", bounds()),
        ("classifier sanity", classifier_sanity()),
        ("gradient boosting", gbt()),
        ("svm dual", svm()),
        ("purged cv", purged_cv()),
        ("meta-learner", meta_learner()),
        ("stacking value", stacking_value()),
        ("combined importance", importance()),
        ("metrics", metrics()),
    ];
    let (e2e, desk) = determinism_and_desk_run(dir.path());
    results.push(("end-to-end determinism", e2e));
    results.push(("report schema", report_schema(&desk)));
    let mut failed = 0;
    for (name, o) in &results {
        println!("{} {name}: {}", if o.pass { "PASS" } else { "FAIL" }, o.detail);
        failed += usize::from(!o.pass);
    }
    println!("acceptance: {} passed, {failed} failed", results.len() - failed);
    if failed > 0 {
        std::process::exit(1);
    }
}
