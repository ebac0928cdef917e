//! Independent reference implementations used by the integration and
//! acceptance suites. Nothing here calls into the library's numerics.
#![allow(dead_code)]

use cryptostack::market_data::Bar;
use nalgebra::{DMatrix, DVector};

// ---------------------------------------------------------------------------
// Indicators, array at a time. NaN marks "not yet defined".

fn defined(x: f64) -> bool {
    !x.is_nan()
}

fn window_op(x: &[f64], n: usize, f: impl Fn(&[f64]) -> f64) -> Vec<f64> {
    (0..x.len())
        .map(|t| {
            if t + 1 < n {
                return f64::NAN;
            }
            let w = &x[t + 1 - n..=t];
            if w.iter().all(|v| defined(*v)) {
                f(w)
            } else {
                f64::NAN
            }
        })
        .collect()
}

pub fn sma(x: &[f64], n: usize) -> Vec<f64> {
    window_op(x, n, |w| w.iter().sum::<f64>() / n as f64)
}

pub fn rsum(x: &[f64], n: usize) -> Vec<f64> {
    window_op(x, n, |w| w.iter().sum())
}

pub fn rmax(x: &[f64], n: usize) -> Vec<f64> {
    window_op(x, n, |w| w.iter().cloned().fold(f64::MIN, f64::max))
}

pub fn rmin(x: &[f64], n: usize) -> Vec<f64> {
    window_op(x, n, |w| w.iter().cloned().fold(f64::MAX, f64::min))
}

/// Population standard deviation over the window.
pub fn rstd(x: &[f64], n: usize) -> Vec<f64> {
    window_op(x, n, |w| {
        let m = w.iter().sum::<f64>() / n as f64;
        (w.iter().map(|v| (v - m).powi(2)).sum::<f64>() / n as f64).sqrt()
    })
}

/// EMA with `α = 2/(n+1)`, seeded by the mean of the first `n` defined values.
pub fn ema(x: &[f64], n: usize) -> Vec<f64> {
    let mut out = vec![f64::NAN; x.len()];
    let Some(s) = x.iter().position(|v| defined(*v)) else {
        return out;
    };
    if s + n > x.len() {
        return out;
    }
    let a = 2.0 / (n as f64 + 1.0);
    let mut e = x[s..s + n].iter().sum::<f64>() / n as f64;
    out[s + n - 1] = e;
    for t in s + n..x.len() {
        e = a * x[t] + (1.0 - a) * e;
        out[t] = e;
    }
    out
}

pub fn lag(x: &[f64], k: usize) -> Vec<f64> {
    (0..x.len()).map(|t| if t >= k { x[t - k] } else { f64::NAN }).collect()
}

fn zip2(a: &[f64], b: &[f64], f: impl Fn(f64, f64) -> f64) -> Vec<f64> {
    a.iter().zip(b).map(|(x, y)| f(*x, *y)).collect()
}

fn safe_div(a: f64, b: f64) -> f64 {
    if b == 0.0 {
        0.0
    } else {
        a / b
    }
}

fn ind(c: bool) -> f64 {
    if c {
        1.0
    } else {
        0.0
    }
}

/// Every catalog column by its canonical name.
pub fn indicator_oracle(bars: &[Bar]) -> Vec<(&'static str, Vec<f64>)> {
    let n = bars.len();
    let o: Vec<f64> = bars.iter().map(|b| b.open).collect();
    let _ = o;
    let h: Vec<f64> = bars.iter().map(|b| b.high).collect();
    let l: Vec<f64> = bars.iter().map(|b| b.low).collect();
    let c: Vec<f64> = bars.iter().map(|b| b.close).collect();
    let v: Vec<f64> = bars.iter().map(|b| b.volume).collect();
    let pc = lag(&c, 1);
    let ph = lag(&h, 1);
    let pl = lag(&l, 1);
    let pv = lag(&v, 1);
    let mut out: Vec<(&'static str, Vec<f64>)> = Vec::new();

    // Volume.
    let clv: Vec<f64> = (0..n).map(|t| safe_div((c[t] - l[t]) - (h[t] - c[t]), h[t] - l[t])).collect();
    let mut acc = 0.0;
    out.push(("volume_adi", (0..n).map(|t| {
        acc += v[t] * clv[t];
        acc
    }).collect()));
    let mut obv_acc = 0.0;
    let obv: Vec<f64> = (0..n)
        .map(|t| {
            if t > 0 {
                obv_acc += v[t] * (c[t] - c[t - 1]).signum() * ind(c[t] != c[t - 1]);
            }
            obv_acc
        })
        .collect();
    out.push(("volume_obv", obv.clone()));
    out.push(("volume_obvm", sma(&obv, 10)));
    let mfv = zip2(&clv, &v, |a, b| a * b);
    out.push(("volume_cmf", zip2(&ema(&mfv, 20), &ema(&v, 20), safe_div)));
    out.push(("volume_fi", (0..n).map(|t| (c[t] - pc[t]) * v[t]).collect()));
    let emv: Vec<f64> = (0..n)
        .map(|t| safe_div(((h[t] - ph[t]) + (l[t] - pl[t])) * (h[t] - l[t]), 2.0 * v[t]))
        .collect();
    let emv: Vec<f64> = (0..n).map(|t| if t == 0 { f64::NAN } else { emv[t] }).collect();
    out.push(("volume_em", sma(&emv, 20)));
    let mut vpt = 0.0;
    out.push(("volume_vpt", (0..n).map(|t| {
        if t > 0 {
            vpt += v[t] * (c[t] - c[t - 1]) / c[t - 1];
        }
        vpt
    }).collect()));
    let mut nvi = 1000.0;
    out.push(("volume_nvi", (0..n).map(|t| {
        if t > 0 && v[t] > pv[t] {
            nvi *= 1.0 + (c[t] - pc[t]) / pc[t];
        }
        nvi
    }).collect()));

    // Volatility.
    let atr_tr: Vec<f64> = (0..n).map(|t| h[t].max(pc[t]) - l[t].max(pc[t])).collect();
    let atr_tr: Vec<f64> = (0..n).map(|t| if t == 0 { f64::NAN } else { atr_tr[t] }).collect();
    out.push(("volatility_atr", ema(&atr_tr, 20)));
    let bbm = sma(&c, 20);
    let sd = rstd(&c, 20);
    let bbh = zip2(&bbm, &sd, |m, s| m + 2.0 * s);
    let bbl = zip2(&bbm, &sd, |m, s| m - 2.0 * s);
    out.push(("volatility_bbm", bbm.clone()));
    out.push(("volatility_bbh", bbh.clone()));
    out.push(("volatility_bbl", bbl.clone()));
    out.push(("volatility_bbhi", zip2(&c, &bbh, |x, b| if defined(b) { ind(x > b) } else { f64::NAN })));
    out.push(("volatility_bbli", zip2(&c, &bbl, |x, b| if defined(b) { ind(x < b) } else { f64::NAN })));
    let tp: Vec<f64> = (0..n).map(|t| (h[t] + l[t] + c[t]) / 3.0).collect();
    out.push(("volatility_kcc", sma(&tp, 20)));
    let kch = sma(&(0..n).map(|t| (4.0 * h[t] - 2.0 * l[t] + c[t]) / 3.0).collect::<Vec<_>>(), 10);
    let kcl = sma(&(0..n).map(|t| (-2.0 * h[t] + 4.0 * l[t] + c[t]) / 3.0).collect::<Vec<_>>(), 10);
    out.push(("volatility_kch", kch.clone()));
    out.push(("volatility_kcl", kcl.clone()));
    out.push(("volatility_kchi", zip2(&c, &kch, |x, k| if defined(k) { ind(x > k) } else { f64::NAN })));
    out.push(("volatility_kcli", zip2(&c, &kcl, |x, k| if defined(k) { ind(x < k) } else { f64::NAN })));
    let dch = rmax(&c, 20);
    let dcl = rmin(&c, 20);
    out.push(("volatility_dch", dch.clone()));
    out.push(("volatility_dcl", dcl.clone()));
    out.push(("volatility_dchi", zip2(&c, &dch, |x, d| if defined(d) { ind(x > d) } else { f64::NAN })));
    out.push(("volatility_dcli", zip2(&c, &dcl, |x, d| if defined(d) { ind(x < d) } else { f64::NAN })));

    // Trend.
    let macd = zip2(&ema(&c, 12), &ema(&c, 26), |a, b| a - b);
    let sig = ema(&macd, 9);
    out.push(("trend_macd", macd.clone()));
    out.push(("trend_macd_signal", sig.clone()));
    out.push(("trend_macd_diff", zip2(&macd, &sig, |a, b| a - b)));
    out.push(("trend_ema", ema(&c, 12)));
    let first_nan = |x: Vec<f64>| -> Vec<f64> { x.into_iter().enumerate().map(|(t, v)| if t == 0 { f64::NAN } else { v }).collect() };
    let tr = first_nan((0..n).map(|t| h[t].max(pc[t]) - l[t].min(pc[t])).collect());
    let pos = first_nan((0..n).map(|t| {
        let up = h[t] - ph[t];
        let dn = pl[t] - l[t];
        if up > dn && up > 0.0 { up } else { 0.0 }
    }).collect());
    let neg = first_nan((0..n).map(|t| {
        let up = h[t] - ph[t];
        let dn = pl[t] - l[t];
        if dn > up && dn > 0.0 { dn } else { 0.0 }
    }).collect());
    let str20 = rsum(&tr, 20);
    let dip = zip2(&rsum(&pos, 20), &str20, |a, b| 100.0 * safe_div(a, b));
    let din = zip2(&rsum(&neg, 20), &str20, |a, b| 100.0 * safe_div(a, b));
    let dx = zip2(&dip, &din, |p, m| 100.0 * safe_div((p - m).abs(), p + m));
    out.push(("trend_adx", ema(&dx, 14)));
    out.push(("trend_adx_pos", dip.clone()));
    out.push(("trend_adx_neg", din.clone()));
    out.push(("trend_adx_ind", zip2(&dip, &din, |p, m| if defined(p) { ind(p - m > 0.0) } else { f64::NAN })));
    let str14 = rsum(&tr, 14);
    let vmp = first_nan((0..n).map(|t| (h[t] - pl[t]).abs()).collect());
    let vmn = first_nan((0..n).map(|t| (l[t] - ph[t]).abs()).collect());
    let vip = zip2(&rsum(&vmp, 14), &str14, safe_div);
    let vin = zip2(&rsum(&vmn, 14), &str14, safe_div);
    out.push(("trend_vortex_ind_pos", vip.clone()));
    out.push(("trend_vortex_ind_neg", vin.clone()));
    out.push(("trend_vortex_diff", zip2(&vip, &vin, |a, b| a - b)));
    let e3 = ema(&ema(&ema(&c, 14), 14), 14);
    let pe3 = lag(&e3, 1);
    out.push(("trend_trix", zip2(&e3, &pe3, |a, b| safe_div(a - b, b))));
    let range: Vec<f64> = (0..n).map(|t| h[t] - l[t]).collect();
    let e1 = ema(&range, 9);
    let e2 = ema(&e1, 26);
    let ratio = zip2(&e1, &e2, |a, d| if d == 0.0 { 1.0 } else { a / d });
    out.push(("trend_mass_index", rsum(&ratio, 25)));
    let ma_tp = sma(&tp, 20);
    let sd_tp = rstd(&tp, 20);
    out.push(("trend_cci", (0..n).map(|t| safe_div(tp[t] - ma_tp[t], 0.015 * sd_tp[t])).collect()));
    out.push(("trend_dpo", zip2(&lag(&c, 10), &sma(&c, 20), |a, b| a - b)));
    let roc = |r: usize, m: usize| {
        let lc = lag(&c, r);
        let ml = sma(&lc, m);
        (0..n).map(|t| (c[t] - lc[t]) / ml[t]).collect::<Vec<f64>>()
    };
    let (r1, r2, r3, r4) = (roc(10, 10), roc(15, 10), roc(20, 10), roc(30, 15));
    let kst: Vec<f64> = (0..n).map(|t| 100.0 * (r1[t] + 2.0 * r2[t] + 3.0 * r3[t] + 4.0 * r4[t])).collect();
    out.push(("trend_kst", kst.clone()));
    out.push(("trend_kst_sig", sma(&kst, 9)));
    let conv = zip2(&rmax(&h, 9), &rmin(&l, 9), |a, b| (a + b) / 2.0);
    let base = zip2(&rmax(&h, 26), &rmin(&l, 26), |a, b| (a + b) / 2.0);
    out.push(("trend_ichimoku_a", lag(&zip2(&conv, &base, |a, b| (a + b) / 2.0), 26)));
    out.push(("trend_ichimoku_b", lag(&zip2(&rmax(&h, 52), &rmin(&l, 52), |a, b| (a + b) / 2.0), 26)));

    // Momentum.
    let diff = first_nan((0..n).map(|t| c[t] - pc[t]).collect());
    let up = ema(&diff.iter().map(|d| if defined(*d) { d.max(0.0) } else { f64::NAN }).collect::<Vec<_>>(), 14);
    let dn = ema(&diff.iter().map(|d| if defined(*d) { (-d).max(0.0) } else { f64::NAN }).collect::<Vec<_>>(), 14);
    out.push(("momentum_rsi", zip2(&up, &dn, |u, d| if u + d == 0.0 { 50.0 } else { 100.0 * u / (u + d) })));
    let absd: Vec<f64> = diff.iter().map(|d| d.abs()).collect();
    out.push(("momentum_tsi", zip2(&ema(&ema(&diff, 25), 13), &ema(&ema(&absd, 25), 13), |a, b| 100.0 * safe_div(a, b))));
    let bp = first_nan((0..n).map(|t| c[t] - l[t].min(pc[t])).collect());
    let utr = first_nan((0..n).map(|t| h[t].max(pc[t]) - l[t].min(pc[t])).collect());
    let avg = |m: usize| zip2(&rsum(&bp, m), &rsum(&utr, m), safe_div);
    let (a7, a14, a28) = (avg(7), avg(14), avg(28));
    out.push(("momentum_uo", (0..n).map(|t| 100.0 * (4.0 * a7[t] + 2.0 * a14[t] + a28[t]) / 7.0).collect()));
    let hh = rmax(&h, 14);
    let ll = rmin(&l, 14);
    let stoch: Vec<f64> = (0..n)
        .map(|t| if hh[t] == ll[t] { 50.0 } else { 100.0 * (c[t] - ll[t]) / (hh[t] - ll[t]) })
        .collect();
    out.push(("momentum_stoch", stoch.clone()));
    out.push(("momentum_stoch_signal", sma(&stoch, 3)));
    out.push(("momentum_wr", (0..n)
        .map(|t| if hh[t] == ll[t] { 0.0 } else { -100.0 * (hh[t] - c[t]) / (hh[t] - ll[t]) })
        .collect()));
    let mp: Vec<f64> = (0..n).map(|t| (h[t] + l[t]) / 2.0).collect();
    out.push(("momentum_ao", zip2(&sma(&mp, 5), &sma(&mp, 34), |a, b| a - b)));
    out
}

/// `|a − b| ≤ tol · max(1, |a|, |b|)`.
pub fn close_rel(a: f64, b: f64, tol: f64) -> bool {
    (a - b).abs() <= tol * 1f64.max(a.abs()).max(b.abs())
}

// ---------------------------------------------------------------------------
// SVM dual: projected gradient to find the active set, then an exact KKT
// solve on it.

/// Euclidean projection onto `{0 ≤ a ≤ c, yᵀa = 0}` by bisection on the
/// multiplier of the equality constraint.
fn project(v: &[f64], y: &[f64], c: f64) -> Vec<f64> {
    let g = |mu: f64| -> f64 { v.iter().zip(y).map(|(x, yi)| (x - mu * yi).clamp(0.0, c) * yi).sum() };
    let (mut lo, mut hi): (f64, f64) = (-1e6, 1e6);
    while hi - lo > 1e-15 * (1.0 + lo.abs().max(hi.abs())) {
        let mid = 0.5 * (lo + hi);
        if mid == lo || mid == hi {
            break;
        }
        if g(mid) > 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let mu = 0.5 * (lo + hi);
    v.iter().zip(y).map(|(x, yi)| (x - mu * yi).clamp(0.0, c)).collect()
}

pub fn dual_objective(q: &DMatrix<f64>, a: &[f64]) -> f64 {
    let av = DVector::from_column_slice(a);
    0.5 * (av.transpose() * q * &av)[(0, 0)] - av.sum()
}

fn qp_grad(q: &DMatrix<f64>, a: &[f64]) -> Vec<f64> {
    (q * DVector::from_column_slice(a)).iter().map(|g| g - 1.0).collect()
}

/// KKT check: some offset `b` with `gᵢ + b yᵢ` zero on free points,
/// non-negative at the lower bound and non-positive at the upper bound.
fn kkt_holds(q: &DMatrix<f64>, a: &[f64], y: &[f64], c: f64, tol: f64) -> bool {
    let g = qp_grad(q, a);
    // Feasible b interval from the bound constraints; free points pin it.
    let (mut lo, mut hi) = (f64::NEG_INFINITY, f64::INFINITY);
    for i in 0..a.len() {
        let v = -g[i] * y[i];
        let at_lower = a[i] <= 0.0;
        let at_upper = a[i] >= c;
        // gᵢ + b yᵢ ≥ 0 ⇔ b yᵢ ≥ −gᵢ ⇔ (yᵢ = 1: b ≥ v) (yᵢ = −1: b ≤ v)
        if !at_upper {
            if y[i] > 0.0 { lo = lo.max(v) } else { hi = hi.min(v) }
        }
        if !at_lower {
            if y[i] > 0.0 { hi = hi.min(v) } else { lo = lo.max(v) }
        }
    }
    lo <= hi + tol
}

/// Fixes the active set read off `a` and solves the equality-constrained
/// KKT system for the free variables.
fn polish(q: &DMatrix<f64>, a: &[f64], y: &[f64], c: f64) -> Option<Vec<f64>> {
    let n = a.len();
    let tol = 1e-9 * c.max(1.0);
    let free: Vec<usize> = (0..n).filter(|&i| a[i] > tol && a[i] < c - tol).collect();
    let upper: Vec<usize> = (0..n).filter(|&i| a[i] >= c - tol).collect();
    let mut out: Vec<f64> = (0..n).map(|i| if a[i] >= c - tol { c } else { 0.0 }).collect();
    if free.is_empty() {
        return Some(out);
    }
    let f = free.len();
    let mut m = DMatrix::zeros(f + 1, f + 1);
    let mut rhs = DVector::zeros(f + 1);
    for (r, &i) in free.iter().enumerate() {
        for (s, &j) in free.iter().enumerate() {
            m[(r, s)] = q[(i, j)];
        }
        m[(r, f)] = y[i];
        m[(f, r)] = y[i];
        rhs[r] = 1.0 - upper.iter().map(|&j| q[(i, j)] * c).sum::<f64>();
    }
    rhs[f] = -upper.iter().map(|&j| y[j] * c).sum::<f64>();
    let sol = m.lu().solve(&rhs)?;
    for (r, &i) in free.iter().enumerate() {
        out[i] = sol[r];
    }
    out.iter().all(|&x| (0.0..=c).contains(&x)).then_some(out)
}

/// Minimum of `½ aᵀQa − Σa` over the SVM dual feasible set, for small `n`:
/// accelerated projected gradient until the active set is right, then an
/// exact solve on it.
pub fn dense_qp_oracle(k: &DMatrix<f64>, y: &[f64], c: f64) -> (Vec<f64>, f64) {
    let n = y.len();
    let q = DMatrix::from_fn(n, n, |i, j| y[i] * y[j] * k[(i, j)]);
    let lmax = q.clone().symmetric_eigenvalues().max().max(1e-12);
    let step = 1.0 / lmax;
    let mut a = vec![0.0; n];
    let mut z = a.clone();
    let mut t = 1.0f64;
    let mut f_prev = f64::INFINITY;
    for iter in 1..=2_000_000 {
        let g = qp_grad(&q, &z);
        let next = project(&z.iter().zip(&g).map(|(zi, gi)| zi - step * gi).collect::<Vec<_>>(), y, c);
        let f_next = dual_objective(&q, &next);
        // Adaptive restart keeps the momentum from overshooting.
        let tn = if f_next > f_prev { 1.0 } else { (1.0 + (1.0 + 4.0 * t * t).sqrt()) / 2.0 };
        z = next.iter().zip(&a).map(|(x, xo)| x + (t - 1.0) / tn * (x - xo)).collect();
        a = next;
        t = tn;
        f_prev = f_next;
        if iter % 500 == 0 {
            if let Some(p) = polish(&q, &a, y, c) {
                if kkt_holds(&q, &p, y, c, 1e-10) {
                    let obj = dual_objective(&q, &p);
                    return (p, obj);
                }
            }
        }
    }
    panic!("dense QP oracle did not identify the active set");
}

// ---------------------------------------------------------------------------
// Logistic regression MLE by Newton-Raphson on the original scale.

/// Returns `(intercept, coefficients)`.
pub fn logistic_mle(x: &[Vec<f64>], y: &[u8]) -> (f64, Vec<f64>) {
    let n = x.len();
    let p = x[0].len() + 1;
    let design = DMatrix::from_fn(n, p, |i, j| if j == 0 { 1.0 } else { x[i][j - 1] });
    let yv = DVector::from_iterator(n, y.iter().map(|&v| f64::from(v)));
    let mut beta = DVector::zeros(p);
    for _ in 0..100 {
        let eta = &design * &beta;
        let mu = eta.map(|e| 1.0 / (1.0 + (-e).exp()));
        let w = mu.map(|m| m * (1.0 - m));
        let grad = design.transpose() * (&yv - &mu);
        let mut hess = DMatrix::zeros(p, p);
        for i in 0..n {
            let r = design.row(i);
            hess += w[i] * r.transpose() * r;
        }
        let step = hess.lu().solve(&grad).expect("Hessian invertible");
        beta += &step;
        if step.norm() < 1e-13 {
            break;
        }
    }
    (beta[0], beta.iter().skip(1).copied().collect())
}

// ---------------------------------------------------------------------------
// Gaussian density-ratio classifier.

pub struct GaussianOracle {
    means: [DVector<f64>; 2],
    covs: [DMatrix<f64>; 2],
    priors: [f64; 2],
}

impl GaussianOracle {
    /// Class means, priors and covariances: pooled with divisor `n − 2`, or
    /// per class with divisor `n_c − 1`.
    pub fn fit(x: &[Vec<f64>], y: &[u8], pooled: bool) -> Self {
        let p = x[0].len();
        let n = x.len();
        let mut means = [DVector::zeros(p), DVector::zeros(p)];
        let mut counts = [0usize; 2];
        for (r, &c) in x.iter().zip(y) {
            means[c as usize] += DVector::from_column_slice(r);
            counts[c as usize] += 1;
        }
        for c in 0..2 {
            means[c] /= counts[c] as f64;
        }
        let mut scatter = [DMatrix::zeros(p, p), DMatrix::zeros(p, p)];
        for (r, &c) in x.iter().zip(y) {
            let d = DVector::from_column_slice(r) - &means[c as usize];
            scatter[c as usize] += &d * d.transpose();
        }
        let covs = if pooled {
            let s = (&scatter[0] + &scatter[1]) / (n as f64 - 2.0);
            [s.clone(), s]
        } else {
            [
                &scatter[0] / (counts[0] as f64 - 1.0),
                &scatter[1] / (counts[1] as f64 - 1.0),
            ]
        };
        Self {
            means,
            covs,
            priors: [counts[0] as f64 / n as f64, counts[1] as f64 / n as f64],
        }
    }

    fn density(&self, c: usize, row: &[f64]) -> f64 {
        let p = row.len() as f64;
        let d = DVector::from_column_slice(row) - &self.means[c];
        let inv = self.covs[c].clone().try_inverse().expect("invertible covariance");
        let q = (d.transpose() * inv * &d)[(0, 0)];
        let det = self.covs[c].determinant();
        (-0.5 * q).exp() / ((2.0 * std::f64::consts::PI).powf(p / 2.0) * det.sqrt())
    }

    /// 1 when `π₁ f₁(x) > π₀ f₀(x)`.
    pub fn predict(&self, row: &[f64]) -> u8 {
        u8::from(self.priors[1] * self.density(1, row) > self.priors[0] * self.density(0, row))
    }
}

// ---------------------------------------------------------------------------
// AUC by counting every (positive, negative) pair.

pub fn auc_pairs(score: &[f64], y: &[u8]) -> f64 {
    let mut num = 0.0;
    let mut den = 0.0;
    for i in 0..y.len() {
        for j in 0..y.len() {
            if y[i] == 1 && y[j] == 0 {
                den += 1.0;
                if score[i] > score[j] {
                    num += 1.0;
                } else if score[i] == score[j] {
                    num += 0.5;
                }
            }
        }
    }
    num / den
}

// ---------------------------------------------------------------------------
// Pipeline fixtures.

use cryptostack::classifiers::Family;
use cryptostack::pipeline::{write_synthetic_inputs, RunConfig};
use std::path::Path;

/// Default windows and folds over a year of synthetic four-exchange feeds
/// written into `dir`, with results going to `dir/out`.
pub fn synthetic_config(dir: &Path, families: &[Family], n_iter: usize, seed: u64) -> RunConfig {
    let start = cryptostack::NaiveDate::from_ymd_opt(2017, 8, 1).unwrap();
    let inputs =
        write_synthetic_inputs(dir, 365, start, &["bitstamp", "coinbase", "kraken", "bitfinex"], 0.02, seed).unwrap();
    let mut c = RunConfig::study_default(inputs);
    c.seed = seed;
    c.out_dir = dir.join("out");
    c.search.families = families.to_vec();
    c.search.n_iter = n_iter;
    c
}

/// Every artifact under `out_dir` except the manifest, as relative path and bytes.
pub fn artifact_bytes(out_dir: &Path) -> Vec<(String, Vec<u8>)> {
    fn walk(base: &Path, dir: &Path, out: &mut Vec<(String, Vec<u8>)>) {
        for e in std::fs::read_dir(dir).unwrap() {
            let p = e.unwrap().path();
            if p.is_dir() {
                walk(base, &p, out);
            } else if p.file_name().unwrap() != "manifest.json" {
                let rel = p.strip_prefix(base).unwrap().to_string_lossy().replace('\\', "/");
                out.push((rel, std::fs::read(&p).unwrap()));
            }
        }
    }
    let mut out = Vec::new();
    walk(out_dir, out_dir, &mut out);
    out.sort();
    out
}
