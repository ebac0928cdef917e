//! Elastic-net penalized logistic regression by cyclic coordinate descent.
//!
//! Minimizes `mean NLL + αλ‖β‖₁ + (1 − α)λ‖β‖₂²` over standardized
//! features with an unpenalized intercept. Each coordinate takes a
//! proximal Newton step, halved until the full objective does not increase.

use log::warn;
use serde::{Deserialize, Serialize};

use super::scaling::Standardizer;
use super::{sigmoid, softplus, Dataset, ModelError, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnetParams {
    /// L1 share of the penalty, in `[0, 1]`.
    pub alpha: f64,
    pub lambda: f64,
    /// Convergence threshold on the largest coefficient change in a sweep.
    pub tol: f64,
    pub max_sweeps: usize,
}

impl Default for EnetParams {
    fn default() -> Self {
        Self {
            alpha: 0.5,
            lambda: 0.01,
            tol: 1e-9,
            max_sweeps: 2000,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnetModel {
    pub scaler: Standardizer,
    pub intercept_std: f64,
    pub beta_std: Vec<f64>,
    /// Intercept and coefficients on the original feature scale.
    pub intercept: f64,
    pub coefficients: Vec<f64>,
    /// Objective before the first sweep and after each sweep.
    pub objective_history: Vec<f64>,
    pub converged: bool,
}

impl EnetModel {
    pub fn proba_row(&self, row: &[f64]) -> f64 {
        let eta = self.intercept
            + self
                .coefficients
                .iter()
                .zip(row)
                .map(|(b, x)| b * x)
                .sum::<f64>();
        sigmoid(eta)
    }
}

fn soft_threshold(v: f64, a: f64) -> f64 {
    if v > a {
        v - a
    } else if v < -a {
        v + a
    } else {
        0.0
    }
}

struct Problem<'a> {
    y: &'a [f64],
    l1: f64,
    l2: f64,
}

impl Problem<'_> {
    fn nll(&self, eta: &[f64]) -> f64 {
        eta.iter()
            .zip(self.y)
            .map(|(e, y)| softplus(*e) - y * e)
            .sum::<f64>()
            / self.y.len() as f64
    }

    fn penalty(&self, beta: &[f64]) -> f64 {
        beta.iter()
            .map(|b| self.l1 * b.abs() + self.l2 * b * b)
            .sum()
    }
}

pub(crate) fn train(data: &Dataset, p: &EnetParams) -> Result<EnetModel> {
    if !((0.0..=1.0).contains(&p.alpha) && p.lambda >= 0.0 && p.tol > 0.0 && p.max_sweeps > 0) {
        return Err(ModelError::BadHyperparams(format!("{p:?}")));
    }
    data.check_trainable(2)?;
    let n = data.len();
    let scaler = Standardizer::fit(data.x.data());
    let zm = scaler.transform(data.x.data());
    let cols: Vec<Vec<f64>> = (0..zm.cols()).map(|j| zm.column(j)).collect();
    let y: Vec<f64> = data.y.iter().map(|&v| f64::from(v)).collect();
    let prob = Problem {
        y: &y,
        l1: p.alpha * p.lambda,
        l2: (1.0 - p.alpha) * p.lambda,
    };
    let nf = n as f64;

    let prior = y.iter().sum::<f64>() / nf;
    let mut b0 = (prior / (1.0 - prior)).ln();
    let mut beta = vec![0.0; cols.len()];
    let mut eta = vec![b0; n];
    let mut obj = prob.nll(&eta);
    let mut history = vec![obj];
    let mut converged = false;

    for _ in 0..p.max_sweeps {
        let mut max_change: f64 = 0.0;
        // Coordinate 0 is the intercept (constant column, no penalty).
        for j in 0..=cols.len() {
            let col = if j == 0 { None } else { Some(&cols[j - 1]) };
            let x = |i: usize| col.map_or(1.0, |c| c[i]);
            let (mut g, mut h) = (0.0, 0.0);
            for (i, e) in eta.iter().enumerate() {
                let pr = sigmoid(*e);
                g += (pr - y[i]) * x(i);
                h += pr * (1.0 - pr) * x(i) * x(i);
            }
            g /= nf;
            h /= nf;
            if h <= 0.0 && col.is_some_and(|c| c.iter().all(|&v| v == 0.0)) {
                continue;
            }
            let h = h.max(1e-12);
            let old = if j == 0 { b0 } else { beta[j - 1] };
            let target = if j == 0 {
                old - g / h
            } else {
                soft_threshold(h * old - g, prob.l1) / (h + 2.0 * prob.l2)
            };
            let d = target - old;
            if d == 0.0 {
                continue;
            }
            let mut t = 1.0;
            let mut accepted = None;
            for _ in 0..40 {
                let cand = old + t * d;
                let trial: Vec<f64> = eta.iter().enumerate().map(|(i, e)| e + t * d * x(i)).collect();
                let mut b = beta.clone();
                if j > 0 {
                    b[j - 1] = cand;
                }
                let o = prob.nll(&trial) + prob.penalty(&b);
                if !o.is_finite() {
                    return Err(ModelError::Diverged(format!("non-finite objective at coordinate {j}")));
                }
                if o <= obj {
                    accepted = Some((cand, trial, o));
                    break;
                }
                t /= 2.0;
            }
            if let Some((cand, trial, o)) = accepted {
                max_change = max_change.max((cand - old).abs());
                if j == 0 {
                    b0 = cand;
                } else {
                    beta[j - 1] = cand;
                }
                eta = trial;
                obj = o;
            }
        }
        if !obj.is_finite() || beta.iter().any(|b| !b.is_finite()) {
            return Err(ModelError::Diverged("coefficients left the finite range".into()));
        }
        history.push(obj);
        if max_change < p.tol {
            converged = true;
            break;
        }
    }
    if !converged {
        warn!(
            "elastic net stopped after {} sweeps without reaching tolerance {:e}",
            p.max_sweeps, p.tol
        );
    }
    let coefficients: Vec<f64> = beta.iter().zip(&scaler.scale).map(|(b, s)| b / s).collect();
    let intercept = b0
        - coefficients
            .iter()
            .zip(&scaler.mean)
            .map(|(c, m)| c * m)
            .sum::<f64>();
    Ok(EnetModel {
        scaler,
        intercept_std: b0,
        beta_std: beta,
        intercept,
        coefficients,
        objective_history: history,
        converged,
    })
}
