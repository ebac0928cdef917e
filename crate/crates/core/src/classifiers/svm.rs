//! Soft-margin kernel SVM solved in the dual by SMO, with Platt scaling.

use log::warn;
use serde::{Deserialize, Serialize};

use super::scaling::Standardizer;
use super::{Dataset, ModelError, Result};
use crate::Matrix;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Kernel {
    /// `exp(-γ‖x − z‖²)`
    Rbf,
    /// `tanh(γ xᵀz)`; not positive semi-definite in general.
    Sigmoid,
    /// `xᵀz`
    Linear,
}

impl Kernel {
    pub fn eval(&self, gamma: f64, a: &[f64], b: &[f64]) -> f64 {
        match self {
            Kernel::Rbf => {
                let d2: f64 = a.iter().zip(b).map(|(x, z)| (x - z) * (x - z)).sum();
                (-gamma * d2).exp()
            }
            Kernel::Sigmoid => (gamma * dot(a, b)).tanh(),
            Kernel::Linear => dot(a, b),
        }
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, z)| x * z).sum()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SvmParams {
    pub kernel: Kernel,
    pub gamma: f64,
    pub cost: f64,
    /// Stopping tolerance on the maximal KKT violation.
    pub tol: f64,
    pub max_iter: usize,
}

impl Default for SvmParams {
    fn default() -> Self {
        Self {
            kernel: Kernel::Rbf,
            gamma: 0.1,
            cost: 1.0,
            tol: 1e-5,
            max_iter: 1_000_000,
        }
    }
}

/// Gram matrix of the rows of `x`.
pub fn kernel_matrix(x: &Matrix, kernel: Kernel, gamma: f64) -> Matrix {
    let n = x.rows();
    let mut k = Matrix::zeros(n, n);
    for i in 0..n {
        for j in 0..=i {
            let v = kernel.eval(gamma, x.row(i), x.row(j));
            k.set(i, j, v);
            k.set(j, i, v);
        }
    }
    k
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DualSolution {
    pub alpha: Vec<f64>,
    /// Decision offset: `f(x) = Σ αᵢ yᵢ K(xᵢ, x) − rho`.
    pub rho: f64,
    /// `½ αᵀQα − Σ αᵢ` at the solution.
    pub objective: f64,
    /// Maximal KKT violation `m(α) − M(α)` at exit.
    pub kkt_residual: f64,
    pub iterations: usize,
}

const TAU: f64 = 1e-12;

/// Minimizes `½ αᵀQα − eᵀα` with `Qᵢⱼ = yᵢyⱼKᵢⱼ`, `0 ≤ α ≤ c`, `yᵀα = 0`,
/// by SMO with second-order working-set selection. `y` holds ±1.
pub fn solve_dual(k: &Matrix, y: &[f64], c: f64, eps: f64, max_iter: usize) -> Result<DualSolution> {
    let n = y.len();
    if k.rows() != n || k.cols() != n {
        return Err(ModelError::Shape("kernel matrix does not match labels".into()));
    }
    if !(c > 0.0) || !(eps > 0.0) {
        return Err(ModelError::BadHyperparams(format!("cost {c}, tol {eps}")));
    }
    let q = |i: usize, j: usize| y[i] * y[j] * k.get(i, j);
    let mut alpha = vec![0.0; n];
    let mut grad = vec![-1.0; n];
    let upper = |a: f64| a >= c;
    let lower = |a: f64| a <= 0.0;
    let mut iter = 0;
    let kkt_residual = loop {
        // i: maximal violator in I_up.
        let mut gmax = f64::NEG_INFINITY;
        let mut gmax_idx = None;
        for t in 0..n {
            if y[t] > 0.0 {
                if !upper(alpha[t]) && -grad[t] >= gmax {
                    gmax = -grad[t];
                    gmax_idx = Some(t);
                }
            } else if !lower(alpha[t]) && grad[t] >= gmax {
                gmax = grad[t];
                gmax_idx = Some(t);
            }
        }
        let Some(i) = gmax_idx else { break 0.0 };
        // j: largest second-order decrease among I_low.
        let mut gmax2 = f64::NEG_INFINITY;
        let mut j_idx = None;
        let mut obj_min = f64::INFINITY;
        let kii = k.get(i, i);
        for t in 0..n {
            let (diff, quad) = if y[t] > 0.0 {
                if lower(alpha[t]) {
                    continue;
                }
                gmax2 = gmax2.max(grad[t]);
                (gmax + grad[t], kii + k.get(t, t) - 2.0 * y[i] * q(i, t))
            } else {
                if upper(alpha[t]) {
                    continue;
                }
                gmax2 = gmax2.max(-grad[t]);
                (gmax - grad[t], kii + k.get(t, t) + 2.0 * y[i] * q(i, t))
            };
            if diff > 0.0 {
                let obj = -(diff * diff) / if quad > 0.0 { quad } else { TAU };
                if obj <= obj_min {
                    obj_min = obj;
                    j_idx = Some(t);
                }
            }
        }
        let violation = gmax + gmax2;
        let Some(j) = j_idx.filter(|_| violation >= eps) else {
            break violation.max(0.0);
        };
        if iter >= max_iter {
            return Err(ModelError::NotConverged(format!(
                "SMO hit {max_iter} iterations with KKT violation {violation:e}"
            )));
        }
        iter += 1;

        let (ai, aj) = (alpha[i], alpha[j]);
        let qij = q(i, j);
        if y[i] != y[j] {
            let quad = (q(i, i) + q(j, j) + 2.0 * qij).max(TAU);
            let delta = (-grad[i] - grad[j]) / quad;
            let diff = alpha[i] - alpha[j];
            alpha[i] += delta;
            alpha[j] += delta;
            if diff > 0.0 {
                if alpha[j] < 0.0 {
                    alpha[j] = 0.0;
                    alpha[i] = diff;
                }
            } else if alpha[i] < 0.0 {
                alpha[i] = 0.0;
                alpha[j] = -diff;
            }
            if diff > 0.0 {
                if alpha[i] > c {
                    alpha[i] = c;
                    alpha[j] = c - diff;
                }
            } else if alpha[j] > c {
                alpha[j] = c;
                alpha[i] = c + diff;
            }
        } else {
            let quad = (q(i, i) + q(j, j) - 2.0 * qij).max(TAU);
            let delta = (grad[i] - grad[j]) / quad;
            let sum = alpha[i] + alpha[j];
            alpha[i] -= delta;
            alpha[j] += delta;
            if sum > c {
                if alpha[i] > c {
                    alpha[i] = c;
                    alpha[j] = sum - c;
                }
            } else if alpha[j] < 0.0 {
                alpha[j] = 0.0;
                alpha[i] = sum;
            }
            if sum > c {
                if alpha[j] > c {
                    alpha[j] = c;
                    alpha[i] = sum - c;
                }
            } else if alpha[i] < 0.0 {
                alpha[i] = 0.0;
                alpha[j] = sum;
            }
        }
        let (di, dj) = (alpha[i] - ai, alpha[j] - aj);
        for (t, g) in grad.iter_mut().enumerate() {
            *g += q(i, t) * di + q(j, t) * dj;
        }
    };

    let mut ub = f64::INFINITY;
    let mut lb = f64::NEG_INFINITY;
    let (mut n_free, mut sum_free) = (0usize, 0.0);
    for t in 0..n {
        let yg = y[t] * grad[t];
        if upper(alpha[t]) {
            if y[t] < 0.0 {
                ub = ub.min(yg);
            } else {
                lb = lb.max(yg);
            }
        } else if lower(alpha[t]) {
            if y[t] > 0.0 {
                ub = ub.min(yg);
            } else {
                lb = lb.max(yg);
            }
        } else {
            n_free += 1;
            sum_free += yg;
        }
    }
    let rho = if n_free > 0 {
        sum_free / n_free as f64
    } else {
        (ub + lb) / 2.0
    };
    let objective = 0.5 * alpha.iter().zip(&grad).map(|(a, g)| a * (g - 1.0)).sum::<f64>();
    Ok(DualSolution {
        alpha,
        rho,
        objective,
        kkt_residual,
        iterations: iter,
    })
}

/// Fits `P(y=1 | f) = 1 / (1 + exp(A f + B))` to decision values by
/// regularized-target maximum likelihood (Newton with backtracking).
pub fn platt_fit(dec: &[f64], y: &[u8]) -> (f64, f64) {
    let prior1 = y.iter().filter(|&&v| v == 1).count() as f64;
    let prior0 = y.len() as f64 - prior1;
    let hi = (prior1 + 1.0) / (prior1 + 2.0);
    let lo = 1.0 / (prior0 + 2.0);
    let t: Vec<f64> = y.iter().map(|&v| if v == 1 { hi } else { lo }).collect();
    let objective = |a: f64, b: f64| -> f64 {
        dec.iter()
            .zip(&t)
            .map(|(f, t)| {
                let z = f * a + b;
                if z >= 0.0 {
                    t * z + (-z).exp().ln_1p()
                } else {
                    (t - 1.0) * z + z.exp().ln_1p()
                }
            })
            .sum()
    };
    let mut a = 0.0;
    let mut b = ((prior0 + 1.0) / (prior1 + 1.0)).ln();
    let mut fval = objective(a, b);
    for _ in 0..100 {
        let (mut h11, mut h22, mut h21, mut g1, mut g2) = (1e-12, 1e-12, 0.0, 0.0, 0.0);
        for (f, t) in dec.iter().zip(&t) {
            let z = f * a + b;
            let (p, q) = if z >= 0.0 {
                let e = (-z).exp();
                (e / (1.0 + e), 1.0 / (1.0 + e))
            } else {
                let e = z.exp();
                (1.0 / (1.0 + e), e / (1.0 + e))
            };
            let d2 = p * q;
            h11 += f * f * d2;
            h22 += d2;
            h21 += f * d2;
            let d1 = t - p;
            g1 += f * d1;
            g2 += d1;
        }
        if g1.abs() < 1e-5 && g2.abs() < 1e-5 {
            break;
        }
        let det = h11 * h22 - h21 * h21;
        let da = -(h22 * g1 - h21 * g2) / det;
        let db = -(-h21 * g1 + h11 * g2) / det;
        let gd = g1 * da + g2 * db;
        let mut step = 1.0;
        while step >= 1e-10 {
            let (na, nb) = (a + step * da, b + step * db);
            let nf = objective(na, nb);
            if nf < fval + 1e-4 * step * gd {
                a = na;
                b = nb;
                fval = nf;
                break;
            }
            step /= 2.0;
        }
        if step < 1e-10 {
            break;
        }
    }
    (a, b)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SvmModel {
    pub kernel: Kernel,
    pub gamma: f64,
    pub scaler: Standardizer,
    /// Standardized support vectors.
    pub support: Vec<Vec<f64>>,
    /// `αᵢ yᵢ` per support vector.
    pub coef: Vec<f64>,
    pub rho: f64,
    pub platt_a: f64,
    pub platt_b: f64,
    pub dual: DualSolution,
}

impl SvmModel {
    pub fn decision(&self, row: &[f64]) -> f64 {
        let z = self.scaler.transform_row(row);
        self.decision_scaled(&z)
    }

    fn decision_scaled(&self, z: &[f64]) -> f64 {
        self.support
            .iter()
            .zip(&self.coef)
            .map(|(s, c)| c * self.kernel.eval(self.gamma, s, z))
            .sum::<f64>()
            - self.rho
    }

    pub fn proba_row(&self, row: &[f64]) -> f64 {
        let f = self.decision(row);
        super::sigmoid(-(self.platt_a * f + self.platt_b))
    }
}

pub(crate) fn train(data: &Dataset, p: &SvmParams) -> Result<SvmModel> {
    if !(p.gamma > 0.0 && p.cost > 0.0 && p.tol > 0.0) {
        return Err(ModelError::BadHyperparams(format!("{p:?}")));
    }
    data.check_trainable(2)?;
    if p.kernel == Kernel::Sigmoid {
        warn!("sigmoid kernel is not positive semi-definite in general; SMO still terminates but the optimum may be local");
    }
    let scaler = Standardizer::fit(data.x.data());
    let z = scaler.transform(data.x.data());
    let y: Vec<f64> = data.y.iter().map(|&v| if v == 1 { 1.0 } else { -1.0 }).collect();
    let k = kernel_matrix(&z, p.kernel, p.gamma);
    let dual = solve_dual(&k, &y, p.cost, p.tol, p.max_iter)?;
    let mut support = Vec::new();
    let mut coef = Vec::new();
    for (i, &a) in dual.alpha.iter().enumerate() {
        if a > 0.0 {
            support.push(z.row(i).to_vec());
            coef.push(a * y[i]);
        }
    }
    let mut model = SvmModel {
        kernel: p.kernel,
        gamma: p.gamma,
        scaler,
        support,
        coef,
        rho: dual.rho,
        platt_a: 0.0,
        platt_b: 0.0,
        dual,
    };
    let dec: Vec<f64> = z.iter_rows().map(|r| model.decision_scaled(r)).collect();
    let (a, b) = platt_fit(&dec, &data.y);
    model.platt_a = a;
    model.platt_b = b;
    Ok(model)
}
