//! Linear and quadratic discriminant analysis.
//!
//! Both compare `D(x) = q₀(x) + ln|Σ₀| − q₁(x) − ln|Σ₁|`, with `q_c` the
//! squared Mahalanobis distance to class `c`, against
//! `T = 2 ln(π₀ / π₁)`. LDA shares one pooled covariance; QDA fits one per
//! class. Features are standardized first and each covariance gets a ridge
//! of `1e-6 · trace(Σ) / p` before factorization.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use super::scaling::Standardizer;
use super::{sigmoid, Dataset, ModelError, Result};
use crate::Matrix;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GaussianClass {
    pub mean: Vec<f64>,
    /// Lower Cholesky factor of the covariance, row-major `p × p`.
    pub chol: Vec<f64>,
    pub log_det: f64,
    pub log_prior: f64,
}

impl GaussianClass {
    /// `(z − μ)ᵀ Σ⁻¹ (z − μ)` by forward substitution.
    pub fn mahalanobis(&self, z: &[f64]) -> f64 {
        let p = self.mean.len();
        let mut w = vec![0.0; p];
        let mut acc = 0.0;
        for i in 0..p {
            let mut s = z[i] - self.mean[i];
            for k in 0..i {
                s -= self.chol[i * p + k] * w[k];
            }
            w[i] = s / self.chol[i * p + i];
            acc += w[i] * w[i];
        }
        acc
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiscriminantModel {
    pub pooled: bool,
    pub scaler: Standardizer,
    /// Indexed by class label.
    pub classes: [GaussianClass; 2],
}

impl DiscriminantModel {
    pub fn discriminant(&self, row: &[f64]) -> f64 {
        let z = self.scaler.transform_row(row);
        let [c0, c1] = &self.classes;
        c0.mahalanobis(&z) + c0.log_det - c1.mahalanobis(&z) - c1.log_det
    }

    pub fn threshold(&self) -> f64 {
        2.0 * (self.classes[0].log_prior - self.classes[1].log_prior)
    }

    /// Prior-weighted likelihood of class 1, normalized over both classes.
    pub fn proba_row(&self, row: &[f64]) -> f64 {
        sigmoid(0.5 * (self.discriminant(row) - self.threshold()))
    }
}

fn factor(mut cov: DMatrix<f64>) -> Result<(Vec<f64>, f64)> {
    let p = cov.nrows();
    let trace = cov.trace();
    let ridge = 1e-6 * if trace > 0.0 { trace / p as f64 } else { 1.0 };
    for i in 0..p {
        cov[(i, i)] += ridge;
    }
    let chol = cov
        .cholesky()
        .ok_or_else(|| ModelError::Singular("covariance not positive definite after ridge".into()))?;
    let l = chol.l();
    let log_det = 2.0 * (0..p).map(|i| l[(i, i)].ln()).sum::<f64>();
    let mut flat = Vec::with_capacity(p * p);
    for i in 0..p {
        for j in 0..p {
            flat.push(l[(i, j)]);
        }
    }
    Ok((flat, log_det))
}

fn scatter(z: &Matrix, rows: &[usize], mean: &[f64]) -> DMatrix<f64> {
    let p = mean.len();
    let mut s = DMatrix::zeros(p, p);
    for &r in rows {
        let d: Vec<f64> = z.row(r).iter().zip(mean).map(|(a, m)| a - m).collect();
        for i in 0..p {
            for j in 0..=i {
                s[(i, j)] += d[i] * d[j];
            }
        }
    }
    for i in 0..p {
        for j in 0..i {
            s[(j, i)] = s[(i, j)];
        }
    }
    s
}

/// `pooled = true` fits LDA (covariance divisor `n − 2`); otherwise QDA
/// (per-class divisor `n_c − 1`).
pub(crate) fn train(data: &Dataset, pooled: bool) -> Result<DiscriminantModel> {
    data.check_trainable(3)?;
    let scaler = Standardizer::fit(data.x.data());
    let z = scaler.transform(data.x.data());
    let p = z.cols();
    let n = data.len();
    let idx: [Vec<usize>; 2] = [0u8, 1].map(|c| (0..n).filter(|&i| data.y[i] == c).collect());
    if !pooled && idx.iter().any(|v| v.len() < 2) {
        return Err(ModelError::TooFewRows { needed: 2, got: idx[0].len().min(idx[1].len()) });
    }
    let means: [Vec<f64>; 2] = [0, 1].map(|c| {
        let mut m = vec![0.0; p];
        for &r in &idx[c] {
            for (a, v) in m.iter_mut().zip(z.row(r)) {
                *a += v;
            }
        }
        m.iter_mut().for_each(|a| *a /= idx[c].len() as f64);
        m
    });
    let log_prior = [0, 1].map(|c| (idx[c].len() as f64 / n as f64).ln());
    let classes = if pooled {
        let s = (scatter(&z, &idx[0], &means[0]) + scatter(&z, &idx[1], &means[1])) / (n - 2) as f64;
        let (chol, log_det) = factor(s)?;
        [0, 1].map(|c| GaussianClass {
            mean: means[c].clone(),
            chol: chol.clone(),
            log_det,
            log_prior: log_prior[c],
        })
    } else {
        let mut out = Vec::with_capacity(2);
        for c in 0..2 {
            let s = scatter(&z, &idx[c], &means[c]) / (idx[c].len() - 1) as f64;
            let (chol, log_det) = factor(s)?;
            out.push(GaussianClass {
                mean: means[c].clone(),
                chol,
                log_det,
                log_prior: log_prior[c],
            });
        }
        let c1 = out.pop().unwrap();
        let c0 = out.pop().unwrap();
        [c0, c1]
    };
    Ok(DiscriminantModel {
        pooled,
        scaler,
        classes,
    })
}
