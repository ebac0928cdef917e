use std::collections::BTreeMap;

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{Family, GbtParams, Hyperparams, Kernel, ModelError, Result};

/// One searchable dimension.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ParamRange {
    Int { low: i64, high: i64 },
    /// Odd integers in `[low, high]`.
    OddInt { low: i64, high: i64 },
    Uniform { low: f64, high: f64 },
    LogUniform { low: f64, high: f64 },
    Choice { options: Vec<String> },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ParamValue {
    Int(i64),
    Real(f64),
    Text(String),
}

pub type ParamPoint = BTreeMap<String, ParamValue>;

impl ParamRange {
    fn validate(&self, name: &str) -> Result<()> {
        let bad = |why: &str| Err(ModelError::BadHyperparams(format!("range `{name}`: {why}")));
        match self {
            ParamRange::Int { low, high } if low > high => bad("low > high"),
            ParamRange::OddInt { low, high } => {
                let first = if low % 2 == 0 { low + 1 } else { *low };
                if first > *high {
                    bad("no odd value in range")
                } else {
                    Ok(())
                }
            }
            ParamRange::Uniform { low, high } if !(low <= high) || !low.is_finite() || !high.is_finite() => {
                bad("need finite low <= high")
            }
            ParamRange::LogUniform { low, high } if !(*low > 0.0 && low <= high && high.is_finite()) => {
                bad("need 0 < low <= high")
            }
            ParamRange::Choice { options } if options.is_empty() => bad("no options"),
            _ => Ok(()),
        }
    }

    fn sample<R: Rng>(&self, rng: &mut R) -> ParamValue {
        match self {
            ParamRange::Int { low, high } => ParamValue::Int(rng.gen_range(*low..=*high)),
            ParamRange::OddInt { low, high } => {
                let first = if low % 2 == 0 { low + 1 } else { *low };
                let count = (high - first) / 2 + 1;
                ParamValue::Int(first + 2 * rng.gen_range(0..count))
            }
            ParamRange::Uniform { low, high } => {
                ParamValue::Real(if low == high { *low } else { rng.gen_range(*low..=*high) })
            }
            ParamRange::LogUniform { low, high } => {
                let v = if low == high {
                    *low
                } else {
                    rng.gen_range(low.ln()..=high.ln()).exp()
                };
                ParamValue::Real(v.clamp(*low, *high))
            }
            ParamRange::Choice { options } => {
                ParamValue::Text(options[rng.gen_range(0..options.len())].clone())
            }
        }
    }

    pub fn contains(&self, v: &ParamValue) -> bool {
        match (self, v) {
            (ParamRange::Int { low, high }, ParamValue::Int(x)) => low <= x && x <= high,
            (ParamRange::OddInt { low, high }, ParamValue::Int(x)) => {
                low <= x && x <= high && x.rem_euclid(2) == 1
            }
            (ParamRange::Uniform { low, high }, ParamValue::Real(x))
            | (ParamRange::LogUniform { low, high }, ParamValue::Real(x)) => low <= x && x <= high,
            (ParamRange::Choice { options }, ParamValue::Text(s)) => options.contains(s),
            _ => false,
        }
    }
}

/// Named ranges for one family. Parameters not listed keep their defaults.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HyperparamSpace {
    pub family: Family,
    pub ranges: BTreeMap<String, ParamRange>,
}

fn int(low: i64, high: i64) -> ParamRange {
    ParamRange::Int { low, high }
}

fn uniform(low: f64, high: f64) -> ParamRange {
    ParamRange::Uniform { low, high }
}

fn log_uniform(low: f64, high: f64) -> ParamRange {
    ParamRange::LogUniform { low, high }
}

impl HyperparamSpace {
    pub fn default_for(family: Family) -> Self {
        let mut r = BTreeMap::new();
        match family {
            Family::Xgb | Family::Lgbm => {
                r.insert("max_depth".into(), int(2, 8));
                r.insert("min_child_weight".into(), log_uniform(1e-3, 5.0));
                r.insert("subsample".into(), uniform(0.5, 1.0));
                r.insert("colsample_bytree".into(), uniform(0.5, 1.0));
                r.insert("reg_alpha".into(), log_uniform(1e-3, 10.0));
                r.insert("reg_lambda".into(), log_uniform(1e-3, 10.0));
                r.insert("n_estimators".into(), int(50, 500));
                r.insert("learning_rate".into(), log_uniform(0.01, 0.3));
                if family == Family::Lgbm {
                    r.insert("num_leaves".into(), int(4, 64));
                }
            }
            Family::Rf => {
                r.insert("n_estimators".into(), int(50, 300));
                r.insert("max_depth".into(), int(2, 16));
                r.insert("min_samples_leaf".into(), int(1, 10));
                r.insert("max_features".into(), uniform(0.1, 1.0));
            }
            Family::Svm => {
                r.insert(
                    "kernel".into(),
                    ParamRange::Choice {
                        options: vec!["rbf".into(), "sigmoid".into()],
                    },
                );
                r.insert("gamma".into(), log_uniform(1e-3, 1.0));
                r.insert("cost".into(), log_uniform(0.1, 100.0));
            }
            Family::Knn => {
                r.insert("k".into(), ParamRange::OddInt { low: 3, high: 31 });
            }
            Family::LogitEnet => {
                r.insert("alpha".into(), uniform(0.0, 1.0));
                r.insert("lambda".into(), log_uniform(1e-4, 1.0));
            }
            Family::Nb | Family::Lda | Family::Qda => {}
        }
        Self { family, ranges: r }
    }

    pub fn is_empty(&self) -> bool {
        self.ranges.is_empty()
    }

    pub fn validate(&self) -> Result<()> {
        let probe = Hyperparams::default_for(self.family);
        for (name, range) in &self.ranges {
            range.validate(name)?;
            // Reject names the family does not know.
            let mut rng = crate::rng::rng_from_seed(0);
            let mut p = ParamPoint::new();
            p.insert(name.clone(), range.sample(&mut rng));
            probe.with_point(&p)?;
        }
        Ok(())
    }

    /// Draws one value per range, in name order.
    pub fn sample<R: Rng>(&self, rng: &mut R) -> ParamPoint {
        self.ranges
            .iter()
            .map(|(k, r)| (k.clone(), r.sample(rng)))
            .collect()
    }

    pub fn contains(&self, p: &ParamPoint) -> bool {
        p.len() == self.ranges.len()
            && self
                .ranges
                .iter()
                .all(|(k, r)| p.get(k).is_some_and(|v| r.contains(v)))
    }

    /// Defaults overridden by `point`.
    pub fn hyperparams(&self, point: &ParamPoint) -> Result<Hyperparams> {
        Hyperparams::default_for(self.family).with_point(point)
    }
}

fn as_usize(name: &str, v: &ParamValue) -> Result<usize> {
    match v {
        ParamValue::Int(i) if *i >= 0 => Ok(*i as usize),
        _ => Err(ModelError::BadHyperparams(format!("`{name}` expects a non-negative integer"))),
    }
}

fn as_f64(name: &str, v: &ParamValue) -> Result<f64> {
    match v {
        ParamValue::Real(x) => Ok(*x),
        ParamValue::Int(i) => Ok(*i as f64),
        _ => Err(ModelError::BadHyperparams(format!("`{name}` expects a number"))),
    }
}

fn unknown(family: Family, name: &str) -> ModelError {
    ModelError::BadHyperparams(format!("{family} has no parameter `{name}`"))
}

fn apply_gbt(p: &mut GbtParams, family: Family, name: &str, v: &ParamValue) -> Result<()> {
    match name {
        "max_depth" => p.max_depth = as_usize(name, v)?,
        "min_child_weight" => p.min_child_weight = as_f64(name, v)?,
        "subsample" => p.subsample = as_f64(name, v)?,
        "colsample_bytree" => p.colsample_bytree = as_f64(name, v)?,
        "reg_alpha" => p.reg_alpha = as_f64(name, v)?,
        "reg_lambda" => p.reg_lambda = as_f64(name, v)?,
        "gamma" => p.gamma = as_f64(name, v)?,
        "n_estimators" => p.n_estimators = as_usize(name, v)?,
        "learning_rate" => p.learning_rate = as_f64(name, v)?,
        "num_leaves" => p.num_leaves = as_usize(name, v)?,
        "max_bin" => p.max_bin = as_usize(name, v)?,
        _ => return Err(unknown(family, name)),
    }
    Ok(())
}

impl Hyperparams {
    /// Copy with the named values replaced.
    pub fn with_point(&self, point: &ParamPoint) -> Result<Self> {
        let mut hp = self.clone();
        let family = hp.family();
        for (name, v) in point {
            match &mut hp {
                Hyperparams::Xgb(p) | Hyperparams::Lgbm(p) => apply_gbt(p, family, name, v)?,
                Hyperparams::Rf(p) => match name.as_str() {
                    "n_estimators" => p.n_estimators = as_usize(name, v)?,
                    "max_depth" => p.max_depth = as_usize(name, v)?,
                    "min_samples_leaf" => p.min_samples_leaf = as_usize(name, v)?,
                    "min_samples_split" => p.min_samples_split = as_usize(name, v)?,
                    "max_features" => p.max_features = as_f64(name, v)?,
                    _ => return Err(unknown(family, name)),
                },
                Hyperparams::Svm(p) => match name.as_str() {
                    "kernel" => {
                        p.kernel = match v {
                            ParamValue::Text(s) => s.parse()?,
                            _ => return Err(ModelError::BadHyperparams("`kernel` expects text".into())),
                        }
                    }
                    "gamma" => p.gamma = as_f64(name, v)?,
                    "cost" => p.cost = as_f64(name, v)?,
                    "tol" => p.tol = as_f64(name, v)?,
                    "max_iter" => p.max_iter = as_usize(name, v)?,
                    _ => return Err(unknown(family, name)),
                },
                Hyperparams::Knn(p) => match name.as_str() {
                    "k" => p.k = as_usize(name, v)?,
                    _ => return Err(unknown(family, name)),
                },
                Hyperparams::LogitEnet(p) => match name.as_str() {
                    "alpha" => p.alpha = as_f64(name, v)?,
                    "lambda" => p.lambda = as_f64(name, v)?,
                    "tol" => p.tol = as_f64(name, v)?,
                    "max_sweeps" => p.max_sweeps = as_usize(name, v)?,
                    _ => return Err(unknown(family, name)),
                },
                Hyperparams::Nb | Hyperparams::Lda | Hyperparams::Qda => {
                    return Err(unknown(family, name))
                }
            }
        }
        Ok(hp)
    }
}

impl std::str::FromStr for Kernel {
    type Err = ModelError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "rbf" => Ok(Kernel::Rbf),
            "sigmoid" => Ok(Kernel::Sigmoid),
            "linear" => Ok(Kernel::Linear),
            _ => Err(ModelError::BadHyperparams(format!("unknown kernel `{s}`"))),
        }
    }
}
