//! Level-one data from level-0 predictions and the neural meta-learner.
//!
//! The meta-learner has one `tanh` hidden layer and a sigmoid output and is
//! trained by full-batch gradient descent on mean log-loss. A hidden width of
//! zero gives plain logistic regression on the level-one columns.

use std::io::Write;

use chrono::NaiveDate;
use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::classifiers::{label_from_proba, ModelError, TrainedClassifier};
use crate::indicators::FeatureFrame;
use crate::rng::rng_from_seed;
use crate::{DateRange, Matrix};

#[derive(Debug, Error)]
pub enum StackingError {
    #[error("stacking needs at least 2 level-0 models, got {0}")]
    TooFewGeneralizers(usize),
    #[error("model `{model}` was trained on {trained}, which does not precede the window {window}")]
    Leakage {
        model: String,
        trained: DateRange,
        window: DateRange,
    },
    #[error("model `{0}` has no recorded training window")]
    UnknownTrainingWindow(String),
    #[error("no rows in window {0}")]
    EmptyWindow(DateRange),
    #[error("level-one labels hold a single class")]
    SingleClass,
    #[error("expected {expected} inputs, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("meta-learner loss became non-finite at epoch {epoch} (last finite loss {last})")]
    NonFiniteLoss { epoch: usize, last: f64 },
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error("{0}")]
    Format(String),
}

pub type Result<T> = std::result::Result<T, StackingError>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StackMode {
    /// Level-0 hard labels in {0, 1}.
    #[default]
    Hard,
    /// Level-0 class-1 probabilities.
    Proba,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LevelOneData {
    pub timestamps: Vec<NaiveDate>,
    /// `n × K`; column `k` holds generalizer `k`'s output.
    pub z: Matrix,
    pub y: Vec<u8>,
    pub generalizer_names: Vec<String>,
    pub mode: StackMode,
}

impl LevelOneData {
    pub fn new(
        timestamps: Vec<NaiveDate>,
        z: Matrix,
        y: Vec<u8>,
        generalizer_names: Vec<String>,
        mode: StackMode,
    ) -> Result<Self> {
        let n = timestamps.len();
        if z.rows() != n || y.len() != n || z.cols() != generalizer_names.len() {
            return Err(StackingError::Format("level-one shapes disagree".into()));
        }
        if z.cols() == 0 {
            return Err(StackingError::TooFewGeneralizers(0));
        }
        let ok = z.as_slice().iter().all(|&v| match mode {
            StackMode::Hard => v == 0.0 || v == 1.0,
            StackMode::Proba => (0.0..=1.0).contains(&v),
        });
        if !ok {
            return Err(StackingError::Format(format!("entries outside the {mode:?} range")));
        }
        Ok(Self {
            timestamps,
            z,
            y,
            generalizer_names,
            mode,
        })
    }

    pub fn k(&self) -> usize {
        self.z.cols()
    }

    pub fn len(&self) -> usize {
        self.y.len()
    }

    pub fn is_empty(&self) -> bool {
        self.y.is_empty()
    }

    /// `timestamp,<generalizers...>,label`.
    pub fn write_csv<W: Write>(&self, w: W) -> std::result::Result<(), csv::Error> {
        let mut w = csv::Writer::from_writer(w);
        let mut header = vec!["timestamp".to_string()];
        header.extend(self.generalizer_names.iter().cloned());
        header.push("label".into());
        w.write_record(&header)?;
        for (i, t) in self.timestamps.iter().enumerate() {
            let mut rec = vec![t.to_string()];
            rec.extend(self.z.row(i).iter().map(|v| v.to_string()));
            rec.push(self.y[i].to_string());
            w.write_record(&rec)?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Unique column names: the family name, suffixed on repeats.
pub fn generalizer_names(models: &[TrainedClassifier]) -> Vec<String> {
    let mut out: Vec<String> = Vec::with_capacity(models.len());
    for m in models {
        let base = m.family.as_str().to_string();
        let mut name = base.clone();
        let mut k = 2;
        while out.contains(&name) {
            name = format!("{base}_{k}");
            k += 1;
        }
        out.push(name);
    }
    out
}

/// Refuses any model whose recorded training window reaches into `window`.
pub fn check_precedes(models: &[TrainedClassifier], window: &DateRange) -> Result<()> {
    for (m, name) in models.iter().zip(generalizer_names(models)) {
        let trained = m
            .training_window
            .ok_or_else(|| StackingError::UnknownTrainingWindow(name.clone()))?;
        if trained.end >= window.start {
            return Err(StackingError::Leakage {
                model: name,
                trained,
                window: *window,
            });
        }
    }
    Ok(())
}

/// Level-0 predictions over the frame rows inside `window`.
pub fn build_level_one(
    models: &[TrainedClassifier],
    frame: &FeatureFrame,
    window: &DateRange,
    mode: StackMode,
) -> Result<LevelOneData> {
    if models.len() < 2 {
        return Err(StackingError::TooFewGeneralizers(models.len()));
    }
    check_precedes(models, window)?;
    let rows = frame.rows_in(window);
    if rows.is_empty() {
        return Err(StackingError::EmptyWindow(*window));
    }
    let x = frame.matrix(&rows);
    let mut cols = Vec::with_capacity(models.len());
    for m in models {
        let p = m.predict_proba(&x)?;
        cols.push(match mode {
            StackMode::Proba => p,
            StackMode::Hard => p.into_iter().map(|v| f64::from(label_from_proba(v))).collect(),
        });
    }
    LevelOneData::new(
        rows.iter().map(|&i| frame.timestamps()[i]).collect(),
        Matrix::from_columns(&cols),
        rows.iter().map(|&i| frame.labels()[i]).collect(),
        generalizer_names(models),
        mode,
    )
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetaConfig {
    pub hidden_width: usize,
    pub max_epochs: usize,
    pub step_size: f64,
    /// Training stops once an epoch improves the loss by less than this.
    pub plateau: f64,
    pub seed: u64,
}

impl Default for MetaConfig {
    fn default() -> Self {
        Self {
            hidden_width: 6,
            max_epochs: 5000,
            step_size: 0.05,
            plateau: 1e-8,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetaLearner {
    pub input_names: Vec<String>,
    pub input_dim: usize,
    pub hidden_width: usize,
    pub activation: String,
    /// Hidden weights, `hidden_width × input_dim` row-major.
    pub w1: Vec<f64>,
    pub b1: Vec<f64>,
    /// Output weights: one per hidden unit, or per input when width is 0.
    pub w2: Vec<f64>,
    pub b2: f64,
    pub config: MetaConfig,
    /// Mean training log-loss at initialization and after each epoch.
    pub training_curve: Vec<f64>,
}

impl MetaLearner {
    /// Network with `U(±1/√fan_in)` weights and zero biases.
    pub fn init(input_names: Vec<String>, config: MetaConfig) -> Self {
        let k = input_names.len();
        let h = config.hidden_width;
        let mut rng = rng_from_seed(config.seed);
        let mut uniform = |fan_in: usize, n: usize| -> Vec<f64> {
            let b = 1.0 / (fan_in as f64).sqrt();
            (0..n).map(|_| rng.gen_range(-b..b)).collect()
        };
        let (w1, w2) = if h == 0 {
            (Vec::new(), uniform(k, k))
        } else {
            (uniform(k, h * k), uniform(h, h))
        };
        Self {
            input_names,
            input_dim: k,
            hidden_width: h,
            activation: if h == 0 { "none" } else { "tanh" }.to_string(),
            w1,
            b1: vec![0.0; h],
            w2,
            b2: 0.0,
            config,
            training_curve: Vec::new(),
        }
    }

    fn hidden(&self, z: &[f64]) -> Vec<f64> {
        if self.hidden_width == 0 {
            return z.to_vec();
        }
        let k = self.input_dim;
        (0..self.hidden_width)
            .map(|j| {
                let pre = self.b1[j]
                    + self.w1[j * k..(j + 1) * k]
                        .iter()
                        .zip(z)
                        .map(|(w, x)| w * x)
                        .sum::<f64>();
                pre.tanh()
            })
            .collect()
    }

    fn output_margin(&self, z: &[f64]) -> f64 {
        let a = self.hidden(z);
        self.b2 + self.w2.iter().zip(&a).map(|(w, v)| w * v).sum::<f64>()
    }

    pub fn predict(&self, z: &[f64]) -> Result<f64> {
        if z.len() != self.input_dim {
            return Err(StackingError::DimensionMismatch {
                expected: self.input_dim,
                got: z.len(),
            });
        }
        Ok(crate::classifiers::sigmoid(self.output_margin(z)))
    }

    pub fn predict_label(&self, z: &[f64]) -> Result<u8> {
        self.predict(z).map(label_from_proba)
    }

    pub fn predict_all(&self, z: &Matrix) -> Result<Vec<f64>> {
        z.iter_rows().map(|r| self.predict(r)).collect()
    }

    /// Parameters flattened as `w1, b1, w2, b2`.
    pub fn params(&self) -> Vec<f64> {
        let mut p = self.w1.clone();
        p.extend(&self.b1);
        p.extend(&self.w2);
        p.push(self.b2);
        p
    }

    pub fn set_params(&mut self, p: &[f64]) {
        let (n1, nb, n2) = (self.w1.len(), self.b1.len(), self.w2.len());
        assert_eq!(p.len(), n1 + nb + n2 + 1, "parameter vector length");
        self.w1.copy_from_slice(&p[..n1]);
        self.b1.copy_from_slice(&p[n1..n1 + nb]);
        self.w2.copy_from_slice(&p[n1 + nb..n1 + nb + n2]);
        self.b2 = p[n1 + nb + n2];
    }

    /// Mean log-loss over the rows of `z`.
    pub fn loss(&self, z: &Matrix, y: &[u8]) -> f64 {
        z.iter_rows()
            .zip(y)
            .map(|(r, &t)| {
                let o = self.output_margin(r);
                crate::classifiers::softplus(o) - f64::from(t) * o
            })
            .sum::<f64>()
            / y.len() as f64
    }

    /// Gradient of [`Self::loss`] in [`Self::params`] order, by backpropagation.
    pub fn gradient(&self, z: &Matrix, y: &[u8]) -> Vec<f64> {
        let k = self.input_dim;
        let h = self.hidden_width;
        let n = y.len() as f64;
        let mut gw1 = vec![0.0; self.w1.len()];
        let mut gb1 = vec![0.0; h];
        let mut gw2 = vec![0.0; self.w2.len()];
        let mut gb2 = 0.0;
        for (r, &t) in z.iter_rows().zip(y) {
            let a = self.hidden(r);
            let o = self.b2 + self.w2.iter().zip(&a).map(|(w, v)| w * v).sum::<f64>();
            let d_out = (crate::classifiers::sigmoid(o) - f64::from(t)) / n;
            gb2 += d_out;
            for (g, v) in gw2.iter_mut().zip(&a) {
                *g += d_out * v;
            }
            for j in 0..h {
                let d_pre = d_out * self.w2[j] * (1.0 - a[j] * a[j]);
                gb1[j] += d_pre;
                for (g, x) in gw1[j * k..(j + 1) * k].iter_mut().zip(r) {
                    *g += d_pre * x;
                }
            }
        }
        let mut g = gw1;
        g.extend(gb1);
        g.extend(gw2);
        g.push(gb2);
        g
    }

    pub fn to_json(&self) -> Result<String> {
        serde_json::to_string_pretty(&StackFile::MetaLearner(self.clone()))
            .map_err(|e| StackingError::Format(e.to_string()))
    }

    pub fn from_json(s: &str) -> Result<Self> {
        match serde_json::from_str(s).map_err(|e| StackingError::Format(e.to_string()))? {
            StackFile::MetaLearner(m) => Ok(m),
            StackFile::LevelOne(_) => Err(StackingError::Format("file holds level-one data".into())),
        }
    }
}

impl LevelOneData {
    pub fn to_json(&self) -> Result<String> {
        serde_json::to_string_pretty(&StackFile::LevelOne(self.clone()))
            .map_err(|e| StackingError::Format(e.to_string()))
    }

    pub fn from_json(s: &str) -> Result<Self> {
        match serde_json::from_str(s).map_err(|e| StackingError::Format(e.to_string()))? {
            StackFile::LevelOne(d) => Ok(d),
            StackFile::MetaLearner(_) => Err(StackingError::Format("file holds a meta-learner".into())),
        }
    }
}

#[derive(Serialize, Deserialize)]
#[serde(tag = "artifact", rename_all = "snake_case")]
enum StackFile {
    LevelOne(LevelOneData),
    MetaLearner(MetaLearner),
}

/// Trains on level-one data until the epoch cap or a loss plateau.
pub fn train_meta(data: &LevelOneData, config: &MetaConfig) -> Result<MetaLearner> {
    if data.k() < 2 {
        return Err(StackingError::TooFewGeneralizers(data.k()));
    }
    fit_meta(data, config)
}

/// [`train_meta`] without the two-generalizer floor, for diagnostics and
/// single-model reductions.
pub fn fit_meta(data: &LevelOneData, config: &MetaConfig) -> Result<MetaLearner> {
    let pos = data.y.iter().filter(|&&v| v == 1).count();
    if pos == 0 || pos == data.len() {
        return Err(StackingError::SingleClass);
    }
    let mut m = MetaLearner::init(data.generalizer_names.clone(), config.clone());
    let mut loss = m.loss(&data.z, &data.y);
    if !loss.is_finite() {
        return Err(StackingError::NonFiniteLoss { epoch: 0, last: f64::NAN });
    }
    m.training_curve.push(loss);
    for epoch in 1..=config.max_epochs {
        let g = m.gradient(&data.z, &data.y);
        let p: Vec<f64> = m
            .params()
            .iter()
            .zip(&g)
            .map(|(w, d)| w - config.step_size * d)
            .collect();
        m.set_params(&p);
        let next = m.loss(&data.z, &data.y);
        if !next.is_finite() {
            return Err(StackingError::NonFiniteLoss { epoch, last: loss });
        }
        m.training_curve.push(next);
        let delta = loss - next;
        loss = next;
        if delta.abs() < config.plateau {
            break;
        }
    }
    Ok(m)
}
