//! Level-0 classifiers behind one train/predict interface.
//!
//! Discriminative: regularized gradient-boosted trees in two configurations
//! (`xgb`: exact level-wise splits; `lgbm`: 64-bin histogram, leaf-wise),
//! random forest, SVM, KNN and elastic-net logistic regression.
//! Generative: Gaussian naive Bayes, LDA and QDA.

mod bayes;
mod discriminant;
mod enet;
mod forest;
mod gbt;
mod knn;
mod scaling;
mod space;
pub mod svm;
mod tree;

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::{DateRange, Matrix};

pub use bayes::NaiveBayesModel;
pub use discriminant::{DiscriminantModel, GaussianClass};
pub use enet::{EnetModel, EnetParams};
pub use forest::{ForestModel, ForestParams};
pub use gbt::{GbtModel, GbtParams};
pub use knn::{KnnModel, KnnParams};
pub use scaling::Standardizer;
pub use space::{HyperparamSpace, ParamPoint, ParamRange, ParamValue};
pub use svm::{Kernel, SvmModel, SvmParams};
pub use tree::{Node, SplitRule, Tree};

#[derive(Debug, Error)]
pub enum ModelError {
    #[error("training data has a single class")]
    SingleClass,
    #[error("training data has non-finite values")]
    NonFinite,
    #[error("need at least {needed} rows, got {got}")]
    TooFewRows { needed: usize, got: usize },
    #[error("invalid hyperparameters: {0}")]
    BadHyperparams(String),
    #[error("feature columns do not match the model: expected {expected:?}, got {got:?}")]
    ColumnMismatch {
        expected: Vec<String>,
        got: Vec<String>,
    },
    #[error("{0}")]
    Shape(String),
    #[error("solver did not converge: {0}")]
    NotConverged(String),
    #[error("optimization diverged: {0}")]
    Diverged(String),
    #[error("covariance factorization failed: {0}")]
    Singular(String),
    #[error("model file: {0}")]
    Format(String),
}

pub type Result<T> = std::result::Result<T, ModelError>;

/// Model families. Declaration order is the canonical stacking order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Family {
    Xgb,
    Lgbm,
    Rf,
    Svm,
    Knn,
    LogitEnet,
    Nb,
    Lda,
    Qda,
}

impl Family {
    pub const ALL: [Family; 9] = [
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

    pub fn as_str(&self) -> &'static str {
        match self {
            Family::Xgb => "xgb",
            Family::Lgbm => "lgbm",
            Family::Rf => "rf",
            Family::Svm => "svm",
            Family::Knn => "knn",
            Family::LogitEnet => "logit_enet",
            Family::Nb => "nb",
            Family::Lda => "lda",
            Family::Qda => "qda",
        }
    }

    pub fn is_generative(&self) -> bool {
        matches!(self, Family::Nb | Family::Lda | Family::Qda)
    }
}

impl fmt::Display for Family {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Family {
    type Err = ModelError;

    fn from_str(s: &str) -> Result<Self> {
        Family::ALL
            .into_iter()
            .find(|f| f.as_str() == s)
            .ok_or_else(|| ModelError::BadHyperparams(format!("unknown model family `{s}`")))
    }
}

/// Named feature columns over a row-major matrix.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureMatrix {
    names: Vec<String>,
    data: Matrix,
}

impl FeatureMatrix {
    pub fn new(names: Vec<String>, data: Matrix) -> Result<Self> {
        if names.len() != data.cols() {
            return Err(ModelError::Shape(format!(
                "{} names for {} columns",
                names.len(),
                data.cols()
            )));
        }
        let mut seen = std::collections::HashSet::new();
        if let Some(d) = names.iter().find(|n| !seen.insert(n.as_str())) {
            return Err(ModelError::Shape(format!("duplicate column `{d}`")));
        }
        Ok(Self { names, data })
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn data(&self) -> &Matrix {
        &self.data
    }

    pub fn rows(&self) -> usize {
        self.data.rows()
    }

    pub fn cols(&self) -> usize {
        self.data.cols()
    }

    pub fn select_rows(&self, idx: &[usize]) -> Self {
        Self {
            names: self.names.clone(),
            data: self.data.select_rows(idx),
        }
    }

    pub fn with_column_value(&self, j: usize, v: f64) -> Self {
        Self {
            names: self.names.clone(),
            data: self.data.with_column_value(j, v),
        }
    }

    pub fn column_index(&self, name: &str) -> Option<usize> {
        self.names.iter().position(|n| n == name)
    }
}

/// Training rows with binary labels.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dataset {
    pub x: FeatureMatrix,
    pub y: Vec<u8>,
    /// Column indices treated as unordered categories by the histogram
    /// boosted-tree configuration. Other learners treat them as numeric.
    #[serde(default)]
    pub categorical: Vec<usize>,
}

impl Dataset {
    pub fn new(x: FeatureMatrix, y: Vec<u8>) -> Result<Self> {
        if x.rows() != y.len() {
            return Err(ModelError::Shape(format!(
                "{} rows but {} labels",
                x.rows(),
                y.len()
            )));
        }
        if y.iter().any(|&v| v > 1) {
            return Err(ModelError::Shape("labels must be 0 or 1".into()));
        }
        Ok(Self {
            x,
            y,
            categorical: Vec::new(),
        })
    }

    pub fn with_categorical(mut self, cols: Vec<usize>) -> Self {
        self.categorical = cols;
        self
    }

    pub fn len(&self) -> usize {
        self.y.len()
    }

    pub fn is_empty(&self) -> bool {
        self.y.is_empty()
    }

    pub fn positives(&self) -> usize {
        self.y.iter().filter(|&&v| v == 1).count()
    }

    pub fn subset(&self, idx: &[usize]) -> Self {
        Self {
            x: self.x.select_rows(idx),
            y: idx.iter().map(|&i| self.y[i]).collect(),
            categorical: self.categorical.clone(),
        }
    }

    /// Checks the preconditions shared by every learner.
    pub fn check_trainable(&self, min_rows: usize) -> Result<()> {
        if self.len() < min_rows {
            return Err(ModelError::TooFewRows {
                needed: min_rows,
                got: self.len(),
            });
        }
        if !self.x.data().all_finite() {
            return Err(ModelError::NonFinite);
        }
        let pos = self.positives();
        if pos == 0 || pos == self.len() {
            return Err(ModelError::SingleClass);
        }
        Ok(())
    }
}

/// Family-tagged hyperparameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case")]
pub enum Hyperparams {
    Xgb(GbtParams),
    Lgbm(GbtParams),
    Rf(ForestParams),
    Svm(SvmParams),
    Knn(KnnParams),
    LogitEnet(EnetParams),
    Nb,
    Lda,
    Qda,
}

impl Hyperparams {
    pub fn family(&self) -> Family {
        match self {
            Hyperparams::Xgb(_) => Family::Xgb,
            Hyperparams::Lgbm(_) => Family::Lgbm,
            Hyperparams::Rf(_) => Family::Rf,
            Hyperparams::Svm(_) => Family::Svm,
            Hyperparams::Knn(_) => Family::Knn,
            Hyperparams::LogitEnet(_) => Family::LogitEnet,
            Hyperparams::Nb => Family::Nb,
            Hyperparams::Lda => Family::Lda,
            Hyperparams::Qda => Family::Qda,
        }
    }

    pub fn default_for(family: Family) -> Self {
        match family {
            Family::Xgb => Hyperparams::Xgb(GbtParams::default()),
            Family::Lgbm => Hyperparams::Lgbm(GbtParams::default()),
            Family::Rf => Hyperparams::Rf(ForestParams::default()),
            Family::Svm => Hyperparams::Svm(SvmParams::default()),
            Family::Knn => Hyperparams::Knn(KnnParams::default()),
            Family::LogitEnet => Hyperparams::LogitEnet(EnetParams::default()),
            Family::Nb => Hyperparams::Nb,
            Family::Lda => Hyperparams::Lda,
            Family::Qda => Hyperparams::Qda,
        }
    }
}

/// Fitted per-family state.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum FittedModel {
    Gbt(GbtModel),
    Forest(ForestModel),
    Svm(SvmModel),
    Knn(KnnModel),
    Enet(EnetModel),
    NaiveBayes(NaiveBayesModel),
    Discriminant(DiscriminantModel),
}

impl FittedModel {
    fn proba_row(&self, x: &[f64]) -> f64 {
        match self {
            FittedModel::Gbt(m) => m.proba_row(x),
            FittedModel::Forest(m) => m.proba_row(x),
            FittedModel::Svm(m) => m.proba_row(x),
            FittedModel::Knn(m) => m.proba_row(x),
            FittedModel::Enet(m) => m.proba_row(x),
            FittedModel::NaiveBayes(m) => m.proba_row(x),
            FittedModel::Discriminant(m) => m.proba_row(x),
        }
    }
}

/// A fitted level-0 model. Immutable after training.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainedClassifier {
    pub family: Family,
    pub hyperparams: Hyperparams,
    pub feature_names: Vec<String>,
    pub seed: u64,
    /// Dates of the rows the model was fitted on, when known.
    pub training_window: Option<DateRange>,
    pub model: FittedModel,
}

/// Anything that maps named feature rows to class-1 probabilities.
pub trait Predictor: Sync {
    fn feature_names(&self) -> &[String];
    fn predict_proba(&self, x: &FeatureMatrix) -> Result<Vec<f64>>;
}

fn check_columns(expected: &[String], x: &FeatureMatrix) -> Result<()> {
    if expected != x.names() {
        return Err(ModelError::ColumnMismatch {
            expected: expected.to_vec(),
            got: x.names().to_vec(),
        });
    }
    Ok(())
}

/// Hard label rule shared by every model: 1 iff probability ≥ 0.5.
pub fn label_from_proba(p: f64) -> u8 {
    u8::from(p >= 0.5)
}

impl TrainedClassifier {
    pub fn predict_proba(&self, x: &FeatureMatrix) -> Result<Vec<f64>> {
        check_columns(&self.feature_names, x)?;
        Ok(x
            .data()
            .iter_rows()
            .map(|r| self.model.proba_row(r).clamp(0.0, 1.0))
            .collect())
    }

    pub fn predict_label(&self, x: &FeatureMatrix) -> Result<Vec<u8>> {
        Ok(self
            .predict_proba(x)?
            .into_iter()
            .map(label_from_proba)
            .collect())
    }

    pub fn to_json(&self) -> Result<String> {
        serde_json::to_string_pretty(&ModelFile::Level0(self.clone()))
            .map_err(|e| ModelError::Format(e.to_string()))
    }

    pub fn from_json(s: &str) -> Result<Self> {
        match serde_json::from_str::<ModelFile>(s).map_err(|e| ModelError::Format(e.to_string()))? {
            ModelFile::Level0(m) => Ok(m),
        }
    }
}

impl Predictor for TrainedClassifier {
    fn feature_names(&self) -> &[String] {
        &self.feature_names
    }

    fn predict_proba(&self, x: &FeatureMatrix) -> Result<Vec<f64>> {
        TrainedClassifier::predict_proba(self, x)
    }
}

/// Self-describing level-0 model file.
#[derive(Serialize, Deserialize)]
#[serde(tag = "artifact", rename_all = "snake_case")]
enum ModelFile {
    Level0(TrainedClassifier),
}

/// Fits the family selected by `hp` on `data`.
pub fn train(data: &Dataset, hp: &Hyperparams, seed: u64) -> Result<TrainedClassifier> {
    let model = match hp {
        Hyperparams::Xgb(p) => FittedModel::Gbt(gbt::train(data, p, gbt::Config::Exact, seed)?),
        Hyperparams::Lgbm(p) => FittedModel::Gbt(gbt::train(data, p, gbt::Config::Histogram, seed)?),
        Hyperparams::Rf(p) => FittedModel::Forest(forest::train(data, p, seed)?),
        Hyperparams::Svm(p) => FittedModel::Svm(svm::train(data, p)?),
        Hyperparams::Knn(p) => FittedModel::Knn(knn::train(data, p)?),
        Hyperparams::LogitEnet(p) => FittedModel::Enet(enet::train(data, p)?),
        Hyperparams::Nb => FittedModel::NaiveBayes(bayes::train(data)?),
        Hyperparams::Lda => FittedModel::Discriminant(discriminant::train(data, true)?),
        Hyperparams::Qda => FittedModel::Discriminant(discriminant::train(data, false)?),
    };
    Ok(TrainedClassifier {
        family: hp.family(),
        hyperparams: hp.clone(),
        feature_names: data.x.names().to_vec(),
        seed,
        training_window: None,
        model,
    })
}

pub(crate) fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// `ln(1 + e^z)` without overflow.
pub(crate) fn softplus(z: f64) -> f64 {
    if z > 0.0 {
        z + (-z).exp().ln_1p()
    } else {
        z.exp().ln_1p()
    }
}
