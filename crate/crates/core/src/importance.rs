//! Partial-dependence importance for single models and for the stack.
//!
//! A model's importance for a feature is the spread of its partial
//! dependence: the sample standard deviation over the grid for continuous
//! features, a quarter of the range for 0/1 features. The stacked score of a
//! feature weights each base model's score by that model's normalized
//! importance inside the meta-learner.

use std::fmt::Write as _;
use std::io::Write;

use log::warn;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::classifiers::{FeatureMatrix, ModelError, Predictor, TrainedClassifier};
use crate::indicators::FeatureFrame;
use crate::stacking::{generalizer_names, LevelOneData, MetaLearner, StackingError};
use crate::Matrix;

pub const DEFAULT_GRID_SIZE: usize = 20;
pub const STACKED_ID: &str = "stacked";

#[derive(Debug, Error)]
pub enum ImportanceError {
    #[error("unknown feature `{0}`")]
    UnknownFeature(String),
    #[error("empty background set for `{0}`")]
    EmptyBackground(String),
    #[error("model `{0}` has no recorded training window")]
    UnknownTrainingWindow(String),
    #[error("level-one data has {level_one} columns but {models} models were given")]
    ModelCount { level_one: usize, models: usize },
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Stacking(#[from] StackingError),
}

pub type Result<T> = std::result::Result<T, ImportanceError>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FeatureKind {
    Continuous,
    /// 0/1 indicator columns.
    Categorical,
}

impl FeatureKind {
    pub fn of(values: &[f64]) -> Self {
        if values.iter().all(|&v| v == 0.0 || v == 1.0) {
            FeatureKind::Categorical
        } else {
            FeatureKind::Continuous
        }
    }

    pub fn as_str(&self) -> &'static str {
        match self {
            FeatureKind::Continuous => "continuous",
            FeatureKind::Categorical => "categorical",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PartialDependence {
    pub feature: String,
    pub kind: FeatureKind,
    /// Strictly increasing evaluation points.
    pub grid: Vec<f64>,
    /// Mean predicted probability at each grid point.
    pub values: Vec<f64>,
    pub n_background: usize,
    /// Set when the feature is constant over the background.
    pub degenerate: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ImportanceScore {
    pub feature: String,
    pub score: f64,
    pub kind: FeatureKind,
    pub model_id: String,
    /// Set when the score was forced to 0 by a single-point grid.
    pub flagged: bool,
}

/// Linear-interpolation quantile of sorted data.
fn quantile(sorted: &[f64], q: f64) -> f64 {
    let pos = q * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    sorted[lo] + (sorted[hi] - sorted[lo]) * (pos - lo as f64)
}

/// Evaluation grid: distinct values for 0/1 columns, otherwise `grid_size`
/// evenly spaced quantiles with repeats removed.
pub fn pdp_grid(values: &[f64], kind: FeatureKind, grid_size: usize) -> Vec<f64> {
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    let mut grid: Vec<f64> = match kind {
        FeatureKind::Categorical => sorted,
        FeatureKind::Continuous if sorted.is_empty() => Vec::new(),
        FeatureKind::Continuous => {
            let m = grid_size.max(1);
            if m == 1 {
                vec![quantile(&sorted, 0.5)]
            } else {
                (0..m)
                    .map(|i| quantile(&sorted, i as f64 / (m - 1) as f64))
                    .collect()
            }
        }
    };
    grid.dedup();
    grid
}

/// Partial dependence of `predict` on column `j` of `background`.
fn pdp_core<F>(background: &Matrix, feature: &str, j: usize, grid_size: usize, predict: F) -> Result<PartialDependence>
where
    F: Fn(&Matrix) -> Result<Vec<f64>> + Sync,
{
    if background.rows() == 0 {
        return Err(ImportanceError::EmptyBackground(feature.to_string()));
    }
    let column = background.column(j);
    let kind = FeatureKind::of(&column);
    let grid = pdp_grid(&column, kind, grid_size);
    let values = grid
        .par_iter()
        .map(|&v| {
            let p = predict(&background.with_column_value(j, v))?;
            Ok(p.iter().sum::<f64>() / p.len() as f64)
        })
        .collect::<Result<Vec<f64>>>()?;
    Ok(PartialDependence {
        feature: feature.to_string(),
        kind,
        degenerate: grid.len() < 2,
        grid,
        values,
        n_background: background.rows(),
    })
}

/// Averages the model's probability over every background row with
/// `feature` forced to each grid value.
pub fn partial_dependence<P: Predictor + ?Sized>(
    model: &P,
    background: &FeatureMatrix,
    feature: &str,
    grid_size: usize,
) -> Result<PartialDependence> {
    let j = background
        .column_index(feature)
        .ok_or_else(|| ImportanceError::UnknownFeature(feature.to_string()))?;
    let names = background.names().to_vec();
    let pd = pdp_core(background.data(), feature, j, grid_size, |m| {
        let x = FeatureMatrix::new(names.clone(), m.clone())?;
        Ok(model.predict_proba(&x)?)
    })?;
    if pd.degenerate {
        warn!("feature `{feature}` is constant over the background; single-point grid");
    }
    Ok(pd)
}

/// Partial dependence of the meta-learner on level-one column `k`.
pub fn meta_partial_dependence(meta: &MetaLearner, level_one: &LevelOneData, k: usize, grid_size: usize) -> Result<PartialDependence> {
    let name = &level_one.generalizer_names[k];
    pdp_core(&level_one.z, name, k, grid_size, |m| Ok(meta.predict_all(m)?))
}

/// Sample standard deviation for continuous features, range over 4 for
/// categorical ones; 0 and flagged for a single-point grid.
pub fn importance_from_pdp(pd: &PartialDependence, kind: FeatureKind, model_id: &str) -> ImportanceScore {
    let v = &pd.values;
    let (score, flagged) = if v.len() < 2 {
        (0.0, true)
    } else {
        let s = match kind {
            FeatureKind::Continuous => {
                let n = v.len() as f64;
                let mean = v.iter().sum::<f64>() / n;
                (v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt()
            }
            FeatureKind::Categorical => {
                let max = v.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
                let min = v.iter().cloned().fold(f64::INFINITY, f64::min);
                (max - min) / 4.0
            }
        };
        (s, false)
    };
    ImportanceScore {
        feature: pd.feature.clone(),
        score,
        kind,
        model_id: model_id.to_string(),
        flagged,
    }
}

/// PDP importance of every column of `background` for one model.
pub fn model_importance<P: Predictor + ?Sized>(
    model: &P,
    background: &FeatureMatrix,
    model_id: &str,
    grid_size: usize,
) -> Result<Vec<ImportanceScore>> {
    background
        .names()
        .par_iter()
        .map(|f| {
            let pd = partial_dependence(model, background, f, grid_size)?;
            Ok(importance_from_pdp(&pd, pd.kind, model_id))
        })
        .collect()
}

/// Normalized model weights and weighted feature scores.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Combination {
    pub weights: Vec<f64>,
    pub combined: Vec<f64>,
    /// True when every model score was 0 and weights fell back to uniform.
    pub uniform_fallback: bool,
}

/// `w_k = s_k / Σ s_j` and `combined_t = Σ w_k · i_k[t]`.
pub fn combine_importance(model_scores: &[f64], per_model: &[Vec<f64>]) -> Combination {
    assert_eq!(model_scores.len(), per_model.len(), "one score row per model");
    let k = model_scores.len();
    let total: f64 = model_scores.iter().sum();
    let uniform_fallback = !(total > 0.0);
    let weights: Vec<f64> = if uniform_fallback {
        warn!("every model importance is zero; weighting models uniformly");
        vec![1.0 / k as f64; k]
    } else {
        model_scores.iter().map(|s| s / total).collect()
    };
    let n_features = per_model.first().map_or(0, Vec::len);
    let combined = (0..n_features)
        .map(|t| weights.iter().zip(per_model).map(|(w, s)| w * s[t]).sum())
        .collect();
    Combination {
        weights,
        combined,
        uniform_fallback,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelWeight {
    pub model_id: String,
    /// Importance of the model's column inside the meta-learner.
    pub score: f64,
    pub weight: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ImportanceReport {
    pub models: Vec<ModelWeight>,
    /// Per-model feature scores, model-major in level-one column order.
    pub per_model: Vec<ImportanceScore>,
    /// Weighted stacked scores, one per feature in frame column order.
    pub combined: Vec<ImportanceScore>,
    pub uniform_fallback: bool,
}

impl ImportanceReport {
    /// Combined scores sorted by descending score, ties by name.
    pub fn ranking(&self) -> Vec<&ImportanceScore> {
        let mut r: Vec<&ImportanceScore> = self.combined.iter().collect();
        r.sort_by(|a, b| b.score.total_cmp(&a.score).then_with(|| a.feature.cmp(&b.feature)));
        r
    }

    /// `level,model_id,feature,kind,score,weight`.
    pub fn write_csv<W: Write>(&self, w: W) -> std::result::Result<(), csv::Error> {
        let mut w = csv::Writer::from_writer(w);
        w.write_record(["level", "model_id", "feature", "kind", "score", "weight"])?;
        for m in &self.models {
            w.write_record([
                "model",
                STACKED_ID,
                &m.model_id,
                "",
                &m.score.to_string(),
                &m.weight.to_string(),
            ])?;
        }
        for s in &self.per_model {
            let weight = self
                .models
                .iter()
                .find(|m| m.model_id == s.model_id)
                .map_or(0.0, |m| m.weight);
            w.write_record([
                "feature",
                &s.model_id,
                &s.feature,
                s.kind.as_str(),
                &s.score.to_string(),
                &weight.to_string(),
            ])?;
        }
        for s in &self.combined {
            w.write_record(["feature", STACKED_ID, &s.feature, s.kind.as_str(), &s.score.to_string(), "1"])?;
        }
        w.flush()?;
        Ok(())
    }

    /// Chart files as `(file stem, svg)`: model weights, the combined
    /// ranking, and one chart per base model.
    pub fn charts(&self) -> Vec<(String, String)> {
        let mut out = Vec::new();
        let weights: Vec<(String, f64)> = self.models.iter().map(|m| (m.model_id.clone(), m.weight)).collect();
        out.push(("model_importance".to_string(), bar_chart_svg("Model importance in the stack", &weights)));
        let combined: Vec<(String, f64)> = self.ranking().iter().map(|s| (s.feature.clone(), s.score)).collect();
        out.push(("combined_importance".to_string(), bar_chart_svg("Stacked feature importance", &combined)));
        for m in &self.models {
            let mut bars: Vec<(String, f64)> = self
                .per_model
                .iter()
                .filter(|s| s.model_id == m.model_id)
                .map(|s| (s.feature.clone(), s.score))
                .collect();
            bars.sort_by(|a, b| b.1.total_cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
            out.push((
                format!("{}_importance", m.model_id),
                bar_chart_svg(&format!("Feature importance: {}", m.model_id), &bars),
            ));
        }
        out
    }
}

/// Combined importance of a stack.
///
/// Meta-learner PDPs run over the level-one rows. Each base model's PDPs run
/// over the frame rows of its own training window.
pub fn stacked_importance(
    meta: &MetaLearner,
    models: &[TrainedClassifier],
    level_one: &LevelOneData,
    frame: &FeatureFrame,
    grid_size: usize,
) -> Result<ImportanceReport> {
    if level_one.k() != models.len() {
        return Err(ImportanceError::ModelCount {
            level_one: level_one.k(),
            models: models.len(),
        });
    }
    let ids = generalizer_names(models);
    let model_scores = (0..level_one.k())
        .into_par_iter()
        .map(|k| {
            let pd = meta_partial_dependence(meta, level_one, k, grid_size)?;
            Ok(importance_from_pdp(&pd, pd.kind, STACKED_ID).score)
        })
        .collect::<Result<Vec<f64>>>()?;
    let per_model = models
        .iter()
        .zip(&ids)
        .map(|(m, id)| {
            let window = m
                .training_window
                .ok_or_else(|| ImportanceError::UnknownTrainingWindow(id.clone()))?;
            let rows = frame.rows_in(&window);
            if rows.is_empty() {
                return Err(ImportanceError::EmptyBackground(id.clone()));
            }
            model_importance(m, &frame.matrix(&rows), id, grid_size)
        })
        .collect::<Result<Vec<_>>>()?;
    let raw: Vec<Vec<f64>> = per_model.iter().map(|v| v.iter().map(|s| s.score).collect()).collect();
    let c = combine_importance(&model_scores, &raw);
    let combined = per_model[0]
        .iter()
        .zip(&c.combined)
        .map(|(s, &score)| ImportanceScore {
            feature: s.feature.clone(),
            score,
            kind: s.kind,
            model_id: STACKED_ID.to_string(),
            flagged: per_model.iter().all(|m| m.iter().any(|x| x.feature == s.feature && x.flagged)),
        })
        .collect();
    Ok(ImportanceReport {
        models: ids
            .into_iter()
            .zip(&model_scores)
            .zip(&c.weights)
            .map(|((model_id, &score), &weight)| ModelWeight { model_id, score, weight })
            .collect(),
        per_model: per_model.into_iter().flatten().collect(),
        combined,
        uniform_fallback: c.uniform_fallback,
    })
}

fn xml_escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;").replace('"', "&quot;")
}

/// Horizontal bar chart, bars in the given order.
pub fn bar_chart_svg(title: &str, bars: &[(String, f64)]) -> String {
    const BAR: f64 = 18.0;
    const GAP: f64 = 6.0;
    const LABEL_W: f64 = 220.0;
    const PLOT_W: f64 = 420.0;
    const TOP: f64 = 40.0;
    let max = bars.iter().map(|b| b.1).fold(0.0, f64::max);
    let height = TOP + bars.len() as f64 * (BAR + GAP) + 20.0;
    let width = LABEL_W + PLOT_W + 90.0;
    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" viewBox="0 0 {width} {height}" font-family="sans-serif" font-size="12">"#
    );
    let _ = writeln!(s, r#"<text x="10" y="22" font-size="15">{}</text>"#, xml_escape(title));
    for (i, (label, v)) in bars.iter().enumerate() {
        let y = TOP + i as f64 * (BAR + GAP);
        let w = if max > 0.0 { v / max * PLOT_W } else { 0.0 };
        let _ = writeln!(
            s,
            r#"<text x="{}" y="{}" text-anchor="end">{}</text>"#,
            LABEL_W - 8.0,
            y + BAR * 0.75,
            xml_escape(label)
        );
        let _ = writeln!(
            s,
            r##"<rect x="{LABEL_W}" y="{y}" width="{w:.3}" height="{BAR}" fill="#4a7ab5"/>"##
        );
        let _ = writeln!(s, r#"<text x="{:.3}" y="{}">{v:.4}</text>"#, LABEL_W + w + 6.0, y + BAR * 0.75);
    }
    s.push_str("</svg>\n");
    s
}
