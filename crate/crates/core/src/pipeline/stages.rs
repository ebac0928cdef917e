use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::sync::Mutex;

use chrono::{Days, NaiveDate};
use log::{info, warn};
use serde::{Deserialize, Serialize};

use super::{read_artifact, stage_limit, write_file, AccessRecord, FrameAccess, InputFile, PipelineError, Result, RunConfig, Seeds, Stage};
use crate::classifiers::{label_from_proba, train, Family, Hyperparams, ParamPoint, TrainedClassifier};
use crate::importance::{
    combine_importance, model_importance, stacked_importance, ImportanceReport, ModelWeight, ImportanceScore, STACKED_ID,
};
use crate::indicators::{attach_external_columns, compute_catalog, read_external_csv, FeatureFrame};
use crate::market_data::{impute_missing, merge_exchanges, read_bars_file, write_bars_csv, BarSeries, RawSeries};
use crate::rng::derive_seed;
use crate::stacking::{build_level_one, generalizer_names, train_meta, LevelOneData, MetaLearner};
use crate::validation::{build_purged_folds, evaluate, random_search, MetricsReport, SearchOptions, SkippedFold};
use crate::DateRange;

pub const STACKED_MODEL: &str = STACKED_ID;

pub(crate) const COMPOSITE: &str = "composite.csv";
pub(crate) const FEATURES: &str = "features.csv";
pub(crate) const FOLDS: &str = "folds.json";
pub(crate) const BEST_PARAMS: &str = "best_params.json";
pub(crate) const LEVEL_ONE_CSV: &str = "level_one.csv";
pub(crate) const LEVEL_ONE: &str = "level_one.json";
pub(crate) const META: &str = "meta.json";
pub(crate) const META_CURVE: &str = "meta_curve.jsonl";
pub(crate) const METRICS: &str = "metrics.jsonl";
pub(crate) const METRICS_CSV: &str = "metrics.csv";
pub(crate) const IMPORTANCE_CSV: &str = "importance.csv";
pub(crate) const IMPORTANCE: &str = "importance.json";
pub(crate) const REPORT: &str = "report.txt";

pub(crate) struct Ctx<'a> {
    pub config: &'a RunConfig,
    pub out_dir: &'a Path,
    pub seeds: &'a Seeds,
    pub log: &'a Mutex<Vec<AccessRecord>>,
    pub stage: Stage,
}

#[derive(Default)]
pub(crate) struct StageOutput {
    /// Paths relative to the output directory.
    pub artifacts: Vec<String>,
    pub notices: Vec<String>,
}

impl Ctx<'_> {
    fn path(&self, rel: &str) -> PathBuf {
        self.out_dir.join(rel)
    }

    fn write(&self, out: &mut StageOutput, rel: &str, bytes: &[u8]) -> Result<()> {
        write_file(&self.path(rel), bytes)?;
        out.artifacts.push(rel.to_string());
        Ok(())
    }

    fn access<'f>(&'f self, frame: &'f FeatureFrame) -> FrameAccess<'f> {
        FrameAccess::new(frame, self.stage, stage_limit(self.config, self.stage), self.log)
    }

    fn stacking_enabled(&self) -> bool {
        self.config.search.families.len() >= 2
    }
}

pub(crate) fn run(ctx: &Ctx, stage: Stage) -> Result<StageOutput> {
    match stage {
        Stage::Ingest => ingest(ctx),
        Stage::Features => features(ctx),
        Stage::Cv => cv(ctx),
        Stage::Train => train_level0(ctx),
        Stage::Stack => stack(ctx),
        Stage::Evaluate => evaluate_stage(ctx),
        Stage::Importance => importance(ctx),
        Stage::Report => report(ctx),
    }
}

fn ingest(ctx: &Ctx) -> Result<StageOutput> {
    let mut out = StageOutput::default();
    // One bar past the evaluation window labels its last day.
    let last = ctx.config.windows.evaluation.end + Days::new(1);
    let mut sources = Vec::new();
    for InputFile { exchange, path } in &ctx.config.data.inputs {
        let raw = read_bars_file(path, Some(exchange.clone()))?;
        let bars: Vec<_> = raw.bars.into_iter().filter(|b| b.timestamp <= last).collect();
        if bars.is_empty() {
            return Err(PipelineError::bad(path, "no bars on or before the end of the evaluation window"));
        }
        info!("{exchange}: {} bars, {} with missing fields", bars.len(), bars.iter().filter(|b| !b.is_complete()).count());
        sources.push(RawSeries::new(bars, Some(exchange.clone()))?);
    }
    let merged = merge_exchanges(&sources)?;
    let series = impute_missing(&merged, ctx.config.data.impute_alpha)?;
    let mut buf = Vec::new();
    write_bars_csv(&mut buf, &series.to_raw())?;
    ctx.write(&mut out, COMPOSITE, &buf)?;
    Ok(out)
}

fn load_composite(ctx: &Ctx) -> Result<BarSeries> {
    let path = ctx.path(COMPOSITE);
    if !path.exists() {
        return Err(PipelineError::MissingArtifact(path));
    }
    let raw = read_bars_file(&path, Some("composite".into()))?;
    // A complete series passes through imputation unchanged.
    Ok(impute_missing(&raw, 1.0)?)
}

fn features(ctx: &Ctx) -> Result<StageOutput> {
    let mut out = StageOutput::default();
    let series = load_composite(ctx)?;
    let specs = ctx.config.indicator_specs()?;
    let mut frame = compute_catalog(&series, &specs)?;
    for path in &ctx.config.data.external {
        let f = std::fs::File::open(path).map_err(|e| PipelineError::io(path, e))?;
        let cols = read_external_csv(f)?;
        let (next, dropped) = attach_external_columns(&frame, &cols)?;
        if dropped > 0 {
            out.notices.push(format!("{} rows dropped for missing values in {}", dropped, path.display()));
        }
        frame = next;
    }
    info!("feature frame: {} rows x {} columns", frame.n_rows(), frame.n_cols());
    let mut buf = Vec::new();
    frame.write_csv(&mut buf)?;
    ctx.write(&mut out, FEATURES, &buf)?;
    Ok(out)
}

fn load_frame(ctx: &Ctx) -> Result<FeatureFrame> {
    let path = ctx.path(FEATURES);
    let text = read_artifact(&path)?;
    Ok(FeatureFrame::read_csv(text.as_bytes())?)
}

/// Selected hyperparameters of one family.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub(crate) struct BestParams {
    pub trial: usize,
    pub point: ParamPoint,
    pub hyperparams: Hyperparams,
    pub mean_log_loss: f64,
    pub fold_log_loss: Vec<f64>,
    pub folds_used: Vec<usize>,
    pub skipped_folds: Vec<SkippedFold>,
}

fn to_json<T: Serialize>(v: &T) -> Vec<u8> {
    let mut s = serde_json::to_string_pretty(v).expect("artifact serializes");
    s.push('\n');
    s.into_bytes()
}

fn to_jsonl<T: Serialize>(items: impl IntoIterator<Item = T>) -> Vec<u8> {
    let mut s = String::new();
    for it in items {
        s.push_str(&serde_json::to_string(&it).expect("record serializes"));
        s.push('\n');
    }
    s.into_bytes()
}

fn from_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T> {
    let text = read_artifact(path)?;
    serde_json::from_str(&text).map_err(|e| PipelineError::bad(path, e))
}

fn cv(ctx: &Ctx) -> Result<StageOutput> {
    let mut out = StageOutput::default();
    let frame = load_frame(ctx)?;
    let level0 = ctx.access(&frame).view(&ctx.config.windows.level0, "level-0 search rows")?;
    let s = &ctx.config.search;
    let plan = build_purged_folds(level0.timestamps(), &s.folds, s.purge_days)?;
    ctx.write(&mut out, FOLDS, &to_json(&plan))?;
    let opts = SearchOptions {
        n_iter: s.n_iter,
        seed: ctx.seeds.search,
        min_train_rows: s.min_train_rows,
    };
    let mut best = BTreeMap::new();
    for &family in &s.families {
        let space = ctx.config.space(family)?;
        let r = random_search(&space, &plan, &level0, &opts)?;
        let failed = r.trials.iter().filter(|t| t.error.is_some()).count();
        if failed > 0 {
            out.notices.push(format!("{family}: {failed} of {} trials failed", r.trials.len()));
        }
        for sk in &r.skipped_folds {
            out.notices.push(format!("{family}: fold {} skipped ({})", sk.fold, sk.reason));
        }
        ctx.write(&mut out, &format!("trials/{family}.jsonl"), &to_jsonl(&r.trials))?;
        best.insert(
            family.as_str().to_string(),
            BestParams {
                trial: r.best_trial,
                point: r.best_point,
                hyperparams: r.best_hyperparams,
                mean_log_loss: r.best_mean_log_loss,
                fold_log_loss: r.best_fold_log_loss,
                folds_used: r.folds_used,
                skipped_folds: r.skipped_folds,
            },
        );
    }
    ctx.write(&mut out, BEST_PARAMS, &to_json(&best))?;
    Ok(out)
}

fn model_path(family: Family) -> String {
    format!("models/{family}.json")
}

fn train_level0(ctx: &Ctx) -> Result<StageOutput> {
    let mut out = StageOutput::default();
    let frame = load_frame(ctx)?;
    let level0 = ctx.access(&frame).view(&ctx.config.windows.level0, "level-0 training rows")?;
    let best: BTreeMap<String, BestParams> = from_json(&ctx.path(BEST_PARAMS))?;
    let ts = level0.timestamps();
    let window = DateRange::new(ts[0], ts[ts.len() - 1]);
    let all: Vec<usize> = (0..level0.n_rows()).collect();
    let data = level0.dataset(&all);
    for &family in &ctx.config.search.families {
        let bp = best
            .get(family.as_str())
            .ok_or_else(|| PipelineError::bad(&ctx.path(BEST_PARAMS), format!("no entry for `{family}`")))?;
        let seed = derive_seed(ctx.seeds.final_fit, &[family.as_str()]);
        let mut m = train(&data, &bp.hyperparams, seed)?;
        m.training_window = Some(window);
        ctx.write(&mut out, &model_path(family), m.to_json()?.as_bytes())?;
    }
    Ok(out)
}

fn load_models(ctx: &Ctx) -> Result<Vec<TrainedClassifier>> {
    ctx.config
        .search
        .families
        .iter()
        .map(|&f| {
            let path = ctx.path(&model_path(f));
            let text = read_artifact(&path)?;
            TrainedClassifier::from_json(&text).map_err(|e| PipelineError::bad(&path, e))
        })
        .collect()
}

fn skip_notice(ctx: &Ctx) -> String {
    format!(
        "stacking skipped: {} level-0 model enabled, at least 2 are needed",
        ctx.config.search.families.len()
    )
}

fn stack(ctx: &Ctx) -> Result<StageOutput> {
    let mut out = StageOutput::default();
    if !ctx.stacking_enabled() {
        warn!("{}", skip_notice(ctx));
        out.notices.push(skip_notice(ctx));
        return Ok(out);
    }
    let frame = load_frame(ctx)?;
    let models = load_models(ctx)?;
    let w = ctx.config.windows.level1;
    let view = ctx.access(&frame).view(&w, "level-one rows")?;
    let lo = build_level_one(&models, &view, &w, ctx.config.stack.mode)?;
    let mut buf = Vec::new();
    lo.write_csv(&mut buf).map_err(|e| PipelineError::bad(&ctx.path(LEVEL_ONE_CSV), e))?;
    ctx.write(&mut out, LEVEL_ONE_CSV, &buf)?;
    ctx.write(&mut out, LEVEL_ONE, lo.to_json()?.as_bytes())?;
    let meta = train_meta(&lo, &ctx.config.meta_config(ctx.seeds.meta_init))?;
    info!(
        "meta-learner: {} epochs, final training log-loss {:.6}",
        meta.training_curve.len() - 1,
        meta.training_curve.last().copied().unwrap_or(f64::NAN)
    );
    ctx.write(&mut out, META, meta.to_json()?.as_bytes())?;
    #[derive(Serialize)]
    struct Point {
        epoch: usize,
        loss: f64,
    }
    let curve = meta.training_curve.iter().enumerate().map(|(epoch, &loss)| Point { epoch, loss });
    ctx.write(&mut out, META_CURVE, &to_jsonl(curve))?;
    Ok(out)
}

fn load_meta(ctx: &Ctx) -> Result<(LevelOneData, MetaLearner)> {
    let p = ctx.path(LEVEL_ONE);
    let lo = LevelOneData::from_json(&read_artifact(&p)?).map_err(|e| PipelineError::bad(&p, e))?;
    let p = ctx.path(META);
    let meta = MetaLearner::from_json(&read_artifact(&p)?).map_err(|e| PipelineError::bad(&p, e))?;
    Ok((lo, meta))
}

/// Metrics of one model over one window.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelMetrics {
    pub model: String,
    pub window: DateRange,
    #[serde(flatten)]
    pub report: MetricsReport,
}

fn evaluate_stage(ctx: &Ctx) -> Result<StageOutput> {
    let mut out = StageOutput::default();
    let frame = load_frame(ctx)?;
    let models = load_models(ctx)?;
    let ids = generalizer_names(&models);
    let meta = if ctx.stacking_enabled() { Some(load_meta(ctx)?.1) } else { None };
    let w = &ctx.config.windows;
    let mut rows = Vec::new();
    for (window_id, window) in [("level1", w.level1), ("evaluation", w.evaluation)] {
        let view = ctx.access(&frame).view(&window, &format!("{window_id} evaluation rows"))?;
        let all: Vec<usize> = (0..view.n_rows()).collect();
        let x = view.matrix(&all);
        let y = view.labels();
        for (m, id) in models.iter().zip(&ids) {
            let p = m.predict_proba(&x)?;
            let pred: Vec<u8> = p.iter().map(|&v| label_from_proba(v)).collect();
            rows.push(ModelMetrics {
                model: id.clone(),
                window,
                report: evaluate(window_id, &p, &pred, y)?,
            });
        }
        if let Some(meta) = &meta {
            let lo = build_level_one(&models, &view, &window, ctx.config.stack.mode)?;
            let p = meta.predict_all(&lo.z)?;
            let pred: Vec<u8> = p.iter().map(|&v| label_from_proba(v)).collect();
            rows.push(ModelMetrics {
                model: STACKED_MODEL.to_string(),
                window,
                report: evaluate(window_id, &p, &pred, &lo.y)?,
            });
        }
    }
    ctx.write(&mut out, METRICS, &to_jsonl(&rows))?;
    let mut w = csv::Writer::from_writer(Vec::new());
    let csv_err = |e: csv::Error| PipelineError::bad(&ctx.path(METRICS_CSV), e);
    w.write_record(["model", "window_id", "window", "n", "auc", "accuracy", "precision", "recall", "f1", "log_loss"])
        .map_err(csv_err)?;
    for r in &rows {
        let m = &r.report;
        w.write_record([
            r.model.clone(),
            m.window_id.clone(),
            r.window.to_string(),
            m.n.to_string(),
            m.auc.map(|v| v.to_string()).unwrap_or_default(),
            m.accuracy.to_string(),
            m.precision.to_string(),
            m.recall.to_string(),
            m.f1.to_string(),
            m.log_loss.to_string(),
        ])
        .map_err(csv_err)?;
    }
    let buf = w.into_inner().map_err(|e| PipelineError::bad(&ctx.path(METRICS_CSV), e))?;
    ctx.write(&mut out, METRICS_CSV, &buf)?;
    Ok(out)
}

pub(crate) fn load_metrics(path: &Path) -> Result<Vec<ModelMetrics>> {
    read_artifact(path)?
        .lines()
        .filter(|l| !l.trim().is_empty())
        .map(|l| serde_json::from_str(l).map_err(|e| PipelineError::bad(path, e)))
        .collect()
}

fn importance(ctx: &Ctx) -> Result<StageOutput> {
    let mut out = StageOutput::default();
    let frame = load_frame(ctx)?;
    let models = load_models(ctx)?;
    let grid = ctx.config.importance.grid_size;
    // Base-model backgrounds are their training windows, which end before
    // the level-one window.
    let limit = ctx.config.windows.level1;
    let view = ctx.access(&frame).view(&DateRange::new(frame.timestamps()[0], limit.end), "importance background")?;
    let report = if ctx.stacking_enabled() {
        let (lo, meta) = load_meta(ctx)?;
        stacked_importance(&meta, &models, &lo, &view, grid)?
    } else {
        out.notices.push("single model: its importance is reported with weight 1".into());
        single_model_report(&models[0], &view, grid)?
    };
    if report.uniform_fallback {
        out.notices.push("every model importance was zero; models weighted uniformly".into());
    }
    let mut buf = Vec::new();
    report
        .write_csv(&mut buf)
        .map_err(|e| PipelineError::bad(&ctx.path(IMPORTANCE_CSV), e))?;
    ctx.write(&mut out, IMPORTANCE_CSV, &buf)?;
    ctx.write(&mut out, IMPORTANCE, &to_json(&report))?;
    for (stem, svg) in report.charts() {
        ctx.write(&mut out, &format!("charts/{stem}.svg"), svg.as_bytes())?;
    }
    Ok(out)
}

fn single_model_report(m: &TrainedClassifier, frame: &FeatureFrame, grid: usize) -> Result<ImportanceReport> {
    let id = generalizer_names(std::slice::from_ref(m)).remove(0);
    let window = m
        .training_window
        .ok_or_else(|| crate::importance::ImportanceError::UnknownTrainingWindow(id.clone()))?;
    let rows = frame.rows_in(&window);
    if rows.is_empty() {
        return Err(PipelineError::EmptyWindow(window));
    }
    let scores = model_importance(m, &frame.matrix(&rows), &id, grid)?;
    let c = combine_importance(&[1.0], &[scores.iter().map(|s| s.score).collect()]);
    let combined = scores
        .iter()
        .zip(&c.combined)
        .map(|(s, &score)| ImportanceScore {
            model_id: STACKED_ID.to_string(),
            score,
            ..s.clone()
        })
        .collect();
    Ok(ImportanceReport {
        models: vec![ModelWeight {
            model_id: id,
            score: 1.0,
            weight: 1.0,
        }],
        per_model: scores,
        combined,
        uniform_fallback: false,
    })
}

fn report(ctx: &Ctx) -> Result<StageOutput> {
    let mut out = StageOutput::default();
    let text = super::emit_report(ctx.out_dir)?;
    ctx.write(&mut out, REPORT, text.as_bytes())?;
    Ok(out)
}

/// Writes one seeded synthetic OHLCV file per exchange into `dir` and
/// returns the matching config entries.
pub fn write_synthetic_inputs(
    dir: &Path,
    n_bars: usize,
    start: NaiveDate,
    exchanges: &[&str],
    missing_rate: f64,
    seed: u64,
) -> Result<Vec<InputFile>> {
    let feeds = crate::synthetic::exchange_feeds(n_bars, seed, start, exchanges, missing_rate);
    let mut inputs = Vec::new();
    for (name, feed) in exchanges.iter().zip(&feeds) {
        let path = dir.join(format!("{name}.csv"));
        let mut buf = Vec::new();
        write_bars_csv(&mut buf, feed)?;
        write_file(&path, &buf)?;
        inputs.push(InputFile {
            exchange: name.to_string(),
            path,
        });
    }
    Ok(inputs)
}
