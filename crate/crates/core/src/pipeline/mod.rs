//! Config-driven orchestration of the full experiment.
//!
//! Stages run in a fixed order and communicate only through files in the
//! output directory, so each one can also be run on its own. Every written
//! artifact is hashed into `manifest.json`.

mod config;
mod report;
mod stages;

use std::fmt;
use std::path::{Path, PathBuf};
use std::sync::Mutex;
use std::time::Instant;

use chrono::NaiveDate;
use log::info;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

pub use config::{DataConfig, FeatureConfig, ImportanceConfig, InputFile, RunConfig, SearchConfig, StackConfig, Windows};
pub use report::{emit_report, window_label, METRIC_ROWS};
pub use stages::{write_synthetic_inputs, ModelMetrics, STACKED_MODEL};

use crate::indicators::FeatureFrame;
use crate::DateRange;

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error("config: {0}")]
    Config(String),
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("missing artifact {0}")]
    MissingArtifact(PathBuf),
    #[error("{path}: {reason}")]
    BadArtifact { path: PathBuf, reason: String },
    #[error("stage `{stage}` asked for rows through {requested}, past its limit {limit}")]
    Chronology {
        stage: Stage,
        requested: NaiveDate,
        limit: NaiveDate,
    },
    #[error("no feature rows in window {0}")]
    EmptyWindow(DateRange),
    #[error(transparent)]
    MarketData(#[from] crate::market_data::MarketDataError),
    #[error(transparent)]
    Indicators(#[from] crate::indicators::IndicatorError),
    #[error(transparent)]
    Validation(#[from] crate::validation::ValidationError),
    #[error(transparent)]
    Model(#[from] crate::classifiers::ModelError),
    #[error(transparent)]
    Stacking(#[from] crate::stacking::StackingError),
    #[error(transparent)]
    Importance(#[from] crate::importance::ImportanceError),
}

impl PipelineError {
    pub(crate) fn io(path: &Path, source: std::io::Error) -> Self {
        PipelineError::Io {
            path: path.to_path_buf(),
            source,
        }
    }

    pub(crate) fn bad(path: &Path, reason: impl fmt::Display) -> Self {
        PipelineError::BadArtifact {
            path: path.to_path_buf(),
            reason: reason.to_string(),
        }
    }
}

pub type Result<T> = std::result::Result<T, PipelineError>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Stage {
    Ingest,
    Features,
    Cv,
    Train,
    Stack,
    Evaluate,
    Importance,
    Report,
}

impl Stage {
    pub const ALL: [Stage; 8] = [
        Stage::Ingest,
        Stage::Features,
        Stage::Cv,
        Stage::Train,
        Stage::Stack,
        Stage::Evaluate,
        Stage::Importance,
        Stage::Report,
    ];

    pub fn as_str(&self) -> &'static str {
        match self {
            Stage::Ingest => "ingest",
            Stage::Features => "features",
            Stage::Cv => "cv",
            Stage::Train => "train",
            Stage::Stack => "stack",
            Stage::Evaluate => "evaluate",
            Stage::Importance => "importance",
            Stage::Report => "report",
        }
    }
}

impl fmt::Display for Stage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// A failure tagged with the stage it happened in.
#[derive(Debug, Error)]
#[error("stage `{stage}` failed: {error}")]
pub struct StageError {
    pub stage: Stage,
    pub error: PipelineError,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ArtifactRecord {
    /// Path relative to the output directory, `/`-separated.
    pub path: String,
    pub sha256: String,
    pub bytes: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageRecord {
    pub stage: Stage,
    pub artifacts: Vec<ArtifactRecord>,
    pub wall_ms: u64,
}

/// One read of feature rows by a stage.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AccessRecord {
    pub stage: Stage,
    pub purpose: String,
    pub requested: DateRange,
    /// Dates of the first and last row actually returned.
    pub first_row: Option<NaiveDate>,
    pub last_row: Option<NaiveDate>,
    pub rows: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Seeds {
    pub master: u64,
    pub search: u64,
    pub final_fit: u64,
    pub meta_init: u64,
}

impl Seeds {
    pub fn from_master(master: u64) -> Self {
        use crate::rng::derive_seed;
        Self {
            master,
            search: derive_seed(master, &["search"]),
            final_fit: derive_seed(master, &["final"]),
            meta_init: derive_seed(master, &["init"]),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Versions {
    pub crate_version: String,
    pub manifest_format: u32,
}

impl Default for Versions {
    fn default() -> Self {
        Self {
            crate_version: env!("CARGO_PKG_VERSION").to_string(),
            manifest_format: 1,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub config: RunConfig,
    pub seeds: Seeds,
    pub versions: Versions,
    /// Completed stages, in completion order; a rerun replaces its entry.
    pub stages: Vec<StageRecord>,
    pub failed_stage: Option<Stage>,
    pub failure: Option<String>,
    pub notices: Vec<String>,
    pub access_log: Vec<AccessRecord>,
}

impl RunManifest {
    pub fn new(config: RunConfig) -> Self {
        Self {
            seeds: Seeds::from_master(config.seed),
            config,
            versions: Versions::default(),
            stages: Vec::new(),
            failed_stage: None,
            failure: None,
            notices: Vec::new(),
            access_log: Vec::new(),
        }
    }

    pub fn stage(&self, stage: Stage) -> Option<&StageRecord> {
        self.stages.iter().find(|s| s.stage == stage)
    }

    pub fn load(out_dir: &Path) -> Result<Self> {
        let path = out_dir.join(MANIFEST);
        let text = read_artifact(&path)?;
        serde_json::from_str(&text).map_err(|e| PipelineError::bad(&path, e))
    }

    fn save(&self, out_dir: &Path) -> Result<()> {
        let text = serde_json::to_string_pretty(self).expect("manifest serializes");
        write_file(&out_dir.join(MANIFEST), text.as_bytes())
    }
}

pub const MANIFEST: &str = "manifest.json";

pub(crate) fn read_artifact(path: &Path) -> Result<String> {
    if !path.exists() {
        return Err(PipelineError::MissingArtifact(path.to_path_buf()));
    }
    std::fs::read_to_string(path).map_err(|e| PipelineError::io(path, e))
}

pub(crate) fn write_file(path: &Path, bytes: &[u8]) -> Result<()> {
    if let Some(dir) = path.parent() {
        std::fs::create_dir_all(dir).map_err(|e| PipelineError::io(dir, e))?;
    }
    std::fs::write(path, bytes).map_err(|e| PipelineError::io(path, e))
}

fn hash_artifact(out_dir: &Path, rel: &str) -> Result<ArtifactRecord> {
    let path = out_dir.join(rel);
    let bytes = std::fs::read(&path).map_err(|e| PipelineError::io(&path, e))?;
    let digest = Sha256::digest(&bytes);
    Ok(ArtifactRecord {
        path: rel.to_string(),
        sha256: digest.iter().map(|b| format!("{b:02x}")).collect(),
        bytes: bytes.len() as u64,
    })
}

/// Read access to a feature frame that refuses rows past `limit` and logs
/// every read.
pub struct FrameAccess<'a> {
    frame: &'a FeatureFrame,
    stage: Stage,
    limit: NaiveDate,
    log: &'a Mutex<Vec<AccessRecord>>,
}

impl<'a> FrameAccess<'a> {
    pub fn new(frame: &'a FeatureFrame, stage: Stage, limit: NaiveDate, log: &'a Mutex<Vec<AccessRecord>>) -> Self {
        Self {
            frame,
            stage,
            limit,
            log,
        }
    }

    pub fn frame(&self) -> &'a FeatureFrame {
        self.frame
    }

    /// Row indices inside `range`.
    pub fn rows(&self, range: &DateRange, purpose: &str) -> Result<Vec<usize>> {
        if range.end > self.limit {
            return Err(PipelineError::Chronology {
                stage: self.stage,
                requested: range.end,
                limit: self.limit,
            });
        }
        let rows = self.frame.rows_in(range);
        let ts = self.frame.timestamps();
        self.log.lock().expect("access log lock").push(AccessRecord {
            stage: self.stage,
            purpose: purpose.to_string(),
            requested: *range,
            first_row: rows.first().map(|&i| ts[i]),
            last_row: rows.last().map(|&i| ts[i]),
            rows: rows.len(),
        });
        Ok(rows)
    }

    /// Frame restricted to `range`.
    pub fn view(&self, range: &DateRange, purpose: &str) -> Result<FeatureFrame> {
        let rows = self.rows(range, purpose)?;
        if rows.is_empty() {
            return Err(PipelineError::EmptyWindow(*range));
        }
        Ok(self.frame.select_rows(&rows))
    }
}

/// Latest date each stage may read feature rows for.
pub fn stage_limit(config: &RunConfig, stage: Stage) -> NaiveDate {
    let w = &config.windows;
    match stage {
        Stage::Cv | Stage::Train => w.level0.end,
        Stage::Stack | Stage::Importance => w.level1.end,
        Stage::Ingest | Stage::Features | Stage::Evaluate | Stage::Report => w.evaluation.end,
    }
}

/// Runs stages against one output directory and keeps the manifest current.
pub struct Pipeline {
    config: RunConfig,
    out_dir: PathBuf,
    manifest: RunManifest,
}

impl Pipeline {
    /// Starts a fresh manifest for `config`.
    pub fn new(config: RunConfig) -> Result<Self> {
        config.validate()?;
        let out_dir = config.out_dir.clone();
        Ok(Self {
            manifest: RunManifest::new(config.clone()),
            config,
            out_dir,
        })
    }

    /// Continues from the manifest in the output directory when its config
    /// matches, otherwise starts fresh.
    pub fn resume(config: RunConfig) -> Result<Self> {
        let mut p = Self::new(config)?;
        if let Ok(m) = RunManifest::load(&p.out_dir) {
            if m.config == p.config {
                p.manifest = m;
                p.manifest.failed_stage = None;
                p.manifest.failure = None;
            }
        }
        Ok(p)
    }

    pub fn config(&self) -> &RunConfig {
        &self.config
    }

    pub fn out_dir(&self) -> &Path {
        &self.out_dir
    }

    pub fn manifest(&self) -> &RunManifest {
        &self.manifest
    }

    pub fn run_all(&mut self) -> std::result::Result<&RunManifest, StageError> {
        self.manifest = RunManifest::new(self.config.clone());
        for stage in Stage::ALL {
            self.run_stage(stage)?;
        }
        Ok(&self.manifest)
    }

    pub fn run_stage(&mut self, stage: Stage) -> std::result::Result<(), StageError> {
        let tag = |error| StageError { stage, error };
        info!("stage {stage}: start");
        let t0 = Instant::now();
        self.manifest.access_log.retain(|a| a.stage != stage);
        self.manifest.notices.retain(|n| !n.starts_with(&format!("[{stage}]")));
        let log = Mutex::new(Vec::new());
        let ctx = stages::Ctx {
            config: &self.config,
            out_dir: &self.out_dir,
            seeds: &self.manifest.seeds,
            log: &log,
            stage,
        };
        let outcome = stages::run(&ctx, stage);
        self.manifest.access_log.extend(log.into_inner().expect("access log lock"));
        let outcome = outcome.and_then(|out| {
            let artifacts = out
                .artifacts
                .iter()
                .map(|rel| hash_artifact(&self.out_dir, rel))
                .collect::<Result<Vec<_>>>()?;
            Ok((artifacts, out.notices))
        });
        match outcome {
            Ok((artifacts, notices)) => {
                self.manifest
                    .notices
                    .extend(notices.into_iter().map(|n| format!("[{stage}] {n}")));
                let rec = StageRecord {
                    stage,
                    artifacts,
                    wall_ms: t0.elapsed().as_millis() as u64,
                };
                match self.manifest.stages.iter_mut().find(|s| s.stage == stage) {
                    Some(s) => *s = rec,
                    None => self.manifest.stages.push(rec),
                }
                self.manifest.save(&self.out_dir).map_err(tag)?;
                info!("stage {stage}: done in {:.2}s", t0.elapsed().as_secs_f64());
                Ok(())
            }
            Err(e) => {
                self.manifest.failed_stage = Some(stage);
                self.manifest.failure = Some(e.to_string());
                // Best effort: the stage error is the one worth reporting.
                let _ = self.manifest.save(&self.out_dir);
                Err(tag(e))
            }
        }
    }
}

/// Runs every stage of `config` in order.
pub fn run_pipeline(config: RunConfig) -> std::result::Result<RunManifest, StageError> {
    let mut p = Pipeline::new(config).map_err(|error| StageError {
        stage: Stage::Ingest,
        error,
    })?;
    p.run_all()?;
    Ok(p.manifest)
}
