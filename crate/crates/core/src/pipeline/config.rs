use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};

use super::{PipelineError, Result};
use crate::classifiers::{Family, HyperparamSpace, ParamRange};
use crate::indicators::{catalog_spec, default_catalog, IndicatorSpec};
use crate::stacking::{MetaConfig, StackMode};
use crate::validation::{study_fold_boundaries, FoldBoundary};
use crate::DateRange;

/// One exchange's OHLCV file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InputFile {
    pub exchange: String,
    pub path: PathBuf,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DataConfig {
    pub inputs: Vec<InputFile>,
    /// Date-keyed extra feature columns (e.g. sentiment), passed through.
    pub external: Vec<PathBuf>,
    pub impute_alpha: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Windows {
    pub level0: DateRange,
    pub level1: DateRange,
    pub evaluation: DateRange,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureConfig {
    pub indicators: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SearchConfig {
    pub families: Vec<Family>,
    pub n_iter: usize,
    pub purge_days: u64,
    pub min_train_rows: usize,
    pub folds: Vec<FoldBoundary>,
    /// Search ranges keyed by family name.
    pub spaces: BTreeMap<String, BTreeMap<String, ParamRange>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StackConfig {
    pub mode: StackMode,
    pub hidden_width: usize,
    pub max_epochs: usize,
    pub step_size: f64,
    pub plateau: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ImportanceConfig {
    pub grid_size: usize,
}

/// Everything a run needs. Every key is required in the file; there are no
/// hidden defaults.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub seed: u64,
    pub out_dir: PathBuf,
    pub data: DataConfig,
    pub windows: Windows,
    pub features: FeatureConfig,
    pub search: SearchConfig,
    pub stack: StackConfig,
    pub importance: ImportanceConfig,
}

fn ymd(y: i32, m: u32, d: u32) -> NaiveDate {
    NaiveDate::from_ymd_opt(y, m, d).expect("valid date")
}

impl RunConfig {
    /// The published experiment: Aug 2017 to Mar 2018 for level 0, Apr to
    /// May 2018 for the meta-learner, Jun to Jul 2018 for evaluation.
    pub fn study_default(inputs: Vec<InputFile>) -> Self {
        let spaces = Family::ALL
            .iter()
            .map(|&f| (f.as_str().to_string(), HyperparamSpace::default_for(f).ranges))
            .collect();
        let meta = MetaConfig::default();
        Self {
            seed: 42,
            out_dir: PathBuf::from("out"),
            data: DataConfig {
                inputs,
                external: Vec::new(),
                impute_alpha: 2.0 / 11.0,
            },
            windows: Windows {
                level0: DateRange::new(ymd(2017, 8, 1), ymd(2018, 3, 31)),
                level1: DateRange::new(ymd(2018, 4, 1), ymd(2018, 5, 31)),
                evaluation: DateRange::new(ymd(2018, 6, 1), ymd(2018, 7, 31)),
            },
            features: FeatureConfig {
                indicators: default_catalog().into_iter().map(|s| s.name).collect(),
            },
            search: SearchConfig {
                families: Family::ALL.to_vec(),
                n_iter: 100,
                purge_days: 7,
                min_train_rows: 20,
                folds: study_fold_boundaries(),
                spaces,
            },
            stack: StackConfig {
                mode: StackMode::Hard,
                hidden_width: meta.hidden_width,
                max_epochs: meta.max_epochs,
                step_size: meta.step_size,
                plateau: meta.plateau,
            },
            importance: ImportanceConfig {
                grid_size: crate::importance::DEFAULT_GRID_SIZE,
            },
        }
    }

    pub fn from_toml(s: &str) -> Result<Self> {
        let c: RunConfig = toml::from_str(s).map_err(|e| PipelineError::Config(e.to_string()))?;
        c.validate()?;
        Ok(c)
    }

    /// Reads and validates a config; relative input paths resolve against
    /// the config file's directory.
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| PipelineError::io(path, e))?;
        let mut c = Self::from_toml(&text)?;
        if let Some(base) = path.parent() {
            c.resolve_paths(base);
        }
        Ok(c)
    }

    pub fn resolve_paths(&mut self, base: &Path) {
        for i in &mut self.data.inputs {
            if i.path.is_relative() {
                i.path = base.join(&i.path);
            }
        }
        for p in &mut self.data.external {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        }
        if self.out_dir.is_relative() {
            self.out_dir = base.join(&self.out_dir);
        }
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| PipelineError::Config(e.to_string()))
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(PipelineError::Config(m));
        let w = &self.windows;
        for (name, r) in [("level0", w.level0), ("level1", w.level1), ("evaluation", w.evaluation)] {
            if r.is_empty() {
                return bad(format!("window `{name}` is empty"));
            }
        }
        if w.level0.end >= w.level1.start || w.level1.end >= w.evaluation.start {
            return bad("windows must be ordered level0 < level1 < evaluation without overlap".into());
        }
        if self.data.inputs.is_empty() {
            return bad("no input files".into());
        }
        if !(self.data.impute_alpha > 0.0 && self.data.impute_alpha <= 1.0) {
            return bad(format!("impute_alpha {} outside (0, 1]", self.data.impute_alpha));
        }
        if self.features.indicators.is_empty() {
            return bad("no indicators selected".into());
        }
        self.indicator_specs()?;
        let s = &self.search;
        if s.families.is_empty() {
            return bad("no model families enabled".into());
        }
        for (i, f) in s.families.iter().enumerate() {
            if s.families[..i].contains(f) {
                return bad(format!("family `{f}` listed twice"));
            }
        }
        if s.n_iter == 0 {
            return bad("search.n_iter must be at least 1".into());
        }
        if s.folds.is_empty() {
            return bad("no folds".into());
        }
        for (k, f) in s.folds.iter().enumerate() {
            if f.train.start < w.level0.start || f.test.end > w.level0.end {
                return bad(format!("fold {k} reaches outside the level0 window"));
            }
        }
        for f in &s.families {
            self.space(*f)?;
        }
        for key in s.spaces.keys() {
            key.parse::<Family>().map_err(|_| PipelineError::Config(format!("unknown family `{key}` in search.spaces")))?;
        }
        if self.stack.step_size <= 0.0 || !self.stack.step_size.is_finite() {
            return bad("stack.step_size must be positive".into());
        }
        if self.importance.grid_size < 2 {
            return bad("importance.grid_size must be at least 2".into());
        }
        Ok(())
    }

    pub fn indicator_specs(&self) -> Result<Vec<IndicatorSpec>> {
        self.features
            .indicators
            .iter()
            .map(|n| catalog_spec(n).ok_or_else(|| PipelineError::Config(format!("unknown indicator `{n}`"))))
            .collect()
    }

    /// The search space of `family`; a missing entry means no tunable
    /// parameters.
    pub fn space(&self, family: Family) -> Result<HyperparamSpace> {
        let space = HyperparamSpace {
            family,
            ranges: self.search.spaces.get(family.as_str()).cloned().unwrap_or_default(),
        };
        space
            .validate()
            .map_err(|e| PipelineError::Config(format!("search space `{family}`: {e}")))?;
        Ok(space)
    }

    pub fn meta_config(&self, seed: u64) -> MetaConfig {
        MetaConfig {
            hidden_width: self.stack.hidden_width,
            max_epochs: self.stack.max_epochs,
            step_size: self.stack.step_size,
            plateau: self.stack.plateau,
            seed,
        }
    }
}
