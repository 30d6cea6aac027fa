//! TOML pipeline configuration.
//!
//! ```toml
//! seed = 42
//! training_years = [2000, 2002, 2003]
//! testing_years = [2001]
//! threshold = 0.03
//! kind = "indirect"
//!
//! [paths]
//! load = "load.csv"
//! weather = "weather.csv"
//! workdir = "out"
//!
//! [learners.day]
//! kind = "forest"
//! n_tree = 300
//! min_leaf = 5
//!
//! [learners.hour]
//! kind = "gbm"
//! n_rounds = 100
//!
//! [grid.day]
//! sizes = [100, 300]
//! depths = [10, 20]
//! ```
//!
//! Relative paths are resolved against the directory of the config file.
//! Unknown keys are rejected at every level.

use std::collections::BTreeSet;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::augment::AugmentationConfig;
use crate::backtest::{BacktestConfig, DEFAULT_THRESHOLD, MAX_CYCLES_PER_YEAR};
use crate::learners::grid::Grid;
use crate::par::Execution;
use crate::peak_models::{LearnerConfig, PeakDayKind};

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read config {path}: {message}")]
    Read { path: String, message: String },
    #[error("invalid config: {0}")]
    Parse(String),
    #[error("invalid config: `{field}` points to {path}, which does not exist")]
    MissingPath { field: &'static str, path: String },
    #[error("invalid config: year {year} appears in both `training_years` and `testing_years`", year = years_list(.years))]
    Overlap { years: Vec<i32> },
    #[error("invalid config: `{field}` {reason}")]
    Invalid { field: &'static str, reason: String },
}

fn years_list(years: &[i32]) -> String {
    years.iter().map(|y| y.to_string()).collect::<Vec<_>>().join(", ")
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Paths {
    pub load: PathBuf,
    pub weather: PathBuf,
    pub workdir: PathBuf,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Learners {
    pub day: LearnerConfig,
    pub hour: LearnerConfig,
}

impl Default for Learners {
    fn default() -> Self {
        Learners {
            day: LearnerConfig::Forest(Default::default()),
            hour: LearnerConfig::Forest(Default::default()),
        }
    }
}

impl Learners {
    /// Reads a file holding `[day]` and `[hour]` learner tables.
    pub fn load(path: impl AsRef<Path>) -> Result<Self, ConfigError> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| ConfigError::Read {
            path: path.display().to_string(),
            message: e.to_string(),
        })?;
        toml::from_str(&text).map_err(|e| ConfigError::Parse(e.to_string().trim_end().to_string()))
    }
}

/// Cross-validated size/depth search for one task.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridSection {
    #[serde(default = "default_sizes")]
    pub sizes: Vec<usize>,
    #[serde(default = "default_depths")]
    pub depths: Vec<usize>,
    #[serde(default = "default_folds")]
    pub k_folds: usize,
    /// Months whose training rows are pooled for the search.
    #[serde(default = "all_months")]
    pub months: Vec<u32>,
}

fn default_sizes() -> Vec<usize> {
    Grid::default().sizes
}

fn default_depths() -> Vec<usize> {
    Grid::default().depths
}

fn default_folds() -> usize {
    5
}

fn all_months() -> Vec<u32> {
    (1..=12).collect()
}

impl GridSection {
    pub fn grid(&self) -> Grid {
        Grid {
            sizes: self.sizes.clone(),
            depths: self.depths.clone(),
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Grids {
    pub day: Option<GridSection>,
    pub hour: Option<GridSection>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PipelineConfig {
    pub seed: u64,
    pub paths: Paths,
    pub training_years: Vec<i32>,
    pub testing_years: Vec<i32>,
    #[serde(default = "default_threshold")]
    pub threshold: f64,
    #[serde(default)]
    pub kind: PeakDayKind,
    #[serde(default = "default_max_cycles")]
    pub max_cycles: usize,
    #[serde(default)]
    pub execution: Execution,
    /// Synthetic history; its `seed` is replaced by the derived stage seed.
    #[serde(default)]
    pub augmentation: Option<AugmentationConfig>,
    #[serde(default)]
    pub learners: Learners,
    #[serde(default)]
    pub grid: Grids,
}

fn default_threshold() -> f64 {
    DEFAULT_THRESHOLD
}

fn default_max_cycles() -> usize {
    MAX_CYCLES_PER_YEAR
}

impl PipelineConfig {
    /// Parses and validates; relative paths are resolved against `base`.
    pub fn from_toml(text: &str, base: &Path) -> Result<Self, ConfigError> {
        let mut cfg: PipelineConfig = toml::from_str(text).map_err(|e| ConfigError::Parse(e.to_string().trim_end().to_string()))?;
        for p in [&mut cfg.paths.load, &mut cfg.paths.weather, &mut cfg.paths.workdir] {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, ConfigError> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| ConfigError::Read {
            path: path.display().to_string(),
            message: e.to_string(),
        })?;
        let base = path.parent().unwrap_or(Path::new("."));
        Self::from_toml(&text, base)
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        for (field, p) in [("paths.load", &self.paths.load), ("paths.weather", &self.paths.weather)] {
            if !p.is_file() {
                return Err(ConfigError::MissingPath {
                    field,
                    path: p.display().to_string(),
                });
            }
        }
        let invalid = |field, reason: &str| ConfigError::Invalid { field, reason: reason.to_string() };
        for (field, years) in [("training_years", &self.training_years), ("testing_years", &self.testing_years)] {
            if years.is_empty() {
                return Err(invalid(field, "must list at least one year"));
            }
            if years.iter().collect::<BTreeSet<_>>().len() != years.len() {
                return Err(invalid(field, "contains a duplicate year"));
            }
        }
        let train: BTreeSet<i32> = self.training_years.iter().copied().collect();
        let overlap: Vec<i32> = self.testing_years.iter().copied().filter(|y| train.contains(y)).collect();
        if !overlap.is_empty() {
            let mut years = overlap;
            years.sort_unstable();
            return Err(ConfigError::Overlap { years });
        }
        if !(0.0..=1.0).contains(&self.threshold) {
            return Err(invalid("threshold", "must lie in [0, 1]"));
        }
        for (field, g) in [("grid.day", &self.grid.day), ("grid.hour", &self.grid.hour)] {
            let Some(g) = g else { continue };
            if g.sizes.is_empty() || g.depths.is_empty() {
                return Err(invalid(field, "needs at least one size and one depth"));
            }
            if g.k_folds < 2 {
                return Err(invalid(field, "needs k_folds of at least 2"));
            }
            if g.months.is_empty() || g.months.iter().any(|m| !(1..=12).contains(m)) {
                return Err(invalid(field, "months must be a non-empty subset of 1..=12"));
            }
            let learner = if field == "grid.day" { &self.learners.day } else { &self.learners.hour };
            if matches!(learner, LearnerConfig::Logit) {
                return Err(invalid(field, "cannot tune a logit learner"));
            }
        }
        Ok(())
    }

    pub fn backtest(&self) -> BacktestConfig {
        BacktestConfig {
            testing_years: self.testing_years.clone(),
            threshold: self.threshold,
            kind: self.kind,
            max_cycles: self.max_cycles,
        }
    }
}
