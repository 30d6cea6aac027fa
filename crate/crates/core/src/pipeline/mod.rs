//! Config-driven orchestration: ingest, augment, features, train, predict,
//! backtest, report.
//!
//! Every stage reads its inputs from the work directory and writes its outputs
//! there, so any stage can be rerun on its own:
//!
//! ```text
//! workdir/
//!   table.csv                 merged hourly table (extended when augmenting)
//!   augment/                  augmenter.json, fit_report.json, synthetic.csv
//!   features/                 peak_day.csv, peak_hour.csv
//!   models/                   <task>/month_MM.json, grid_<day|hour>.json
//!   predictions/              <year>.csv
//!   backtest/                 summary.txt, years.csv, months.csv, ...
//!   report/                   r_squared.csv, peak_hour_histogram.csv, pca_*.csv
//!   manifest.json
//! ```

mod config;

use std::collections::BTreeMap;
use std::fmt;
use std::io::BufRead;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use log::info;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

pub use config::{ConfigError, GridSection, Grids, Learners, Paths, PipelineConfig};

use crate::analysis::diagnostics;
use crate::augment::{extend_table, fit_augmenter, synthesize, AugmentationConfig};
use crate::backtest::{evaluate, forecast_years, BacktestReport, YearForecast};
use crate::error::{Error, Result};
use crate::features::{
    build_month_hour_rows, build_peak_day_rows, write_peak_day_rows, write_peak_hour_rows, DayTable,
};
use crate::ingest::{align_to_hours, ingest_files, parse_weather_csv, read_table, write_table, HourlyRecord};
use crate::learners::grid::{grid_search, GridResult, LearnerSpec};
use crate::learners::{serial, Matrix};
use crate::par::Execution;
use crate::peak_models::{fit_monthly_models, training_data, write_predictions, LearnerConfig, ModelSet, Task};

pub const MANIFEST: &str = "manifest.json";
pub const TABLE: &str = "table.csv";

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Stage {
    Ingest,
    Augment,
    Features,
    Train,
    Predict,
    Backtest,
    Report,
}

impl Stage {
    pub const ALL: [Stage; 7] = [
        Stage::Ingest,
        Stage::Augment,
        Stage::Features,
        Stage::Train,
        Stage::Predict,
        Stage::Backtest,
        Stage::Report,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Stage::Ingest => "ingest",
            Stage::Augment => "augment",
            Stage::Features => "features",
            Stage::Train => "train",
            Stage::Predict => "predict",
            Stage::Backtest => "backtest",
            Stage::Report => "report",
        }
    }

    /// Output owned by the stage, relative to the work directory.
    fn output(self) -> &'static str {
        match self {
            Stage::Ingest => TABLE,
            Stage::Augment => "augment",
            Stage::Features => "features",
            Stage::Train => "models",
            Stage::Predict => "predictions",
            Stage::Backtest => "backtest",
            Stage::Report => "report",
        }
    }
}

impl fmt::Display for Stage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Stage {
    type Err = ConfigError;
    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        Stage::ALL.into_iter().find(|st| st.name() == s).ok_or_else(|| ConfigError::Invalid {
            field: "stage",
            reason: format!("has unknown value {s:?}"),
        })
    }
}

/// First 8 bytes (little endian) of `sha256(master_le || name)`.
pub fn stage_seed(master: u64, name: &str) -> u64 {
    let mut h = Sha256::new();
    h.update(master.to_le_bytes());
    h.update(name.as_bytes());
    let digest = h.finalize();
    u64::from_le_bytes(digest[..8].try_into().expect("8 bytes"))
}

pub fn sha256_file(path: impl AsRef<Path>) -> Result<String> {
    let path = path.as_ref();
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let mut reader = std::io::BufReader::with_capacity(1 << 16, file);
    let mut h = Sha256::new();
    loop {
        let chunk = reader.fill_buf().map_err(|e| Error::io(path, e))?;
        if chunk.is_empty() {
            break;
        }
        h.update(chunk);
        let n = chunk.len();
        reader.consume(n);
    }
    Ok(hex::encode(h.finalize()))
}

fn write_file(path: &Path, body: impl AsRef<[u8]>) -> Result<()> {
    if let Some(dir) = path.parent() {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    std::fs::write(path, body).map_err(|e| Error::io(path, e))
}

fn fresh_dir(dir: &Path) -> Result<()> {
    if dir.exists() {
        std::fs::remove_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))
}

/// Writes `peak_day.csv` and `peak_hour.csv` covering every month in the table.
pub fn write_features(table: &DayTable, dir: impl AsRef<Path>) -> Result<()> {
    let dir = dir.as_ref();
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let mut day_rows = Vec::new();
    let mut hour_rows = Vec::new();
    for month in 1..=12 {
        day_rows.extend(build_peak_day_rows(table, month)?);
        hour_rows.extend(build_month_hour_rows(table, month)?);
    }
    day_rows.sort_by_key(|r| r.date);
    hour_rows.sort_by_key(|r| (r.date, r.hour));
    let path = dir.join("peak_day.csv");
    let file = std::fs::File::create(&path).map_err(|e| Error::io(&path, e))?;
    write_peak_day_rows(std::io::BufWriter::new(file), &day_rows)?;
    let path = dir.join("peak_hour.csv");
    let file = std::fs::File::create(&path).map_err(|e| Error::io(&path, e))?;
    write_peak_hour_rows(std::io::BufWriter::new(file), &hour_rows)?;
    Ok(())
}

/// Pools the training rows of `months` and runs the size/depth grid.
pub fn tune_learner(
    table: &DayTable,
    task: Task,
    years: &[i32],
    learner: &LearnerConfig,
    grid: &GridSection,
    seed: u64,
    exec: Execution,
) -> Result<(LearnerConfig, GridResult)> {
    let spec = match learner {
        LearnerConfig::Forest(p) => LearnerSpec::Forest(crate::learners::ForestParams { seed, execution: exec, ..p.clone() }),
        LearnerConfig::Gbm(p) => LearnerSpec::Gbm(crate::learners::GbmParams { seed, ..p.clone() }),
        LearnerConfig::Logit => {
            return Err(ConfigError::Invalid {
                field: "grid",
                reason: "cannot tune a logit learner".into(),
            }
            .into())
        }
    };
    let mut rows: Vec<Vec<f64>> = Vec::new();
    let mut y = Vec::new();
    for &month in &grid.months {
        let (x, labels) = training_data(table, task, month, years)?;
        rows.extend(x.iter_rows().map(<[f64]>::to_vec));
        y.extend(labels);
    }
    let x = Matrix::from_rows(&rows)?;
    let result = grid_search(&spec, &x, &y, &grid.grid(), grid.k_folds)?;
    let tuned = match spec.with(result.best_size, result.best_depth) {
        LearnerSpec::Forest(p) => LearnerConfig::Forest(p),
        LearnerSpec::Gbm(p) => LearnerConfig::Gbm(p),
    };
    Ok((tuned, result))
}

/// Writes `<dir>/<year>.csv` with the dispatch decisions at `threshold`.
pub fn write_year_predictions(forecasts: &[YearForecast], threshold: f64, dir: impl AsRef<Path>) -> Result<()> {
    let dir = dir.as_ref();
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    for yf in forecasts {
        let days: Vec<_> = yf
            .months
            .iter()
            .flatten()
            .map(|d| {
                let mut d = d.clone();
                d.day = d.day.with_threshold(threshold);
                d
            })
            .collect();
        let path = dir.join(format!("{}.csv", yf.year));
        let mut buf = Vec::new();
        write_predictions(&mut buf, &days)?;
        write_file(&path, buf)?;
    }
    Ok(())
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub tool: String,
    pub version: String,
    pub model_format_version: u64,
    pub config_sha256: String,
    pub seed: u64,
    pub stage_seeds: BTreeMap<String, u64>,
    pub inputs: BTreeMap<String, String>,
    /// Relative path (with `/` separators) to sha256 of every artifact.
    pub artifacts: BTreeMap<String, String>,
}

/// Drives the stages of one configuration.
pub struct Pipeline {
    pub config: PipelineConfig,
}

impl Pipeline {
    pub fn new(config: PipelineConfig) -> Self {
        Pipeline { config }
    }

    pub fn from_path(path: impl AsRef<Path>) -> Result<Self> {
        Ok(Pipeline::new(PipelineConfig::load(path)?))
    }

    pub fn workdir(&self) -> &Path {
        &self.config.paths.workdir
    }

    fn path(&self, rel: &str) -> PathBuf {
        self.workdir().join(rel)
    }

    fn exec(&self) -> Execution {
        self.config.execution
    }

    pub fn seed_for(&self, stage: Stage) -> u64 {
        stage_seed(self.config.seed, stage.name())
    }

    fn table(&self) -> Result<Vec<HourlyRecord>> {
        read_table(self.path(TABLE))
    }

    fn models(&self) -> Result<(ModelSet, ModelSet)> {
        let dir = self.path("models");
        Ok((ModelSet::load(&dir, self.config.kind.task())?, ModelSet::load(&dir, Task::Hour)?))
    }

    /// Runs every stage in order and writes the manifest.
    pub fn run(&self) -> Result<Manifest> {
        std::fs::create_dir_all(self.workdir()).map_err(|e| Error::io(self.workdir(), e))?;
        for stage in Stage::ALL {
            self.run_stage(stage)?;
        }
        self.write_manifest()
    }

    pub fn run_stage(&self, stage: Stage) -> Result<()> {
        info!("stage {stage}");
        let out = self.path(stage.output());
        if stage != Stage::Ingest {
            fresh_dir(&out).map_err(|e| e.in_stage(stage.name()))?;
        }
        let result = match stage {
            Stage::Ingest => self.ingest(),
            Stage::Augment => self.augment(&out),
            Stage::Features => self.features(&out),
            Stage::Train => self.train(&out),
            Stage::Predict => self.predict(&out),
            Stage::Backtest => self.backtest(&out).map(|_| ()),
            Stage::Report => self.report(&out),
        };
        result.map_err(|e| e.in_stage(stage.name()))
    }

    fn ingest(&self) -> Result<()> {
        let records = ingest_files(&self.config.paths.load, &self.config.paths.weather)?;
        std::fs::create_dir_all(self.workdir()).map_err(|e| Error::io(self.workdir(), e))?;
        write_table(self.path(TABLE), &records)
    }

    fn augment(&self, out: &Path) -> Result<()> {
        let Some(aug) = &self.config.augmentation else {
            return Ok(());
        };
        let cfg = AugmentationConfig {
            seed: self.seed_for(Stage::Augment),
            ..aug.clone()
        };
        // Re-ingest so a rerun never augments an already extended table.
        let recorded = ingest_files(&self.config.paths.load, &self.config.paths.weather)?;
        let weather = align_to_hours(&parse_weather_csv(&self.config.paths.weather)?)?;
        let augmenter = fit_augmenter(&recorded, &cfg)?;
        let synthetic = synthesize(&augmenter, &weather, &cfg, self.exec())?;
        write_file(&out.join("augmenter.json"), serial::to_document(&augmenter)?)?;
        write_file(&out.join("fit_report.json"), serde_json::to_string_pretty(&augmenter.reports)?)?;
        write_table(out.join("synthetic.csv"), &synthetic)?;
        write_table(self.path(TABLE), &extend_table(&recorded, &synthetic))
    }

    fn features(&self, out: &Path) -> Result<()> {
        write_features(&DayTable::new(&self.table()?), out)
    }

    fn train(&self, out: &Path) -> Result<()> {
        let table = DayTable::new(&self.table()?);
        let seed = self.seed_for(Stage::Train);
        let years = &self.config.training_years;
        let tasks = [
            (self.config.kind.task(), &self.config.learners.day, &self.config.grid.day, "day"),
            (Task::Hour, &self.config.learners.hour, &self.config.grid.hour, "hour"),
        ];
        for (task, learner, grid, label) in tasks {
            let learner = match grid {
                Some(g) => {
                    let (tuned, result) = tune_learner(&table, task, years, learner, g, seed, self.exec())?;
                    write_file(&out.join(format!("grid_{label}.json")), serde_json::to_string_pretty(&result)?)?;
                    tuned
                }
                None => learner.clone(),
            };
            fit_monthly_models(&table, task, years, &learner, seed, self.exec())?.save(out)?;
        }
        Ok(())
    }

    fn forecasts(&self) -> Result<Vec<YearForecast>> {
        let table = DayTable::new(&self.table()?);
        let (day, hour) = self.models()?;
        forecast_years(&day, &hour, &table, &self.config.testing_years, self.config.kind, self.exec())
    }

    fn predict(&self, out: &Path) -> Result<()> {
        write_year_predictions(&self.forecasts()?, self.config.threshold, out)
    }

    pub fn backtest(&self, out: &Path) -> Result<BacktestReport> {
        let report = evaluate(&self.forecasts()?, &self.config.backtest())?;
        report.save(out)?;
        Ok(report)
    }

    fn report(&self, out: &Path) -> Result<()> {
        diagnostics(&DayTable::new(&self.table()?), self.exec())?.save(out)
    }

    pub fn manifest(&self) -> Result<Manifest> {
        let config_json = serde_json::to_string(&hashed_config(&self.config))?;
        let mut artifacts = BTreeMap::new();
        for stage in Stage::ALL {
            let p = self.path(stage.output());
            if p.exists() {
                collect_hashes(self.workdir(), &p, &mut artifacts)?;
            }
        }
        Ok(Manifest {
            tool: "peakcast".into(),
            version: env!("CARGO_PKG_VERSION").into(),
            model_format_version: serial::VERSION,
            config_sha256: hex::encode(Sha256::digest(config_json.as_bytes())),
            seed: self.config.seed,
            stage_seeds: Stage::ALL.iter().map(|s| (s.name().to_string(), self.seed_for(*s))).collect(),
            inputs: BTreeMap::from([
                ("load".to_string(), sha256_file(&self.config.paths.load)?),
                ("weather".to_string(), sha256_file(&self.config.paths.weather)?),
            ]),
            artifacts,
        })
    }

    pub fn write_manifest(&self) -> Result<Manifest> {
        let manifest = self.manifest()?;
        write_file(&self.path(MANIFEST), serde_json::to_string_pretty(&manifest)? + "\n")?;
        Ok(manifest)
    }
}

/// Config as hashed into the manifest. Input and output locations are
/// reduced to file names so relocating a run keeps the hash; the execution
/// mode is dropped because it never changes results.
fn hashed_config(c: &PipelineConfig) -> PipelineConfig {
    let name = |p: &Path| PathBuf::from(p.file_name().unwrap_or_default());
    PipelineConfig {
        paths: Paths {
            load: name(&c.paths.load),
            weather: name(&c.paths.weather),
            workdir: PathBuf::new(),
        },
        execution: Execution::default(),
        ..c.clone()
    }
}

fn collect_hashes(root: &Path, path: &Path, out: &mut BTreeMap<String, String>) -> Result<()> {
    if path.is_dir() {
        let mut entries: Vec<PathBuf> = std::fs::read_dir(path)
            .map_err(|e| Error::io(path, e))?
            .map(|e| e.map(|e| e.path()).map_err(|err| Error::io(path, err)))
            .collect::<Result<_>>()?;
        entries.sort();
        for e in entries {
            collect_hashes(root, &e, out)?;
        }
    } else {
        let rel = path.strip_prefix(root).unwrap_or(path);
        let key = rel.components().map(|c| c.as_os_str().to_string_lossy()).collect::<Vec<_>>().join("/");
        out.insert(key, sha256_file(path)?);
    }
    Ok(())
}

/// Loads the config at `path`, runs every stage, and returns the manifest.
pub fn run_pipeline(path: impl AsRef<Path>) -> Result<Manifest> {
    Pipeline::from_path(path)?.run()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn stage_seeds_are_stable_and_distinct() {
        let a: Vec<u64> = Stage::ALL.iter().map(|s| stage_seed(42, s.name())).collect();
        let b: Vec<u64> = Stage::ALL.iter().map(|s| stage_seed(42, s.name())).collect();
        assert_eq!(a, b);
        let mut d = a.clone();
        d.sort_unstable();
        d.dedup();
        assert_eq!(d.len(), a.len());
        assert_ne!(stage_seed(42, "train"), stage_seed(43, "train"));
    }

    #[test]
    fn stage_names_round_trip() {
        for s in Stage::ALL {
            assert_eq!(s.name().parse::<Stage>().unwrap(), s);
        }
        assert!("fit".parse::<Stage>().is_err());
    }
}
