//! Synthetic hourly load from weather.
//!
//! Two independent regressors map weather and calendar predictors to the
//! actual load and to the day-ahead forecast. Once fitted on years with
//! recorded load they generate both series for years that only have weather,
//! extending the training history of the peak classifiers.

use std::fmt;
use std::str::FromStr;

use chrono::{Datelike, Duration, NaiveDate, NaiveDateTime, Timelike};
use log::{info, warn};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::ingest::{self, HourlyRecord, HourlyWeather, IngestError, WeatherPoint};
use crate::learners::{derive_seed, fit_mlp, LearnError, Matrix, MlpConfig, MlpModel};
use crate::par::{self, Execution};

/// Synthetic loads are floored here (MWh).
pub const MIN_LOAD_MWH: f64 = 1.0;
pub const N_PREDICTORS: usize = 10;
pub const PREDICTOR_NAMES: [&str; N_PREDICTORS] = [
    "hour_sin", "hour_cos", "T", "T_m_1", "T_m_2", "T_m_3", "humidity", "dow_sin", "dow_cos", "weekendIdx",
];

#[derive(Debug, Error)]
pub enum AugmentError {
    #[error(transparent)]
    Learn(#[from] LearnError),
    #[error(transparent)]
    Ingest(#[from] IngestError),
    #[error("weather does not cover {start} .. {end} (gap longer than 3 hours)")]
    CoverageGap { start: NaiveDateTime, end: NaiveDateTime },
    #[error("table has no records in the training range {0}")]
    EmptyTrainingRange(DateRange),
    #[error("training range {train} is not fully covered by the table: {missing} hours missing")]
    IncompleteTrainingRange { train: DateRange, missing: usize },
    #[error("generation range {gen} overlaps recorded load in {train}; set allow_overlap to validate in-sample")]
    Overlap { gen: DateRange, train: DateRange },
    #[error("bad date range {0:?}: expected YYYY..YYYY or YYYY-MM-DD..YYYY-MM-DD")]
    BadRange(String),
}

/// Inclusive range of calendar dates.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub struct DateRange {
    pub start: NaiveDate,
    pub end: NaiveDate,
}

impl DateRange {
    pub fn years(first: i32, last: i32) -> Option<Self> {
        Some(DateRange {
            start: NaiveDate::from_ymd_opt(first, 1, 1)?,
            end: NaiveDate::from_ymd_opt(last, 12, 31)?,
        })
    }

    pub fn contains(&self, date: NaiveDate) -> bool {
        self.start <= date && date <= self.end
    }

    pub fn overlaps(&self, other: &DateRange) -> bool {
        self.start <= other.end && other.start <= self.end
    }

    /// Every exact hour in the range.
    pub fn hours(&self) -> impl Iterator<Item = NaiveDateTime> {
        let first = self.start.and_hms_opt(0, 0, 0).expect("midnight");
        let n = (self.end - self.start).num_days() + 1;
        (0..n * 24).map(move |h| first + Duration::hours(h))
    }

    pub fn n_hours(&self) -> usize {
        ((self.end - self.start).num_days() as usize + 1) * 24
    }
}

impl fmt::Display for DateRange {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}..{}", self.start, self.end)
    }
}

impl FromStr for DateRange {
    type Err = AugmentError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let bad = || AugmentError::BadRange(s.to_string());
        let (a, b) = s.split_once("..").ok_or_else(bad)?;
        let (a, b) = (a.trim(), b.trim());
        let range = match (a.parse::<i32>(), b.parse::<i32>()) {
            (Ok(y0), Ok(y1)) => DateRange::years(y0, y1).ok_or_else(bad)?,
            _ => DateRange {
                start: NaiveDate::parse_from_str(a, "%Y-%m-%d").map_err(|_| bad())?,
                end: NaiveDate::parse_from_str(b, "%Y-%m-%d").map_err(|_| bad())?,
            },
        };
        if range.end < range.start {
            return Err(bad());
        }
        Ok(range)
    }
}

impl TryFrom<String> for DateRange {
    type Error = AugmentError;
    fn try_from(s: String) -> Result<Self, Self::Error> {
        s.parse()
    }
}

impl From<DateRange> for String {
    fn from(r: DateRange) -> String {
        r.to_string()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AugmentTarget {
    Actual,
    DayAheadForecast,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AugmentationConfig {
    pub train_range: DateRange,
    pub generation_range: DateRange,
    /// Permit generating over hours that have recorded load (in-sample validation).
    #[serde(default)]
    pub allow_overlap: bool,
    #[serde(default = "default_mlp")]
    pub mlp: MlpConfig,
    /// Trailing days of the training range held out for validation metrics.
    #[serde(default = "default_validation_days")]
    pub validation_days: u32,
    /// Add residuals resampled from the same month and hour of the training fit.
    #[serde(default)]
    pub residual_bootstrap: bool,
    #[serde(default)]
    pub seed: u64,
}

fn default_mlp() -> MlpConfig {
    MlpConfig {
        epochs: 60,
        batch_size: 64,
        learning_rate: 2e-3,
        ..MlpConfig::default()
    }
}

fn default_validation_days() -> u32 {
    7
}

impl AugmentationConfig {
    pub fn new(train_range: DateRange, generation_range: DateRange) -> Self {
        AugmentationConfig {
            train_range,
            generation_range,
            allow_overlap: false,
            mlp: default_mlp(),
            validation_days: default_validation_days(),
            residual_bootstrap: false,
            seed: 0,
        }
    }
}

/// Fit quality of one target, in MWh.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FitReport {
    pub target: AugmentTarget,
    pub n_train: usize,
    pub n_validation: usize,
    pub train_rmse: f64,
    pub train_mape: f64,
    pub validation_rmse: Option<f64>,
    pub validation_mape: Option<f64>,
}

/// Residuals of the training fit bucketed by `(month - 1) * 24 + hour`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ResidualPool {
    pub buckets: Vec<Vec<f64>>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Augmenter {
    pub actual: MlpModel,
    pub forecast: MlpModel,
    pub reports: Vec<FitReport>,
    pub actual_residuals: ResidualPool,
    pub forecast_residuals: ResidualPool,
}

/// Predictor vector for hour `ts`; `temp_at` returns the temperature of any hour if known.
/// Lagged temperatures missing from the source fall back to the next more recent one.
pub fn predictors(ts: NaiveDateTime, humidity: f64, temp_at: impl Fn(NaiveDateTime) -> Option<f64>) -> [f64; N_PREDICTORS] {
    use std::f64::consts::TAU;
    let t0 = temp_at(ts).unwrap_or(f64::NAN);
    let mut lags = [t0; 3];
    let mut last = t0;
    for (k, lag) in lags.iter_mut().enumerate() {
        last = temp_at(ts - Duration::hours(k as i64 + 1)).unwrap_or(last);
        *lag = last;
    }
    let hour = ts.hour() as f64 * TAU / 24.0;
    let dow = ts.weekday().num_days_from_monday() as f64 * TAU / 7.0;
    [
        hour.sin(),
        hour.cos(),
        t0,
        lags[0],
        lags[1],
        lags[2],
        humidity,
        dow.sin(),
        dow.cos(),
        ingest::weekend_flag(ts) as f64,
    ]
}

fn table_predictors(records: &[HourlyRecord]) -> Vec<[f64; N_PREDICTORS]> {
    let lookup = |ts: NaiveDateTime| {
        records
            .binary_search_by_key(&ts, |r| r.timestamp)
            .ok()
            .map(|i| records[i].temp)
    };
    records.iter().map(|r| predictors(r.timestamp, r.humidity, lookup)).collect()
}

fn bucket(ts: NaiveDateTime) -> usize {
    (ts.month0() * 24 + ts.hour()) as usize
}

fn rmse_mape(pred: &[f64], actual: &[f64]) -> (f64, f64) {
    let n = actual.len().max(1) as f64;
    let mse = pred.iter().zip(actual).map(|(p, a)| (p - a).powi(2)).sum::<f64>() / n;
    let mape = pred.iter().zip(actual).map(|(p, a)| ((p - a) / a).abs()).sum::<f64>() / n * 100.0;
    (mse.sqrt(), mape)
}

/// Fits the actual-load and forecast-load regressors on the training range.
///
/// The last `validation_days` of the range are held out and only scored.
pub fn fit_augmenter(table: &[HourlyRecord], cfg: &AugmentationConfig) -> Result<Augmenter, AugmentError> {
    let records: Vec<HourlyRecord> = table
        .iter()
        .filter(|r| cfg.train_range.contains(r.date()))
        .copied()
        .collect();
    if records.is_empty() {
        return Err(AugmentError::EmptyTrainingRange(cfg.train_range));
    }
    if records.windows(2).any(|w| w[0].timestamp >= w[1].timestamp) {
        return Err(IngestError::Unsorted.into());
    }
    // records are distinct exact hours inside the range, so the count decides coverage
    if records.len() != cfg.train_range.n_hours() {
        let missing = cfg.train_range.n_hours() - records.len();
        return Err(AugmentError::IncompleteTrainingRange { train: cfg.train_range, missing });
    }

    let cutoff = cfg.train_range.end - Duration::days(cfg.validation_days as i64);
    let split = if cfg.validation_days > 0 && cutoff >= cfg.train_range.start {
        records.partition_point(|r| r.date() <= cutoff)
    } else {
        records.len()
    };
    let x_all = table_predictors(&records);
    let x_train = Matrix::from_rows(&x_all[..split])?;
    let x_val = Matrix::from_rows(&x_all[split..])?;

    let fit_target = |target: AugmentTarget, seed: u64| -> Result<(MlpModel, FitReport, ResidualPool), AugmentError> {
        let y: Vec<f64> = records
            .iter()
            .map(|r| match target {
                AugmentTarget::Actual => r.actual_load,
                AugmentTarget::DayAheadForecast => r.forecast_load,
            })
            .collect();
        let config = MlpConfig { seed, ..cfg.mlp.clone() };
        let model = fit_mlp(&x_train, &y[..split], &config)?;
        let predict = |x: &Matrix| -> Result<Vec<f64>, LearnError> { x.iter_rows().map(|r| model.predict(r)).collect() };
        let fitted = predict(&x_train)?;
        let (train_rmse, train_mape) = rmse_mape(&fitted, &y[..split]);
        let (validation_rmse, validation_mape) = if x_val.rows() > 0 {
            let (r, m) = rmse_mape(&predict(&x_val)?, &y[split..]);
            (Some(r), Some(m))
        } else {
            (None, None)
        };
        let mut buckets = vec![Vec::new(); 12 * 24];
        for ((r, f), obs) in records[..split].iter().zip(&fitted).zip(&y[..split]) {
            buckets[bucket(r.timestamp)].push(obs - f);
        }
        let report = FitReport {
            target,
            n_train: split,
            n_validation: records.len() - split,
            train_rmse,
            train_mape,
            validation_rmse,
            validation_mape,
        };
        info!(
            "augment {target:?}: train RMSE {train_rmse:.3} MAPE {train_mape:.2}%, validation MAPE {}",
            validation_mape.map_or("n/a".to_string(), |m| format!("{m:.2}%"))
        );
        Ok((model, report, ResidualPool { buckets }))
    };

    let (actual, ra, pa) = fit_target(AugmentTarget::Actual, derive_seed(cfg.seed, 0))?;
    let (forecast, rf, pf) = fit_target(AugmentTarget::DayAheadForecast, derive_seed(cfg.seed, 1))?;
    Ok(Augmenter {
        actual,
        forecast,
        reports: vec![ra, rf],
        actual_residuals: pa,
        forecast_residuals: pf,
    })
}

/// Weather for every hour of `range`, bridging gaps of up to 3 hours.
pub fn weather_for_range(weather: &[HourlyWeather], range: &DateRange) -> Result<Vec<(NaiveDateTime, WeatherPoint)>, AugmentError> {
    let valid: Vec<(NaiveDateTime, WeatherPoint)> = weather
        .iter()
        .filter_map(|w| w.point.map(|p| (w.timestamp, p)))
        .collect();
    let mut out = Vec::with_capacity(range.n_hours());
    let mut gap: Option<(NaiveDateTime, NaiveDateTime)> = None;
    for ts in range.hours() {
        match ingest::weather_at(&valid, ts) {
            Some(p) => {
                if let Some((start, end)) = gap {
                    return Err(AugmentError::CoverageGap { start, end });
                }
                out.push((ts, p));
            }
            None => gap = Some((gap.map_or(ts, |g| g.0), ts)),
        }
    }
    match gap {
        Some((start, end)) => Err(AugmentError::CoverageGap { start, end }),
        None => Ok(out),
    }
}

/// Generates one record per hour of `cfg.generation_range` from `weather`.
pub fn synthesize(
    augmenter: &Augmenter,
    weather: &[HourlyWeather],
    cfg: &AugmentationConfig,
    exec: Execution,
) -> Result<Vec<HourlyRecord>, AugmentError> {
    if !cfg.allow_overlap && cfg.generation_range.overlaps(&cfg.train_range) {
        return Err(AugmentError::Overlap { gen: cfg.generation_range, train: cfg.train_range });
    }
    let hours = weather_for_range(weather, &cfg.generation_range)?;
    // Lags before the range come from the raw grid when present.
    let lookup = |ts: NaiveDateTime| match hours.binary_search_by_key(&ts, |h| h.0) {
        Ok(i) => Some(hours[i].1.temp),
        Err(_) => weather
            .binary_search_by_key(&ts, |w| w.timestamp)
            .ok()
            .and_then(|i| weather[i].point)
            .map(|p| p.temp),
    };
    let years: Vec<i32> = (cfg.generation_range.start.year()..=cfg.generation_range.end.year()).collect();
    let floored = std::sync::atomic::AtomicUsize::new(0);
    let per_year: Vec<Result<Vec<HourlyRecord>, AugmentError>> = par::map_slice(exec, &years, |&year| {
        let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(cfg.seed, year as u64));
        let mut out = Vec::new();
        let lo = hours.partition_point(|h| h.0.year() < year);
        let hi = hours.partition_point(|h| h.0.year() <= year);
        for &(ts, p) in &hours[lo..hi] {
            let humidity = ingest::compute_humidity(p.temp, p.dew_point)?;
            let x = predictors(ts, humidity, lookup);
            let mut actual = augmenter.actual.predict(&x)?;
            let mut forecast = augmenter.forecast.predict(&x)?;
            if cfg.residual_bootstrap {
                actual += draw(&augmenter.actual_residuals, ts, &mut rng);
                forecast += draw(&augmenter.forecast_residuals, ts, &mut rng);
            }
            if actual < MIN_LOAD_MWH || forecast < MIN_LOAD_MWH {
                floored.fetch_add(1, std::sync::atomic::Ordering::Relaxed);
            }
            out.push(HourlyRecord::new(ts, actual.max(MIN_LOAD_MWH), forecast.max(MIN_LOAD_MWH), p.temp, p.dew_point)?);
        }
        Ok(out)
    });
    let n_floored = floored.into_inner();
    if n_floored > 0 {
        warn!("augment: {n_floored} synthetic hours floored at {MIN_LOAD_MWH} MWh");
    }
    let mut records = Vec::with_capacity(hours.len());
    for year in per_year {
        records.extend(year?);
    }
    Ok(records)
}

fn draw(pool: &ResidualPool, ts: NaiveDateTime, rng: &mut ChaCha8Rng) -> f64 {
    let b = &pool.buckets[bucket(ts)];
    if b.is_empty() {
        0.0
    } else {
        b[rng.random_range(0..b.len())]
    }
}

/// Merges synthetic records into a table; recorded hours take precedence.
pub fn extend_table(recorded: &[HourlyRecord], synthetic: &[HourlyRecord]) -> Vec<HourlyRecord> {
    let mut out: Vec<HourlyRecord> = recorded.to_vec();
    out.extend(
        synthetic
            .iter()
            .filter(|s| recorded.binary_search_by_key(&s.timestamp, |r| r.timestamp).is_err()),
    );
    out.sort_by_key(|r| r.timestamp);
    out
}
