//! Per-month peak classifiers and the dispatch decision built on them.
//!
//! Twelve independent models are trained per task. A peak-day model scores
//! each operating day; the indirect variant predicts the up-to-date label and
//! converts it into a monthly probability with [`peak_day_multiplier`]. A
//! peak-hour model scores the 24 hours of a day and the two best hours are
//! selected for discharge.

use std::collections::BTreeMap;
use std::fmt;
use std::io::Write;
use std::path::Path;
use std::str::FromStr;

use chrono::{Datelike, NaiveDate};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::error::{Error, Result};
use crate::features::{
    build_month_day_rows, build_peak_day_rows, build_peak_hour_rows, build_month_hour_rows, DayTable, FeatureError,
    PeakDayFeatureRow, PeakHourFeatureRow, LOOKAHEAD_DAYS, PEAK_DAY_PREDICTORS, PEAK_HOUR_PREDICTORS,
};
use crate::learners::{
    derive_seed, fit_gbm, fit_logit_aic, fit_random_forest, serial, Classifier, ForestParams, GbmParams, LearnError,
    Matrix,
};
use crate::par::{self, Execution};

#[derive(Debug, Error)]
pub enum PeakModelError {
    #[error("day {n} is outside 1..={days_in_month} (months have 28 to 31 days)")]
    IndexOutOfRange { n: u32, days_in_month: u32 },
    #[error("model for {model_task} month {model_month} applied to {row_task} row of month {row_month}")]
    MonthModelMismatch {
        model_task: Task,
        model_month: u32,
        row_task: Task,
        row_month: u32,
    },
    #[error("{date}: expected 24 hourly rows in order, got {rows}")]
    IncompleteDay { date: NaiveDate, rows: usize },
    #[error("no {task} model for month {month}")]
    MissingModel { task: Task, month: u32 },
    #[error("threshold {0} is outside [0, 1]")]
    BadThreshold(f64),
    #[error("no training rows for {task} month {month} in the training years")]
    NoTrainingRows { task: Task, month: u32 },
    #[error("unknown kind {0:?} (expected direct or indirect)")]
    BadKind(String),
}

/// What a monthly model predicts.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Task {
    /// Day is the month's peak day.
    Direct,
    /// Day is the peak of the up-to-date window.
    Indirect,
    /// Hour is the day's peak hour.
    Hour,
}

impl Task {
    pub fn name(self) -> &'static str {
        match self {
            Task::Direct => "direct",
            Task::Indirect => "indirect",
            Task::Hour => "hour",
        }
    }

    fn index(self) -> u64 {
        self as u64
    }
}

impl fmt::Display for Task {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PeakDayKind {
    Direct,
    #[default]
    Indirect,
}

impl PeakDayKind {
    pub fn task(self) -> Task {
        match self {
            PeakDayKind::Direct => Task::Direct,
            PeakDayKind::Indirect => Task::Indirect,
        }
    }
}

impl fmt::Display for PeakDayKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        self.task().fmt(f)
    }
}

impl FromStr for PeakDayKind {
    type Err = PeakModelError;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "direct" => Ok(PeakDayKind::Direct),
            "indirect" => Ok(PeakDayKind::Indirect),
            _ => Err(PeakModelError::BadKind(s.to_string())),
        }
    }
}

/// Learner and hyperparameters used for one task.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum LearnerConfig {
    Forest(ForestParams),
    Gbm(GbmParams),
    Logit,
}

impl LearnerConfig {
    pub fn fit(&self, x: &Matrix, y: &[u8], seed: u64) -> Result<Classifier, LearnError> {
        match self {
            LearnerConfig::Forest(p) => fit_random_forest(x, y, &ForestParams { seed, ..p.clone() }).map(Classifier::Forest),
            LearnerConfig::Gbm(p) => fit_gbm(x, y, &GbmParams { seed, ..p.clone() }).map(Classifier::Gbm),
            LearnerConfig::Logit => fit_logit_aic(x, y).map(Classifier::Logit),
        }
    }

    /// Copy running its internal loops with `exec`.
    pub fn with_execution(&self, exec: Execution) -> Self {
        match self {
            LearnerConfig::Forest(p) => LearnerConfig::Forest(ForestParams { execution: exec, ..p.clone() }),
            other => other.clone(),
        }
    }
}

impl Default for LearnerConfig {
    fn default() -> Self {
        LearnerConfig::Forest(ForestParams::default())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MonthlyModel {
    pub month: u32,
    pub task: Task,
    pub training_years: Vec<i32>,
    pub feature_names: Vec<String>,
    pub n_rows: usize,
    pub n_positive: usize,
    pub seed: u64,
    pub classifier: Classifier,
}

impl MonthlyModel {
    pub fn to_document(&self) -> Result<String, LearnError> {
        serial::to_document(self)
    }

    pub fn from_document(text: &str) -> Result<Self, LearnError> {
        serial::from_document(text)
    }
}

/// The twelve monthly models of one task.
#[derive(Clone, Debug, PartialEq)]
pub struct ModelSet {
    pub task: Task,
    pub models: BTreeMap<u32, MonthlyModel>,
}

impl ModelSet {
    pub fn get(&self, month: u32) -> std::result::Result<&MonthlyModel, PeakModelError> {
        self.models.get(&month).ok_or(PeakModelError::MissingModel { task: self.task, month })
    }

    pub fn training_years(&self) -> Vec<i32> {
        let mut years: Vec<i32> = self.models.values().flat_map(|m| m.training_years.iter().copied()).collect();
        years.sort_unstable();
        years.dedup();
        years
    }

    /// Writes `<dir>/<task>/month_MM.json`.
    pub fn save(&self, dir: impl AsRef<Path>) -> Result<()> {
        let sub = dir.as_ref().join(self.task.name());
        std::fs::create_dir_all(&sub).map_err(|e| Error::io(&sub, e))?;
        for (month, model) in &self.models {
            let path = sub.join(format!("month_{month:02}.json"));
            std::fs::write(&path, model.to_document()?).map_err(|e| Error::io(&path, e))?;
        }
        Ok(())
    }

    /// Loads whichever monthly models exist under `<dir>/<task>/`.
    pub fn load(dir: impl AsRef<Path>, task: Task) -> Result<Self> {
        let sub = dir.as_ref().join(task.name());
        let mut models = BTreeMap::new();
        for month in 1..=12u32 {
            let path = sub.join(format!("month_{month:02}.json"));
            if !path.exists() {
                continue;
            }
            let text = std::fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
            let model = MonthlyModel::from_document(&text)?;
            if model.task != task || model.month != month {
                return Err(PeakModelError::MonthModelMismatch {
                    model_task: model.task,
                    model_month: model.month,
                    row_task: task,
                    row_month: month,
                }
                .into());
            }
            models.insert(month, model);
        }
        if models.is_empty() {
            return Err(PeakModelError::MissingModel { task, month: 1 }.into());
        }
        Ok(ModelSet { task, models })
    }
}

/// Training matrix of `task` for `month`, restricted to `years`.
pub fn training_data(table: &DayTable, task: Task, month: u32, years: &[i32]) -> Result<(Matrix, Vec<u8>)> {
    let keep = |d: NaiveDate| years.contains(&d.year());
    let (x, y) = match task {
        Task::Direct | Task::Indirect => {
            let rows: Vec<PeakDayFeatureRow> = build_peak_day_rows(table, month)?.into_iter().filter(|r| keep(r.date)).collect();
            let x: Vec<[f64; 8]> = rows.iter().map(|r| r.predictors()).collect();
            let y = rows
                .iter()
                .map(|r| if task == Task::Direct { r.label_direct } else { r.label_up_to_date })
                .collect();
            (Matrix::from_rows(&x)?, y)
        }
        Task::Hour => {
            let rows: Vec<PeakHourFeatureRow> = build_month_hour_rows(table, month)?.into_iter().filter(|r| keep(r.date)).collect();
            let x: Vec<[f64; 23]> = rows.iter().map(|r| r.predictors()).collect();
            (Matrix::from_rows(&x)?, rows.iter().map(|r| r.label).collect())
        }
    };
    if x.rows() == 0 {
        return Err(PeakModelError::NoTrainingRows { task, month }.into());
    }
    Ok((x, y))
}

/// Fits the twelve monthly models of `task` on `years`.
///
/// Month `m` uses seed `derive_seed(seed, 3 * m + task)`; months are fitted
/// in parallel and the result does not depend on scheduling.
pub fn fit_monthly_models(
    table: &DayTable,
    task: Task,
    years: &[i32],
    learner: &LearnerConfig,
    seed: u64,
    exec: Execution,
) -> Result<ModelSet> {
    let learner = learner.with_execution(exec);
    let fitted: Vec<Result<MonthlyModel>> = par::map_range(exec, 12, |i| {
        let month = i as u32 + 1;
        let (x, y) = training_data(table, task, month, years)?;
        let month_seed = derive_seed(seed, 3 * month as u64 + task.index());
        let classifier = learner.fit(&x, &y, month_seed)?;
        let names: &[&str] = if task == Task::Hour { &PEAK_HOUR_PREDICTORS } else { &PEAK_DAY_PREDICTORS };
        Ok(MonthlyModel {
            month,
            task,
            training_years: years.to_vec(),
            feature_names: names.iter().map(|s| s.to_string()).collect(),
            n_rows: x.rows(),
            n_positive: y.iter().filter(|&&v| v == 1).count(),
            seed: month_seed,
            classifier,
        })
    });
    let mut models = BTreeMap::new();
    for m in fitted {
        let m = m?;
        models.insert(m.month, m);
    }
    Ok(ModelSet { task, models })
}

/// `min(1, (n + 6) / N)`.
pub fn peak_day_multiplier(n: u32, days_in_month: u32) -> std::result::Result<f64, PeakModelError> {
    if !(28..=31).contains(&days_in_month) || n < 1 || n > days_in_month {
        return Err(PeakModelError::IndexOutOfRange { n, days_in_month });
    }
    let window = n + LOOKAHEAD_DAYS;
    // one correctly rounded division of exact integers
    Ok(if window >= days_in_month { 1.0 } else { window as f64 / days_in_month as f64 })
}

/// Dispatch when `p_month >= threshold`.
pub fn decide_dispatch(p_month: f64, threshold: f64) -> bool {
    p_month >= threshold
}

pub fn check_threshold(threshold: f64) -> std::result::Result<f64, PeakModelError> {
    if (0.0..=1.0).contains(&threshold) {
        Ok(threshold)
    } else {
        Err(PeakModelError::BadThreshold(threshold))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PeakDayPrediction {
    pub date: NaiveDate,
    pub kind: PeakDayKind,
    /// Up-to-date peak probability (indirect only).
    pub p_date: Option<f64>,
    /// Multiplier `min(1, (n + 6) / N)` (indirect only).
    pub p_mul: Option<f64>,
    pub p_month: f64,
    pub dispatch: bool,
}

impl PeakDayPrediction {
    pub fn with_threshold(mut self, threshold: f64) -> Self {
        self.dispatch = decide_dispatch(self.p_month, threshold);
        self
    }
}

pub fn predict_peak_day(
    model: &MonthlyModel,
    row: &PeakDayFeatureRow,
    kind: PeakDayKind,
    threshold: f64,
) -> Result<PeakDayPrediction> {
    if model.task != kind.task() || model.month != row.month() {
        return Err(PeakModelError::MonthModelMismatch {
            model_task: model.task,
            model_month: model.month,
            row_task: kind.task(),
            row_month: row.month(),
        }
        .into());
    }
    let p = model.classifier.predict_proba(&row.predictors())?;
    let (p_date, p_mul, p_month) = match kind {
        PeakDayKind::Direct => (None, None, p),
        PeakDayKind::Indirect => {
            let mul = peak_day_multiplier(row.n, row.days_in_month)?;
            (Some(p), Some(mul), p * mul)
        }
    };
    Ok(PeakDayPrediction {
        date: row.date,
        kind,
        p_date,
        p_mul,
        p_month,
        dispatch: decide_dispatch(p_month, threshold),
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PeakHourPrediction {
    pub date: NaiveDate,
    pub probabilities: [f64; 24],
    /// The two selected hours, best first.
    pub selected: [u32; 2],
}

impl PeakHourPrediction {
    pub fn contains(&self, hour: u32) -> bool {
        self.selected.contains(&hour)
    }
}

/// Indices of the two largest values, best first; ties go to the earlier index.
pub fn select_top2(values: &[f64; 24]) -> [u32; 2] {
    let mut first = 0;
    for h in 1..24 {
        if values[h] > values[first] {
            first = h;
        }
    }
    let mut second = if first == 0 { 1 } else { 0 };
    for h in 0..24 {
        if h != first && values[h] > values[second] {
            second = h;
        }
    }
    [first as u32, second as u32]
}

fn check_day(rows: &[PeakHourFeatureRow]) -> std::result::Result<NaiveDate, PeakModelError> {
    let date = rows.first().map(|r| r.date);
    match date {
        Some(d) if rows.len() == 24 && rows.iter().enumerate().all(|(h, r)| r.date == d && r.hour == h as u32) => Ok(d),
        _ => Err(PeakModelError::IncompleteDay {
            date: date.unwrap_or_default(),
            rows: rows.len(),
        }),
    }
}

pub fn predict_peak_hours(model: &MonthlyModel, rows: &[PeakHourFeatureRow]) -> Result<PeakHourPrediction> {
    let date = check_day(rows)?;
    if model.task != Task::Hour || model.month != date.month() {
        return Err(PeakModelError::MonthModelMismatch {
            model_task: model.task,
            model_month: model.month,
            row_task: Task::Hour,
            row_month: date.month(),
        }
        .into());
    }
    let mut probabilities = [0.0; 24];
    for (p, r) in probabilities.iter_mut().zip(rows) {
        *p = model.classifier.predict_proba(&r.predictors())?;
    }
    Ok(PeakHourPrediction {
        date,
        selected: select_top2(&probabilities),
        probabilities,
    })
}

/// Top two hours of the day-ahead forecast; "probabilities" are forecasts normalised to sum 1.
pub fn naive_peak_hours(rows: &[PeakHourFeatureRow]) -> std::result::Result<PeakHourPrediction, PeakModelError> {
    let date = check_day(rows)?;
    let mut forecast = [0.0; 24];
    for (f, r) in forecast.iter_mut().zip(rows) {
        *f = r.load_forecast;
    }
    let total: f64 = forecast.iter().sum();
    Ok(PeakHourPrediction {
        date,
        selected: select_top2(&forecast),
        probabilities: forecast.map(|f| f / total),
    })
}

/// Everything predicted for one operating day.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DayForecast {
    pub day: PeakDayPrediction,
    pub hours: PeakHourPrediction,
    pub naive: PeakHourPrediction,
    /// Actual peak hour of the day.
    pub actual_peak_hour: u32,
    /// Whether this is the month's actual peak day.
    pub is_peak_day: bool,
}

/// Predictions for every day of a complete month.
pub fn predict_month(
    day_models: &ModelSet,
    hour_models: &ModelSet,
    table: &DayTable,
    year: i32,
    month: u32,
    kind: PeakDayKind,
    threshold: f64,
) -> Result<Vec<DayForecast>> {
    let rows = build_month_day_rows(table, year, month)?;
    let day_model = day_models.get(month)?;
    let hour_model = hour_models.get(month)?;
    rows.iter()
        .map(|row| {
            let hour_rows = build_peak_hour_rows(table, row.date)?;
            let actual_peak_hour = hour_rows.iter().position(|r| r.label == 1).ok_or(FeatureError::IncompleteDay(row.date))? as u32;
            Ok(DayForecast {
                day: predict_peak_day(day_model, row, kind, threshold)?,
                hours: predict_peak_hours(hour_model, &hour_rows)?,
                naive: naive_peak_hours(&hour_rows)?,
                actual_peak_hour,
                is_peak_day: row.label_direct == 1,
            })
        })
        .collect()
}

pub fn prediction_csv_header() -> Vec<String> {
    let mut h: Vec<String> = ["date", "kind", "p_date", "p_mul", "p_month", "dispatch", "hour_sel_1", "hour_sel_2"]
        .iter()
        .map(|s| s.to_string())
        .collect();
    h.extend((0..24).map(|i| format!("p_hour_{i}")));
    h
}

pub fn write_predictions<W: Write>(out: W, forecasts: &[DayForecast]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(prediction_csv_header())?;
    let opt = |v: Option<f64>| v.map_or(String::new(), |v| v.to_string());
    for f in forecasts {
        let mut rec = vec![
            f.day.date.to_string(),
            f.day.kind.to_string(),
            opt(f.day.p_date),
            opt(f.day.p_mul),
            f.day.p_month.to_string(),
            (f.day.dispatch as u8).to_string(),
            f.hours.selected[0].to_string(),
            f.hours.selected[1].to_string(),
        ];
        rec.extend(f.hours.probabilities.iter().map(|p| p.to_string()));
        w.write_record(&rec)?;
    }
    w.flush().map_err(|e| Error::io("predictions", e))?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::learners::{ForestModel, TreeNode};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn constant_model(task: Task, month: u32, p: f64, n_features: usize) -> MonthlyModel {
        let leaf = |v: f64| TreeNode::Leaf { n: 1, positives: v as usize, value: v };
        // 100 trees, round(100 p) vote 1
        let votes = (p * 100.0).round() as usize;
        let trees = (0..100).map(|i| leaf((i < votes) as u8 as f64)).collect();
        MonthlyModel {
            month,
            task,
            training_years: vec![2000],
            feature_names: Vec::new(),
            n_rows: 0,
            n_positive: 0,
            seed: 0,
            classifier: Classifier::Forest(ForestModel {
                params: ForestParams { n_tree: 100, ..Default::default() },
                n_features,
                trees,
                feature_importances: vec![1.0 / n_features as f64; n_features],
                oob_accuracy: None,
            }),
        }
    }

    fn day_row(date: NaiveDate, n: u32, days: u32) -> PeakDayFeatureRow {
        PeakDayFeatureRow {
            date,
            load_max: 1.0,
            t_min: 0.0,
            t_max: 1.0,
            weekday_idx: 0,
            prev_month_max: 1.0,
            prev_max: 1.0,
            t_min_day_2_to_7: 0.0,
            t_max_day_2_to_7: 1.0,
            label_direct: 0,
            label_up_to_date: 0,
            n,
            days_in_month: days,
        }
    }

    #[test]
    fn multiplier_values() {
        assert_eq!(peak_day_multiplier(25, 31).unwrap(), 1.0);
        assert_eq!(peak_day_multiplier(1, 31).unwrap(), 7.0 / 31.0);
        assert!((peak_day_multiplier(1, 31).unwrap() - 0.22581).abs() < 1e-5);
        assert_eq!(peak_day_multiplier(28, 28).unwrap(), 1.0);
        assert!(peak_day_multiplier(0, 31).is_err());
        assert!(peak_day_multiplier(32, 31).is_err());
        assert!(peak_day_multiplier(5, 27).is_err());
    }

    #[test]
    fn indirect_chain() {
        let d = NaiveDate::from_ymd_opt(2020, 1, 25).unwrap();
        let m = constant_model(Task::Indirect, 1, 0.5, 8);
        let p = predict_peak_day(&m, &day_row(d, 25, 31), PeakDayKind::Indirect, 0.03).unwrap();
        assert_eq!(p.p_month, 0.5);
        let m = constant_model(Task::Indirect, 1, 0.31, 8);
        let p = predict_peak_day(&m, &day_row(d.with_day(1).unwrap(), 1, 31), PeakDayKind::Indirect, 0.03).unwrap();
        assert_eq!(p.p_date, Some(0.31));
        assert!((p.p_month - 0.07).abs() < 1e-3);
        assert_eq!(p.p_month, p.p_date.unwrap() * p.p_mul.unwrap());
        assert!(p.dispatch);

        let direct = predict_peak_day(&constant_model(Task::Direct, 1, 0.02, 8), &day_row(d, 25, 31), PeakDayKind::Direct, 0.03).unwrap();
        assert_eq!((direct.p_date, direct.p_mul, direct.p_month, direct.dispatch), (None, None, 0.02, false));

        let wrong_month = predict_peak_day(&constant_model(Task::Indirect, 2, 0.5, 8), &day_row(d, 25, 31), PeakDayKind::Indirect, 0.03);
        assert!(matches!(wrong_month, Err(Error::PeakModel(PeakModelError::MonthModelMismatch { .. }))));
        let wrong_kind = predict_peak_day(&m, &day_row(d, 25, 31), PeakDayKind::Direct, 0.03);
        assert!(wrong_kind.is_err());
    }

    #[test]
    fn dispatch_is_inclusive() {
        assert!(decide_dispatch(0.03, 0.03));
        assert!(!decide_dispatch(0.029, 0.03));
        assert!(decide_dispatch(0.257, 0.03));
        assert!(check_threshold(1.2).is_err());
    }

    fn brute_top2(v: &[f64; 24]) -> [u32; 2] {
        let mut idx: Vec<usize> = (0..24).collect();
        idx.sort_by(|&a, &b| v[b].partial_cmp(&v[a]).unwrap().then(a.cmp(&b)));
        [idx[0] as u32, idx[1] as u32]
    }

    #[test]
    fn top2_selection() {
        let mut v = [0.1; 24];
        v[8] = 0.9;
        v[18] = 0.5;
        assert_eq!(select_top2(&v), [8, 18]);
        assert_eq!(select_top2(&[0.3; 24]), [0, 1]);
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..500 {
            let mut v = [0.0; 24];
            for x in &mut v {
                *x = (rng.random_range(0..6) as f64) / 5.0;
            }
            assert_eq!(select_top2(&v), brute_top2(&v));
            // invariant under a strictly increasing transform
            assert_eq!(select_top2(&v.map(|x| (3.0 * x).exp() - 1.0)), select_top2(&v));
        }
    }

    fn hour_rows(forecast: &[f64; 24]) -> Vec<PeakHourFeatureRow> {
        let date = NaiveDate::from_ymd_opt(2021, 6, 3).unwrap();
        (0..24)
            .map(|h| PeakHourFeatureRow {
                date,
                hour: h as u32,
                load_forecast: forecast[h],
                temp: 20.0,
                humidity: 50.0,
                weekend_idx: 0,
                peak_prev_day: 0,
                temp_before: [20.0; 3],
                temp_after: [20.0; 3],
                load_before: [1.0; 3],
                load_after: [1.0; 3],
                prev_max_load: 1.0,
                after_max_load: 1.0,
                rank_load_forecast: 1,
                rank_load_prev_day: 1,
                load_prev_day: 1.0,
                load_prev_day_forecast: 1.0,
                label: 0,
            })
            .collect()
    }

    #[test]
    fn naive_hours() {
        let decreasing: [f64; 24] = std::array::from_fn(|h| 100.0 - h as f64);
        assert_eq!(naive_peak_hours(&hour_rows(&decreasing)).unwrap().selected, [0, 1]);
        let mut f = [50.0; 24];
        f[17] = 90.0;
        f[18] = 85.0;
        let p = naive_peak_hours(&hour_rows(&f)).unwrap();
        assert_eq!(p.selected, [17, 18]);
        assert!((p.probabilities.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        assert!(naive_peak_hours(&hour_rows(&f)[..23]).is_err());
    }

    #[test]
    fn hour_model_applies_per_row() {
        let m = constant_model(Task::Hour, 6, 0.4, 23);
        let p = predict_peak_hours(&m, &hour_rows(&[1.0; 24])).unwrap();
        assert!(p.probabilities.iter().all(|&v| v == 0.4));
        assert_eq!(p.selected, [0, 1]);
        let wrong = constant_model(Task::Hour, 7, 0.4, 23);
        assert!(predict_peak_hours(&wrong, &hour_rows(&[1.0; 24])).is_err());
    }

    #[test]
    fn model_documents_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let mut models = BTreeMap::new();
        for month in [1, 2] {
            models.insert(month, constant_model(Task::Indirect, month, 0.25, 8));
        }
        let set = ModelSet { task: Task::Indirect, models };
        set.save(dir.path()).unwrap();
        let back = ModelSet::load(dir.path(), Task::Indirect).unwrap();
        assert_eq!(back, set);
        assert!(ModelSet::load(dir.path(), Task::Hour).is_err());
    }
}
