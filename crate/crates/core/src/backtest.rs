//! Replay of the dispatch policy over held-out years.
//!
//! Every day with `p_month >= threshold` is a dispatch day (one battery
//! cycle) on which the two selected hours are discharged. A month's peak day
//! is captured when the battery was dispatched on it, and its peak hour is
//! captured when additionally the actual peak hour was one of the two
//! selected hours.

use std::fmt::Write as _;
use std::path::Path;

use chrono::{Datelike, NaiveDate};
use log::warn;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::error::{Error, Result};
use crate::features::DayTable;
use crate::peak_models::{check_threshold, decide_dispatch, predict_month, DayForecast, ModelSet, PeakDayKind};
use crate::par::{self, Execution};

pub const DEFAULT_TESTING_YEARS: [i32; 6] = [2001, 2006, 2008, 2011, 2019, 2020];
pub const DEFAULT_THRESHOLD: f64 = 0.03;
pub const MAX_CYCLES_PER_YEAR: usize = 100;

#[derive(Debug, Error)]
pub enum BacktestError {
    #[error("testing years {years:?} were used to train the models")]
    TrainTestOverlap { years: Vec<i32> },
    #[error("recall is undefined with zero true positives and zero false negatives")]
    ZeroDenominator,
    #[error("reports cover different peak days: {0}")]
    DayMismatch(String),
    #[error("no complete month available for testing year {0}")]
    NoData(i32),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BacktestConfig {
    pub testing_years: Vec<i32>,
    pub threshold: f64,
    pub kind: PeakDayKind,
    /// Annual cycle budget; exceeding it is flagged, never enforced.
    pub max_cycles: usize,
}

impl Default for BacktestConfig {
    fn default() -> Self {
        BacktestConfig {
            testing_years: DEFAULT_TESTING_YEARS.to_vec(),
            threshold: DEFAULT_THRESHOLD,
            kind: PeakDayKind::Indirect,
            max_cycles: MAX_CYCLES_PER_YEAR,
        }
    }
}

/// Outcome of one evaluated month.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MonthOutcome {
    pub year: i32,
    pub month: u32,
    pub peak_date: NaiveDate,
    pub peak_hour: u32,
    pub dispatch_days: usize,
    pub day_captured: bool,
    /// Hours the peak-hour model picked on the peak day.
    pub model_hours: [u32; 2],
    /// Top two day-ahead forecast hours on the peak day.
    pub naive_hours: [u32; 2],
}

impl MonthOutcome {
    pub fn model_hit(&self) -> bool {
        self.model_hours.contains(&self.peak_hour)
    }

    pub fn naive_hit(&self) -> bool {
        self.naive_hours.contains(&self.peak_hour)
    }

    pub fn hour_captured(&self) -> bool {
        self.day_captured && self.model_hit()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct YearSummary {
    pub year: i32,
    pub months_evaluated: usize,
    pub cycles: usize,
    pub peak_days_captured: usize,
    pub peak_hours_captured: usize,
    /// Peak hours the naive selection would have hit on the captured days.
    pub naive_hours_captured: usize,
    pub over_cycle_budget: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MonthRecall {
    pub month: u32,
    pub peak_days: usize,
    pub model_hits: usize,
    pub naive_hits: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BacktestReport {
    pub config: BacktestConfig,
    pub years: Vec<YearSummary>,
    pub months: Vec<MonthOutcome>,
}

/// `tp / (tp + fn)`.
pub fn recall(tp: usize, fn_: usize) -> std::result::Result<f64, BacktestError> {
    if tp + fn_ == 0 {
        return Err(BacktestError::ZeroDenominator);
    }
    Ok(tp as f64 / (tp + fn_) as f64)
}

/// Threshold-independent predictions of one testing year, grouped by month.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct YearForecast {
    pub year: i32,
    pub months: Vec<Vec<DayForecast>>,
}

/// Predicts every complete month of the testing years.
///
/// Months that are incomplete or lack history are skipped with a warning.
pub fn forecast_years(
    day_models: &ModelSet,
    hour_models: &ModelSet,
    table: &DayTable,
    years: &[i32],
    kind: PeakDayKind,
    exec: Execution,
) -> Result<Vec<YearForecast>> {
    let trained: Vec<i32> = day_models.training_years().into_iter().chain(hour_models.training_years()).collect();
    let mut overlap: Vec<i32> = years.iter().copied().filter(|y| trained.contains(y)).collect();
    overlap.sort_unstable();
    overlap.dedup();
    if !overlap.is_empty() {
        return Err(BacktestError::TrainTestOverlap { years: overlap }.into());
    }
    let out: Vec<Result<YearForecast>> = par::map_slice(exec, years, |&year| {
        let mut months = Vec::new();
        for month in 1..=12 {
            if !table.month_complete(year, month) {
                warn!("backtest: {year}-{month:02} is incomplete and excluded from all counts");
                continue;
            }
            match predict_month(day_models, hour_models, table, year, month, kind, 0.0) {
                Ok(f) => months.push(f),
                Err(Error::Features(e)) => warn!("backtest: {year}-{month:02} excluded: {e}"),
                Err(e) => return Err(e),
            }
        }
        if months.is_empty() {
            return Err(BacktestError::NoData(year).into());
        }
        Ok(YearForecast { year, months })
    });
    out.into_iter().collect()
}

/// Applies the dispatch policy at `cfg.threshold` to precomputed forecasts.
pub fn evaluate(forecasts: &[YearForecast], cfg: &BacktestConfig) -> Result<BacktestReport> {
    check_threshold(cfg.threshold)?;
    let mut years = Vec::new();
    let mut months = Vec::new();
    for yf in forecasts {
        let mut summary = YearSummary {
            year: yf.year,
            months_evaluated: yf.months.len(),
            cycles: 0,
            peak_days_captured: 0,
            peak_hours_captured: 0,
            naive_hours_captured: 0,
            over_cycle_budget: false,
        };
        for days in &yf.months {
            let peak = days.iter().find(|d| d.is_peak_day).expect("every complete month has a peak day");
            let dispatch_days = days.iter().filter(|d| decide_dispatch(d.day.p_month, cfg.threshold)).count();
            let outcome = MonthOutcome {
                year: yf.year,
                month: peak.day.date.month(),
                peak_date: peak.day.date,
                peak_hour: peak.actual_peak_hour,
                dispatch_days,
                day_captured: decide_dispatch(peak.day.p_month, cfg.threshold),
                model_hours: peak.hours.selected,
                naive_hours: peak.naive.selected,
            };
            summary.cycles += dispatch_days;
            summary.peak_days_captured += outcome.day_captured as usize;
            summary.peak_hours_captured += outcome.hour_captured() as usize;
            summary.naive_hours_captured += (outcome.day_captured && outcome.naive_hit()) as usize;
            months.push(outcome);
        }
        summary.over_cycle_budget = summary.cycles > cfg.max_cycles;
        if summary.over_cycle_budget {
            warn!("backtest: {} used {} cycles, above the budget of {}", yf.year, summary.cycles, cfg.max_cycles);
        }
        years.push(summary);
    }
    Ok(BacktestReport {
        config: cfg.clone(),
        years,
        months,
    })
}

pub fn run_backtest(
    day_models: &ModelSet,
    hour_models: &ModelSet,
    table: &DayTable,
    cfg: &BacktestConfig,
    exec: Execution,
) -> Result<BacktestReport> {
    check_threshold(cfg.threshold)?;
    let forecasts = forecast_years(day_models, hour_models, table, &cfg.testing_years, cfg.kind, exec)?;
    evaluate(&forecasts, cfg)
}

impl BacktestReport {
    pub fn total_months(&self) -> usize {
        self.years.iter().map(|y| y.months_evaluated).sum()
    }

    pub fn average_cycles(&self) -> f64 {
        self.years.iter().map(|y| y.cycles as f64).sum::<f64>() / self.years.len().max(1) as f64
    }

    pub fn average_peak_days(&self) -> f64 {
        self.years.iter().map(|y| y.peak_days_captured as f64).sum::<f64>() / self.years.len().max(1) as f64
    }

    pub fn average_peak_hours(&self) -> f64 {
        self.years.iter().map(|y| y.peak_hours_captured as f64).sum::<f64>() / self.years.len().max(1) as f64
    }

    /// Peak-hour recall of the model and of the naive selection, over captured peak days.
    pub fn captured_day_recall(&self) -> std::result::Result<(f64, f64), BacktestError> {
        let captured: Vec<&MonthOutcome> = self.months.iter().filter(|m| m.day_captured).collect();
        let model = captured.iter().filter(|m| m.model_hit()).count();
        let naive = captured.iter().filter(|m| m.naive_hit()).count();
        Ok((recall(model, captured.len() - model)?, recall(naive, captured.len() - naive)?))
    }

    /// Peak-hour hits of both selections on every actual peak day, by calendar month.
    pub fn recall_by_month(&self) -> Vec<MonthRecall> {
        (1..=12)
            .filter_map(|month| {
                let days: Vec<&MonthOutcome> = self.months.iter().filter(|m| m.month == month).collect();
                (!days.is_empty()).then(|| MonthRecall {
                    month,
                    peak_days: days.len(),
                    model_hits: days.iter().filter(|m| m.model_hit()).count(),
                    naive_hits: days.iter().filter(|m| m.naive_hit()).count(),
                })
            })
            .collect()
    }

    /// The same report with the naive hour selection standing in for the model's.
    pub fn as_naive(&self) -> BacktestReport {
        let mut r = self.clone();
        for m in &mut r.months {
            m.model_hours = m.naive_hours;
        }
        for y in &mut r.years {
            y.peak_hours_captured = y.naive_hours_captured;
        }
        r
    }

    /// Human-readable table, one line per testing year plus averages.
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let c = &self.config;
        let _ = writeln!(s, "kind {}  threshold {}  cycle budget {}", c.kind, c.threshold, c.max_cycles);
        let _ = writeln!(s, "{:>6} {:>7} {:>7} {:>10} {:>11} {:>12}", "year", "months", "cycles", "peak days", "peak hours", "naive hours");
        for y in &self.years {
            let flag = if y.over_cycle_budget { " *" } else { "" };
            let _ = writeln!(
                s,
                "{:>6} {:>7} {:>7} {:>10} {:>11} {:>12}{flag}",
                y.year,
                y.months_evaluated,
                y.cycles,
                format!("{}/{}", y.peak_days_captured, y.months_evaluated),
                format!("{}/{}", y.peak_hours_captured, y.months_evaluated),
                format!("{}/{}", y.naive_hours_captured, y.months_evaluated),
            );
        }
        let n = self.years.len().max(1) as f64;
        let naive = self.years.iter().map(|y| y.naive_hours_captured as f64).sum::<f64>() / n;
        let _ = writeln!(
            s,
            "{:>6} {:>7} {:>7.1} {:>10.2} {:>11.2} {:>12.2}",
            "avg",
            "",
            self.average_cycles(),
            self.average_peak_days(),
            self.average_peak_hours(),
            naive
        );
        if self.years.iter().any(|y| y.over_cycle_budget) {
            let _ = writeln!(s, "* cycle budget exceeded");
        }
        s
    }

    pub fn years_csv(&self) -> Result<String> {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record([
            "year",
            "months_evaluated",
            "cycles",
            "peak_days_captured",
            "peak_hours_captured",
            "naive_hours_captured",
            "over_cycle_budget",
        ])?;
        for y in &self.years {
            w.write_record([
                y.year.to_string(),
                y.months_evaluated.to_string(),
                y.cycles.to_string(),
                y.peak_days_captured.to_string(),
                y.peak_hours_captured.to_string(),
                y.naive_hours_captured.to_string(),
                (y.over_cycle_budget as u8).to_string(),
            ])?;
        }
        into_string(w)
    }

    pub fn months_csv(&self) -> Result<String> {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record([
            "year",
            "month",
            "peak_date",
            "peak_hour",
            "dispatch_days",
            "day_captured",
            "hour_captured",
            "model_hour_1",
            "model_hour_2",
            "naive_hour_1",
            "naive_hour_2",
        ])?;
        for m in &self.months {
            w.write_record([
                m.year.to_string(),
                m.month.to_string(),
                m.peak_date.to_string(),
                m.peak_hour.to_string(),
                m.dispatch_days.to_string(),
                (m.day_captured as u8).to_string(),
                (m.hour_captured() as u8).to_string(),
                m.model_hours[0].to_string(),
                m.model_hours[1].to_string(),
                m.naive_hours[0].to_string(),
                m.naive_hours[1].to_string(),
            ])?;
        }
        into_string(w)
    }

    /// Writes `summary.txt`, `years.csv`, `months.csv`, `recall_by_month.csv` and `report.json`.
    pub fn save(&self, dir: impl AsRef<Path>) -> Result<()> {
        let dir = dir.as_ref();
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let files = [
            ("summary.txt", self.to_text()),
            ("years.csv", self.years_csv()?),
            ("months.csv", self.months_csv()?),
            ("recall_by_month.csv", recall_csv(&compare_models(self, &self.as_naive())?)?),
            ("report.json", serde_json::to_string_pretty(self)?),
        ];
        for (name, body) in files {
            let path = dir.join(name);
            std::fs::write(&path, body).map_err(|e| Error::io(&path, e))?;
        }
        Ok(())
    }
}

fn into_string(w: csv::Writer<Vec<u8>>) -> Result<String> {
    let bytes = w.into_inner().map_err(|e| Error::Serde(e.to_string()))?;
    String::from_utf8(bytes).map_err(|e| Error::Serde(e.to_string()))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RecallDelta {
    pub month: u32,
    pub peak_days: usize,
    pub recall_a: f64,
    pub recall_b: f64,
    pub delta: f64,
}

/// Per-month peak-hour recall of `a`'s selection against `b`'s over the same peak days.
pub fn compare_models(a: &BacktestReport, b: &BacktestReport) -> std::result::Result<Vec<RecallDelta>, BacktestError> {
    let key = |r: &BacktestReport| r.months.iter().map(|m| (m.peak_date, m.peak_hour)).collect::<Vec<_>>();
    let (ka, kb) = (key(a), key(b));
    if ka != kb {
        let first = ka
            .iter()
            .zip(&kb)
            .find(|(x, y)| x != y)
            .map_or(format!("{} vs {} months", ka.len(), kb.len()), |(x, y)| format!("{} vs {}", x.0, y.0));
        return Err(BacktestError::DayMismatch(first));
    }
    a.recall_by_month()
        .into_iter()
        .zip(b.recall_by_month())
        .map(|(ra, rb)| {
            let recall_a = recall(ra.model_hits, ra.peak_days - ra.model_hits)?;
            let recall_b = recall(rb.model_hits, rb.peak_days - rb.model_hits)?;
            Ok(RecallDelta {
                month: ra.month,
                peak_days: ra.peak_days,
                recall_a,
                recall_b,
                delta: recall_a - recall_b,
            })
        })
        .collect()
}

pub fn recall_csv(deltas: &[RecallDelta]) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["month", "recall_model", "recall_naive", "delta", "peak_days"])?;
    for d in deltas {
        w.write_record([
            d.month.to_string(),
            d.recall_a.to_string(),
            d.recall_b.to_string(),
            d.delta.to_string(),
            d.peak_days.to_string(),
        ])?;
    }
    into_string(w)
}
