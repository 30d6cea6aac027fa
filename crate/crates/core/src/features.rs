//! Predictor rows and labels for the peak-day and peak-hour classifiers.
//!
//! Peak-day rows describe an operating day `n` of a month with eight
//! predictors and two labels: `label_direct` (day `n` is the month's peak
//! day) and `label_up_to_date` (day `n` is the peak over days
//! `1..=min(n + 6, N)`). Peak-hour rows describe each of the 24 hours of a
//! day with 23 predictors and a label marking the day's actual peak hour.
//!
//! All argmax/rank ties resolve to the earliest day or hour.

use std::collections::BTreeMap;
use std::io::{Read, Write};

use chrono::{Datelike, Duration, NaiveDate};
use log::warn;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::ingest::HourlyRecord;

/// Days after the operating day covered by the look-ahead window.
pub const LOOKAHEAD_DAYS: u32 = 6;

pub const PEAK_DAY_PREDICTORS: [&str; 8] = [
    "load_max",
    "T_min",
    "T_max",
    "weekdayIdx",
    "prev_month_max",
    "prev_MAX",
    "T_min_day_2_to_7",
    "T_max_day_2_to_7",
];

pub const PEAK_HOUR_PREDICTORS: [&str; 23] = [
    "load_forecast",
    "T",
    "humidity",
    "weekendIdx",
    "peak_prev_day",
    "T_m_1",
    "T_m_2",
    "T_m_3",
    "T_p_1",
    "T_p_2",
    "T_p_3",
    "load_m_1",
    "load_m_2",
    "load_m_3",
    "load_p_1",
    "load_p_2",
    "load_p_3",
    "prev_max_load",
    "after_max_load",
    "rank_load_forecast",
    "rank_load_prevDay",
    "load_prevDay",
    "load_prevDay_forecast",
];

#[derive(Debug, Error, PartialEq)]
pub enum FeatureError {
    #[error("empty month")]
    EmptyMonth,
    #[error("day index {n} out of range for a month of {len} days")]
    IndexOutOfRange { n: u32, len: u32 },
    #[error("previous day {0} is not available")]
    InsufficientHistory(NaiveDate),
    #[error("previous day {0} is not available")]
    MissingPreviousDay(NaiveDate),
    #[error("day {0} does not have 24 hourly records")]
    IncompleteDay(NaiveDate),
    #[error("{year}-{month:02} is not fully covered by the table")]
    IncompleteMonth { year: i32, month: u32 },
    #[error("month {0} is not in 1..=12")]
    BadMonth(u32),
    #[error("line {line}: {reason}")]
    MalformedRow { line: u64, reason: String },
}

/// Complete days of the unified table, indexed by date.
#[derive(Clone, Debug, Default)]
pub struct DayTable {
    days: BTreeMap<NaiveDate, [HourlyRecord; 24]>,
}

impl DayTable {
    /// Groups records by calendar day; days missing any hour are left out.
    pub fn new(records: &[HourlyRecord]) -> Self {
        let mut partial: BTreeMap<NaiveDate, [Option<HourlyRecord>; 24]> = BTreeMap::new();
        for r in records {
            partial.entry(r.date()).or_insert([None; 24])[r.hour as usize] = Some(*r);
        }
        let mut days = BTreeMap::new();
        let mut incomplete = 0usize;
        for (date, hours) in partial {
            if hours.iter().all(Option::is_some) {
                days.insert(date, hours.map(|h| h.expect("checked")));
            } else {
                incomplete += 1;
            }
        }
        if incomplete > 0 {
            warn!("{incomplete} incomplete days excluded from the day table");
        }
        DayTable { days }
    }

    pub fn day(&self, date: NaiveDate) -> Option<&[HourlyRecord; 24]> {
        self.days.get(&date)
    }

    pub fn dates(&self) -> impl Iterator<Item = NaiveDate> + '_ {
        self.days.keys().copied()
    }

    pub fn len(&self) -> usize {
        self.days.len()
    }

    pub fn is_empty(&self) -> bool {
        self.days.is_empty()
    }

    /// Years with at least one day in `month`, ascending.
    pub fn years_with_month(&self, month: u32) -> Vec<i32> {
        let mut years: Vec<i32> = self.days.keys().filter(|d| d.month() == month).map(|d| d.year()).collect();
        years.dedup();
        years
    }

    pub fn years(&self) -> Vec<i32> {
        let mut years: Vec<i32> = self.days.keys().map(|d| d.year()).collect();
        years.dedup();
        years
    }

    pub fn month_complete(&self, year: i32, month: u32) -> bool {
        month_dates(year, month).is_some_and(|ds| ds.iter().all(|d| self.days.contains_key(d)))
    }
}

pub fn days_in_month(year: i32, month: u32) -> Option<u32> {
    let first = NaiveDate::from_ymd_opt(year, month, 1)?;
    let next = if month == 12 {
        NaiveDate::from_ymd_opt(year + 1, 1, 1)?
    } else {
        NaiveDate::from_ymd_opt(year, month + 1, 1)?
    };
    Some((next - first).num_days() as u32)
}

pub fn month_dates(year: i32, month: u32) -> Option<Vec<NaiveDate>> {
    let n = days_in_month(year, month)?;
    Some((1..=n).filter_map(|d| NaiveDate::from_ymd_opt(year, month, d)).collect())
}

/// Index of the first maximum.
pub fn argmax_first(values: &[f64]) -> Option<usize> {
    let mut best: Option<usize> = None;
    for (i, v) in values.iter().enumerate() {
        match best {
            Some(b) if *v <= values[b] => {}
            _ => best = Some(i),
        }
    }
    best
}

/// Descending ranks (1 = largest); equal values rank earlier index first.
pub fn descending_ranks(values: &[f64]) -> Vec<u32> {
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&a, &b| values[b].total_cmp(&values[a]).then(a.cmp(&b)));
    let mut ranks = vec![0u32; values.len()];
    for (pos, idx) in order.into_iter().enumerate() {
        ranks[idx] = pos as u32 + 1;
    }
    ranks
}

/// 1 exactly on the month's peak day (earliest on ties).
pub fn label_direct(month_days: &[f64]) -> Result<Vec<u8>, FeatureError> {
    let peak = argmax_first(month_days).ok_or(FeatureError::EmptyMonth)?;
    Ok((0..month_days.len()).map(|i| (i == peak) as u8).collect())
}

/// 1 iff day `n` (1-based) is the peak over days `1..=min(n + 6, days_in_month)`.
pub fn label_up_to_date(month_days: &[f64], n: u32, days_in_month: u32) -> Result<u8, FeatureError> {
    if n < 1 || n > days_in_month || days_in_month as usize > month_days.len() {
        return Err(FeatureError::IndexOutOfRange {
            n,
            len: days_in_month,
        });
    }
    let end = (n + LOOKAHEAD_DAYS).min(days_in_month) as usize;
    let peak = argmax_first(&month_days[..end]).ok_or(FeatureError::EmptyMonth)?;
    Ok((peak + 1 == n as usize) as u8)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PeakDayFeatureRow {
    pub date: NaiveDate,
    pub load_max: f64,
    pub t_min: f64,
    pub t_max: f64,
    pub weekday_idx: u8,
    pub prev_month_max: f64,
    pub prev_max: f64,
    pub t_min_day_2_to_7: f64,
    pub t_max_day_2_to_7: f64,
    pub label_direct: u8,
    pub label_up_to_date: u8,
    /// Day of month of the operating day.
    pub n: u32,
    /// Days in the month.
    pub days_in_month: u32,
}

impl PeakDayFeatureRow {
    pub fn predictors(&self) -> [f64; 8] {
        [
            self.load_max,
            self.t_min,
            self.t_max,
            self.weekday_idx as f64,
            self.prev_month_max,
            self.prev_max,
            self.t_min_day_2_to_7,
            self.t_max_day_2_to_7,
        ]
    }

    pub fn month(&self) -> u32 {
        self.date.month()
    }
}

struct DailySummary {
    actual_max: f64,
    forecast_max: f64,
    t_min: f64,
    t_max: f64,
}

fn summarize(day: &[HourlyRecord; 24]) -> DailySummary {
    let fold = |f: fn(&HourlyRecord) -> f64, init: f64, pick: fn(f64, f64) -> f64| {
        day.iter().map(f).fold(init, pick)
    };
    DailySummary {
        actual_max: fold(|r| r.actual_load, f64::NEG_INFINITY, f64::max),
        forecast_max: fold(|r| r.forecast_load, f64::NEG_INFINITY, f64::max),
        t_min: fold(|r| r.temp, f64::INFINITY, f64::min),
        t_max: fold(|r| r.temp, f64::NEG_INFINITY, f64::max),
    }
}

/// Peak-day rows for one year-month.
///
/// The look-ahead temperature window covers days `n+1..=n+6` clipped at month
/// end; on the last day of the month the window is empty and the operating
/// day's own extremes are used.
pub fn build_month_day_rows(table: &DayTable, year: i32, month: u32) -> Result<Vec<PeakDayFeatureRow>, FeatureError> {
    let dates = month_dates(year, month).ok_or(FeatureError::BadMonth(month))?;
    if !table.month_complete(year, month) {
        return Err(FeatureError::IncompleteMonth { year, month });
    }
    let prev_date = dates[0] - Duration::days(1);
    let prev_day = table.day(prev_date).ok_or(FeatureError::InsufficientHistory(prev_date))?;
    let prev_summary = summarize(prev_day);
    let summaries: Vec<DailySummary> = dates.iter().map(|d| summarize(table.day(*d).expect("complete"))).collect();
    let maxima: Vec<f64> = summaries.iter().map(|s| s.actual_max).collect();
    let direct = label_direct(&maxima)?;
    let n_days = dates.len() as u32;

    let mut rows = Vec::with_capacity(dates.len());
    let mut month_to_date = f64::NEG_INFINITY;
    for (i, date) in dates.iter().enumerate() {
        let n = i as u32 + 1;
        let s = &summaries[i];
        let prev_max = if i == 0 { prev_summary.actual_max } else { summaries[i - 1].actual_max };
        let prev_month_max = if i == 0 { prev_max } else { month_to_date };
        let window = &summaries[(i + 1).min(dates.len())..(i + 1 + LOOKAHEAD_DAYS as usize).min(dates.len())];
        let (t_min_ahead, t_max_ahead) = if window.is_empty() {
            (s.t_min, s.t_max)
        } else {
            (
                window.iter().map(|w| w.t_min).fold(f64::INFINITY, f64::min),
                window.iter().map(|w| w.t_max).fold(f64::NEG_INFINITY, f64::max),
            )
        };
        rows.push(PeakDayFeatureRow {
            date: *date,
            load_max: s.forecast_max,
            t_min: s.t_min,
            t_max: s.t_max,
            weekday_idx: table.day(*date).expect("complete")[0].weekday_index,
            prev_month_max,
            prev_max,
            t_min_day_2_to_7: t_min_ahead,
            t_max_day_2_to_7: t_max_ahead,
            label_direct: direct[i],
            label_up_to_date: label_up_to_date(&maxima, n, n_days)?,
            n,
            days_in_month: n_days,
        });
        month_to_date = month_to_date.max(s.actual_max);
    }
    Ok(rows)
}

/// Peak-day rows for `month` across every year the table covers.
///
/// Years whose month is incomplete or lacks the preceding day are skipped
/// with a warning; the call fails only when no year qualifies.
pub fn build_peak_day_rows(table: &DayTable, month: u32) -> Result<Vec<PeakDayFeatureRow>, FeatureError> {
    if !(1..=12).contains(&month) {
        return Err(FeatureError::BadMonth(month));
    }
    let mut rows = Vec::new();
    let mut last_err = FeatureError::EmptyMonth;
    for year in table.years_with_month(month) {
        match build_month_day_rows(table, year, month) {
            Ok(r) => rows.extend(r),
            Err(e) => {
                warn!("peak-day rows for {year}-{month:02} skipped: {e}");
                last_err = e;
            }
        }
    }
    if rows.is_empty() {
        return Err(last_err);
    }
    Ok(rows)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PeakHourFeatureRow {
    pub date: NaiveDate,
    pub hour: u32,
    pub load_forecast: f64,
    pub temp: f64,
    pub humidity: f64,
    pub weekend_idx: u8,
    pub peak_prev_day: u8,
    /// Temperatures at t-1, t-2, t-3.
    pub temp_before: [f64; 3],
    /// Temperatures at t+1, t+2, t+3.
    pub temp_after: [f64; 3],
    pub load_before: [f64; 3],
    pub load_after: [f64; 3],
    pub prev_max_load: f64,
    pub after_max_load: f64,
    pub rank_load_forecast: u32,
    pub rank_load_prev_day: u32,
    pub load_prev_day: f64,
    pub load_prev_day_forecast: f64,
    pub label: u8,
}

impl PeakHourFeatureRow {
    pub fn predictors(&self) -> [f64; 23] {
        [
            self.load_forecast,
            self.temp,
            self.humidity,
            self.weekend_idx as f64,
            self.peak_prev_day as f64,
            self.temp_before[0],
            self.temp_before[1],
            self.temp_before[2],
            self.temp_after[0],
            self.temp_after[1],
            self.temp_after[2],
            self.load_before[0],
            self.load_before[1],
            self.load_before[2],
            self.load_after[0],
            self.load_after[1],
            self.load_after[2],
            self.prev_max_load,
            self.after_max_load,
            self.rank_load_forecast as f64,
            self.rank_load_prev_day as f64,
            self.load_prev_day,
            self.load_prev_day_forecast,
        ]
    }
}

/// The 24 peak-hour rows of `date`.
///
/// Neighbouring-hour features read across midnight into the adjacent days.
/// When the following day is absent (end of data) the late hours repeat
/// hour 23 instead.
pub fn build_peak_hour_rows(table: &DayTable, date: NaiveDate) -> Result<Vec<PeakHourFeatureRow>, FeatureError> {
    let day = table.day(date).ok_or(FeatureError::IncompleteDay(date))?;
    let prev_date = date - Duration::days(1);
    let prev = table.day(prev_date).ok_or(FeatureError::MissingPreviousDay(prev_date))?;
    let next = table.day(date + Duration::days(1));

    // 72-hour window centred on the operating day.
    let at = |offset: i64| -> &HourlyRecord {
        match offset {
            o if o < 0 => &prev[(24 + o) as usize],
            o if o < 24 => &day[o as usize],
            o => match next {
                Some(n) => &n[(o - 24) as usize],
                None => &day[23],
            },
        }
    };

    let forecast: Vec<f64> = day.iter().map(|r| r.forecast_load).collect();
    let actual: Vec<f64> = day.iter().map(|r| r.actual_load).collect();
    let prev_actual: Vec<f64> = prev.iter().map(|r| r.actual_load).collect();
    let ranks = descending_ranks(&forecast);
    let prev_ranks = descending_ranks(&prev_actual);
    let peak = argmax_first(&actual).expect("24 hours");
    let prev_peak = argmax_first(&prev_actual).expect("24 hours");

    let rows = (0..24usize)
        .map(|t| {
            let ti = t as i64;
            let rec = &day[t];
            let prev_max_load = if t == 0 {
                forecast[0]
            } else {
                forecast[..t].iter().copied().fold(f64::NEG_INFINITY, f64::max)
            };
            let after_max_load = if t == 23 {
                forecast[23]
            } else {
                forecast[t + 1..].iter().copied().fold(f64::NEG_INFINITY, f64::max)
            };
            PeakHourFeatureRow {
                date,
                hour: t as u32,
                load_forecast: rec.forecast_load,
                temp: rec.temp,
                humidity: rec.humidity,
                weekend_idx: rec.weekday_index,
                peak_prev_day: (t == prev_peak) as u8,
                temp_before: [1, 2, 3].map(|k| at(ti - k).temp),
                temp_after: [1, 2, 3].map(|k| at(ti + k).temp),
                load_before: [1, 2, 3].map(|k| at(ti - k).forecast_load),
                load_after: [1, 2, 3].map(|k| at(ti + k).forecast_load),
                prev_max_load,
                after_max_load,
                rank_load_forecast: ranks[t],
                rank_load_prev_day: prev_ranks[t],
                load_prev_day: prev[t].actual_load,
                load_prev_day_forecast: prev[t].forecast_load,
                label: (t == peak) as u8,
            }
        })
        .collect();
    Ok(rows)
}

/// Peak-hour rows for every usable day of `month` across all years.
pub fn build_month_hour_rows(table: &DayTable, month: u32) -> Result<Vec<PeakHourFeatureRow>, FeatureError> {
    if !(1..=12).contains(&month) {
        return Err(FeatureError::BadMonth(month));
    }
    let mut rows = Vec::new();
    let mut skipped = 0usize;
    for date in table.dates().filter(|d| d.month() == month) {
        match build_peak_hour_rows(table, date) {
            Ok(r) => rows.extend(r),
            Err(_) => skipped += 1,
        }
    }
    if skipped > 0 {
        warn!("peak-hour rows for month {month}: {skipped} days without a previous day skipped");
    }
    if rows.is_empty() {
        return Err(FeatureError::EmptyMonth);
    }
    Ok(rows)
}

fn date_str(d: NaiveDate) -> String {
    d.format("%Y-%m-%d").to_string()
}

pub fn peak_day_csv_header() -> Vec<&'static str> {
    let mut h = vec!["date"];
    h.extend(PEAK_DAY_PREDICTORS);
    h.extend(["n", "N", "label_direct", "label_up_to_date"]);
    h
}

pub fn peak_hour_csv_header() -> Vec<&'static str> {
    let mut h = vec!["date", "hour"];
    h.extend(PEAK_HOUR_PREDICTORS);
    h.push("label");
    h
}

pub fn write_peak_day_rows<W: Write>(out: W, rows: &[PeakDayFeatureRow]) -> csv::Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(peak_day_csv_header())?;
    for r in rows {
        let mut rec = vec![date_str(r.date)];
        rec.extend(r.predictors().iter().map(f64::to_string));
        rec.extend([r.n, r.days_in_month, r.label_direct as u32, r.label_up_to_date as u32].map(|v| v.to_string()));
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_peak_hour_rows<W: Write>(out: W, rows: &[PeakHourFeatureRow]) -> csv::Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(peak_hour_csv_header())?;
    for r in rows {
        let mut rec = vec![date_str(r.date), r.hour.to_string()];
        rec.extend(r.predictors().iter().map(f64::to_string));
        rec.push(r.label.to_string());
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}

fn parse_fields(rec: &csv::StringRecord, line: u64) -> Result<(NaiveDate, Vec<f64>), FeatureError> {
    let bad = |reason: String| FeatureError::MalformedRow { line, reason };
    let date = NaiveDate::parse_from_str(rec.get(0).unwrap_or(""), "%Y-%m-%d").map_err(|e| bad(e.to_string()))?;
    let values = rec
        .iter()
        .skip(1)
        .map(|f| f.parse::<f64>().map_err(|e| bad(format!("{f:?}: {e}"))))
        .collect::<Result<Vec<_>, _>>()?;
    Ok((date, values))
}

fn read_rows<R: Read, T>(
    input: R,
    header: Vec<&'static str>,
    mut build: impl FnMut(NaiveDate, &[f64]) -> T,
) -> Result<Vec<T>, FeatureError> {
    let mut reader = csv::Reader::from_reader(input);
    let found: Vec<String> = reader
        .headers()
        .map_err(|e| FeatureError::MalformedRow { line: 1, reason: e.to_string() })?
        .iter()
        .map(str::to_string)
        .collect();
    if found.iter().map(String::as_str).ne(header.iter().copied()) {
        return Err(FeatureError::MalformedRow {
            line: 1,
            reason: format!("unexpected header {found:?}"),
        });
    }
    let mut out = Vec::new();
    for rec in reader.records() {
        let rec = rec.map_err(|e| FeatureError::MalformedRow { line: 0, reason: e.to_string() })?;
        let line = rec.position().map_or(0, |p| p.line());
        if rec.len() != header.len() {
            return Err(FeatureError::MalformedRow {
                line,
                reason: "wrong column count".into(),
            });
        }
        let (date, v) = parse_fields(&rec, line)?;
        out.push(build(date, &v));
    }
    Ok(out)
}

pub fn read_peak_day_rows<R: Read>(input: R) -> Result<Vec<PeakDayFeatureRow>, FeatureError> {
    read_rows(input, peak_day_csv_header(), |date, v| PeakDayFeatureRow {
        date,
        load_max: v[0],
        t_min: v[1],
        t_max: v[2],
        weekday_idx: v[3] as u8,
        prev_month_max: v[4],
        prev_max: v[5],
        t_min_day_2_to_7: v[6],
        t_max_day_2_to_7: v[7],
        n: v[8] as u32,
        days_in_month: v[9] as u32,
        label_direct: v[10] as u8,
        label_up_to_date: v[11] as u8,
    })
}

pub fn read_peak_hour_rows<R: Read>(input: R) -> Result<Vec<PeakHourFeatureRow>, FeatureError> {
    read_rows(input, peak_hour_csv_header(), |date, v| PeakHourFeatureRow {
        date,
        hour: v[0] as u32,
        load_forecast: v[1],
        temp: v[2],
        humidity: v[3],
        weekend_idx: v[4] as u8,
        peak_prev_day: v[5] as u8,
        temp_before: [v[6], v[7], v[8]],
        temp_after: [v[9], v[10], v[11]],
        load_before: [v[12], v[13], v[14]],
        load_after: [v[15], v[16], v[17]],
        prev_max_load: v[18],
        after_max_load: v[19],
        rank_load_forecast: v[20] as u32,
        rank_load_prev_day: v[21] as u32,
        load_prev_day: v[22],
        load_prev_day_forecast: v[23],
        label: v[24] as u8,
    })
}

#[cfg(test)]
pub(crate) mod tests {
    use super::*;
    use chrono::NaiveDateTime;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    pub(crate) fn record(ts: NaiveDateTime, actual: f64, forecast: f64, temp: f64) -> HourlyRecord {
        HourlyRecord::new(ts, actual, forecast, temp, temp - 3.0).unwrap()
    }

    /// Hourly table from `start` for `days` days with load given by `f(day_index, hour)`.
    pub(crate) fn table_with(start: NaiveDate, days: i64, f: impl Fn(i64, u32) -> (f64, f64, f64)) -> Vec<HourlyRecord> {
        let mut out = Vec::new();
        for d in 0..days {
            let date = start + Duration::days(d);
            for h in 0..24 {
                let (a, fc, t) = f(d, h);
                out.push(record(date.and_hms_opt(h, 0, 0).unwrap(), a, fc, t));
            }
        }
        out
    }

    fn scan_up_to_date(maxima: &[f64], n: usize) -> u8 {
        let end = (n + 6).min(maxima.len());
        let mut best = 0;
        for i in 0..end {
            if maxima[i] > maxima[best] {
                best = i;
            }
        }
        (best + 1 == n) as u8
    }

    #[test]
    fn direct_labels() {
        assert_eq!(label_direct(&[3.0, 5.0, 4.0]).unwrap(), vec![0, 1, 0]);
        assert_eq!(label_direct(&[5.0, 5.0, 4.0]).unwrap(), vec![1, 0, 0]);
        assert_eq!(label_direct(&[]), Err(FeatureError::EmptyMonth));
    }

    #[test]
    fn up_to_date_labels() {
        let mut m = vec![1.0, 2.0, 9.0, 3.0, 4.0, 5.0, 6.0, 7.0, 8.0];
        m.extend((0..22).map(|i| 20.0 + i as f64));
        assert_eq!(label_up_to_date(&m, 3, 31).unwrap(), 1);
        let direct = label_direct(&m).unwrap();
        assert_eq!(label_up_to_date(&m, 31, 31).unwrap(), direct[30]);
        assert!(label_up_to_date(&m, 0, 31).is_err());
        assert!(label_up_to_date(&m, 32, 31).is_err());
    }

    #[test]
    fn random_labels_match_scan() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..200 {
            let len = rng.random_range(28..=31);
            let m: Vec<f64> = (0..len).map(|_| rng.random_range(0..20) as f64).collect();
            let direct = label_direct(&m).unwrap();
            for n in 1..=len {
                assert_eq!(label_up_to_date(&m, n as u32, len as u32).unwrap(), scan_up_to_date(&m, n));
            }
            assert_eq!(label_up_to_date(&m, len as u32, len as u32).unwrap(), direct[len - 1]);
        }
    }

    #[test]
    fn ranks_and_ties() {
        let dec: Vec<f64> = (0..24).map(|h| 100.0 - h as f64).collect();
        assert_eq!(descending_ranks(&dec), (1..=24).collect::<Vec<u32>>());
        let flat = vec![5.0; 24];
        assert_eq!(descending_ranks(&flat), (1..=24).collect::<Vec<u32>>());
    }

    fn july_table() -> DayTable {
        // June 30 + July + 6 days of August; July 17 is the hottest day.
        let start = NaiveDate::from_ymd_opt(2019, 6, 30).unwrap();
        let recs = table_with(start, 38, |d, h| {
            let bump = if d == 17 { 500.0 } else { (d % 5) as f64 * 10.0 };
            let a = 8000.0 + bump + 100.0 * (-(h as f64 - 12.0).abs()).exp();
            (a, a - 5.0, 25.0 + d as f64 * 0.1 + h as f64 * 0.01)
        });
        DayTable::new(&recs)
    }

    #[test]
    fn peak_day_rows_shape() {
        let table = july_table();
        let rows = build_peak_day_rows(&table, 7).unwrap();
        assert_eq!(rows.len(), 31);
        assert_eq!(rows.iter().map(|r| r.label_direct as u32).sum::<u32>(), 1);
        assert_eq!(rows[16].label_direct, 1);
        assert_eq!(rows[16].date, NaiveDate::from_ymd_opt(2019, 7, 17).unwrap());
        // day 1 falls back to the previous day's maximum
        assert_eq!(rows[0].prev_month_max, rows[0].prev_max);
        for r in &rows {
            assert!(r.t_min <= r.t_max && r.t_min_day_2_to_7 <= r.t_max_day_2_to_7);
            assert!(r.n >= 1 && r.n <= r.days_in_month);
        }
        assert_eq!(rows[30].label_up_to_date, rows[30].label_direct);
    }

    #[test]
    fn constant_load_month() {
        let start = NaiveDate::from_ymd_opt(2019, 1, 31).unwrap();
        let recs = table_with(start, 29, |_, _| (7000.0, 7100.0, 5.0));
        let rows = build_peak_day_rows(&DayTable::new(&recs), 2).unwrap();
        assert!(rows.iter().all(|r| r.load_max == 7100.0));
        assert_eq!(rows[0].label_direct, 1);
    }

    #[test]
    fn missing_previous_day() {
        let start = NaiveDate::from_ymd_opt(2019, 7, 1).unwrap();
        let recs = table_with(start, 31, |_, _| (1.0, 1.0, 1.0));
        let err = build_peak_day_rows(&DayTable::new(&recs), 7).unwrap_err();
        assert_eq!(err, FeatureError::InsufficientHistory(NaiveDate::from_ymd_opt(2019, 6, 30).unwrap()));
    }

    #[test]
    fn peak_day_rows_ignore_data_beyond_window() {
        let table = july_table();
        let base = build_month_day_rows(&table, 2019, 7).unwrap();
        for n in [1usize, 10, 20] {
            // perturb every hour from day n+7 onward (temperature only: labels
            // legitimately depend on the window maxima)
            let start = NaiveDate::from_ymd_opt(2019, 6, 30).unwrap();
            let recs = table_with(start, 38, |d, h| {
                let bump = if d == 17 { 500.0 } else { (d % 5) as f64 * 10.0 };
                let a = 8000.0 + bump + 100.0 * (-(h as f64 - 12.0).abs()).exp();
                let extra = if d > n as i64 + 6 { 40.0 } else { 0.0 };
                (a, a - 5.0, 25.0 + d as f64 * 0.1 + h as f64 * 0.01 - extra)
            });
            let rows = build_month_day_rows(&DayTable::new(&recs), 2019, 7).unwrap();
            assert_eq!(rows[n - 1], base[n - 1]);
        }
    }

    #[test]
    fn peak_hour_rows_basics() {
        let start = NaiveDate::from_ymd_opt(2019, 7, 1).unwrap();
        let recs = table_with(start, 3, |d, h| {
            let a = 5000.0 + if h == 17 { 300.0 } else { h as f64 };
            let fc = if d == 1 { 9000.0 - h as f64 } else { a };
            (a, fc, 20.0 + h as f64)
        });
        let table = DayTable::new(&recs);
        let date = start + Duration::days(1);
        let rows = build_peak_hour_rows(&table, date).unwrap();
        assert_eq!(rows.len(), 24);
        assert_eq!(rows.iter().map(|r| r.rank_load_forecast).collect::<Vec<_>>(), (1..=24).collect::<Vec<_>>());
        assert_eq!(rows.iter().map(|r| r.label as u32).sum::<u32>(), 1);
        assert_eq!(rows[17].label, 1);
        assert_eq!(rows[17].peak_prev_day, 1);
        assert_eq!(rows[0].prev_max_load, rows[0].load_forecast);
        assert_eq!(rows[23].after_max_load, rows[23].load_forecast);
        // hour 0 reads hour 23 of the previous day
        assert_eq!(rows[0].temp_before[0], 43.0);
        assert_eq!(rows[23].temp_after[0], 20.0);
        assert_eq!(rows[5].prev_max_load, 9000.0);
        assert!(matches!(
            build_peak_hour_rows(&table, start),
            Err(FeatureError::MissingPreviousDay(_))
        ));
    }

    #[test]
    fn csv_round_trip() {
        let table = july_table();
        let rows = build_peak_day_rows(&table, 7).unwrap();
        let mut buf = Vec::new();
        write_peak_day_rows(&mut buf, &rows).unwrap();
        assert_eq!(read_peak_day_rows(buf.as_slice()).unwrap(), rows);

        let hours = build_month_hour_rows(&table, 7).unwrap();
        let mut buf = Vec::new();
        write_peak_hour_rows(&mut buf, &hours).unwrap();
        assert_eq!(read_peak_hour_rows(buf.as_slice()).unwrap(), hours);
    }
}
