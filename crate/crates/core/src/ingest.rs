//! Hourly load and weather ingestion.
//!
//! Load files carry one row per exact hour. Weather files carry raw station
//! observations at arbitrary minutes; [`align_to_hours`] maps them onto the
//! hour grid and [`merge_datasets`] joins both into [`HourlyRecord`]s with
//! derived humidity and calendar fields.
//!
//! Timestamps are local civil time. No DST arithmetic is done: a repeated
//! wall-clock hour collapses to the later row.

use std::io::{Read, Write};
use std::path::Path;

use chrono::{Datelike, Duration, NaiveDateTime, Timelike, Weekday};
use log::warn;
use thiserror::Error;

use crate::error::Error;

pub const LOAD_HEADER: [&str; 3] = ["timestamp", "actual_load_mwh", "forecast_load_mwh"];
pub const WEATHER_HEADER: [&str; 5] = ["timestamp", "temp_c", "dewpoint_c", "wind_mps", "visibility_km"];
pub const TABLE_HEADER: [&str; 7] = [
    "timestamp",
    "actual_load_mwh",
    "forecast_load_mwh",
    "temp_c",
    "dewpoint_c",
    "humidity_pct",
    "weekday_index",
];

/// Observations farther than this from an hour are never assigned to it.
pub const ALIGN_RADIUS_MINUTES: i64 = 90;
/// Longest run of missing weather hours that is bridged by interpolation.
pub const MAX_INTERPOLATED_GAP_HOURS: i64 = 3;
/// Dew point may exceed dry-bulb by this much before a row is rejected.
pub const DEW_POINT_TOLERANCE: f64 = 0.5;

const MAGNUS_A: f64 = 17.625;
const MAGNUS_B: f64 = 243.04;

const TIMESTAMP_OUT: &str = "%Y-%m-%dT%H:%M:%S";
const TIMESTAMP_IN: [&str; 4] = ["%Y-%m-%dT%H:%M:%S", "%Y-%m-%dT%H:%M", "%Y-%m-%d %H:%M:%S", "%Y-%m-%d %H:%M"];

#[derive(Debug, Error)]
pub enum IngestError {
    #[error("line {line}: {reason}")]
    MalformedRow { line: u64, reason: String },
    #[error("unexpected header {found:?}, expected {expected:?}")]
    BadHeader { expected: Vec<String>, found: Vec<String> },
    #[error("no observations to align")]
    EmptyInput,
    #[error("input is not sorted by timestamp")]
    Unsorted,
    #[error("load range and weather range do not overlap")]
    DisjointRanges,
    #[error("humidity domain error: {0}")]
    Domain(String),
    #[error("invalid record at {timestamp}: {reason}")]
    InvalidRecord { timestamp: NaiveDateTime, reason: String },
}

/// One row of the load file.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LoadPoint {
    pub timestamp: NaiveDateTime,
    pub actual_load: f64,
    pub forecast_load: f64,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RawWeatherObservation {
    pub timestamp: NaiveDateTime,
    pub dry_bulb_temp: f64,
    pub dew_point_temp: f64,
    pub wind_speed: Option<f64>,
    pub visibility: Option<f64>,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct WeatherPoint {
    pub temp: f64,
    pub dew_point: f64,
}

/// One slot of the hour grid produced by [`align_to_hours`].
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct HourlyWeather {
    pub timestamp: NaiveDateTime,
    /// `None` when no observation lies within the alignment radius.
    pub point: Option<WeatherPoint>,
    /// Timestamp of the observation the point was taken from.
    pub source: Option<NaiveDateTime>,
}

/// One aligned hour of load and weather.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct HourlyRecord {
    pub timestamp: NaiveDateTime,
    pub actual_load: f64,
    pub forecast_load: f64,
    pub temp: f64,
    pub dew_point: f64,
    pub humidity: f64,
    /// 1 on Saturday/Sunday.
    pub weekday_index: u8,
    pub month: u32,
    pub day_of_month: u32,
    pub hour: u32,
}

impl HourlyRecord {
    pub fn new(
        timestamp: NaiveDateTime,
        actual_load: f64,
        forecast_load: f64,
        temp: f64,
        dew_point: f64,
    ) -> Result<Self, IngestError> {
        let invalid = |reason: &str| IngestError::InvalidRecord {
            timestamp,
            reason: reason.to_string(),
        };
        if timestamp.minute() != 0 || timestamp.second() != 0 || timestamp.nanosecond() != 0 {
            return Err(invalid("timestamp is not an exact hour"));
        }
        if !(actual_load.is_finite() && actual_load > 0.0) {
            return Err(invalid("actual load must be positive"));
        }
        if !(forecast_load.is_finite() && forecast_load > 0.0) {
            return Err(invalid("forecast load must be positive"));
        }
        let humidity = compute_humidity(temp, dew_point)?;
        Ok(HourlyRecord {
            timestamp,
            actual_load,
            forecast_load,
            temp,
            dew_point,
            humidity,
            weekday_index: weekend_flag(timestamp),
            month: timestamp.month(),
            day_of_month: timestamp.day(),
            hour: timestamp.hour(),
        })
    }

    pub fn date(&self) -> chrono::NaiveDate {
        self.timestamp.date()
    }
}

pub fn weekend_flag(ts: NaiveDateTime) -> u8 {
    matches!(ts.weekday(), Weekday::Sat | Weekday::Sun) as u8
}

/// Relative humidity (percent) from dry-bulb `temp` and `dew_point`, both in °C,
/// using the Magnus-form approximation with coefficients 17.625 / 243.04.
///
/// A dew point up to [`DEW_POINT_TOLERANCE`] above the temperature is sensor
/// noise and yields exactly 100.
pub fn compute_humidity(temp: f64, dew_point: f64) -> Result<f64, IngestError> {
    if !temp.is_finite() || !dew_point.is_finite() {
        return Err(IngestError::Domain(format!("non-finite input T={temp}, DT={dew_point}")));
    }
    if MAGNUS_B + temp <= 0.0 || MAGNUS_B + dew_point <= 0.0 {
        return Err(IngestError::Domain(format!(
            "denominator not positive for T={temp}, DT={dew_point}"
        )));
    }
    if dew_point > temp + DEW_POINT_TOLERANCE {
        return Err(IngestError::Domain(format!(
            "dew point {dew_point} exceeds temperature {temp} beyond tolerance"
        )));
    }
    if dew_point >= temp {
        return Ok(100.0);
    }
    let exponent = MAGNUS_A * dew_point / (MAGNUS_B + dew_point) - MAGNUS_A * temp / (MAGNUS_B + temp);
    Ok((exponent.exp() * 100.0).min(100.0))
}

pub fn parse_timestamp(s: &str) -> Option<NaiveDateTime> {
    let s = s.trim();
    TIMESTAMP_IN
        .iter()
        .find_map(|fmt| NaiveDateTime::parse_from_str(s, fmt).ok())
}

pub fn format_timestamp(ts: NaiveDateTime) -> String {
    ts.format(TIMESTAMP_OUT).to_string()
}

fn check_header(reader: &mut csv::Reader<impl Read>, expected: &[&str]) -> Result<(), IngestError> {
    let found: Vec<String> = reader
        .headers()
        .map_err(|e| IngestError::MalformedRow {
            line: 1,
            reason: e.to_string(),
        })?
        .iter()
        .map(|h| h.trim().to_string())
        .collect();
    if found.iter().map(String::as_str).ne(expected.iter().copied()) {
        return Err(IngestError::BadHeader {
            expected: expected.iter().map(|s| s.to_string()).collect(),
            found,
        });
    }
    Ok(())
}

fn field(rec: &csv::StringRecord, idx: usize, line: u64) -> Result<&str, IngestError> {
    rec.get(idx).map(str::trim).ok_or_else(|| IngestError::MalformedRow {
        line,
        reason: format!("missing column {idx}"),
    })
}

fn number(rec: &csv::StringRecord, idx: usize, line: u64, name: &str) -> Result<f64, IngestError> {
    let raw = field(rec, idx, line)?;
    match raw.parse::<f64>() {
        Ok(v) if v.is_finite() => Ok(v),
        _ => Err(IngestError::MalformedRow {
            line,
            reason: format!("{name}: cannot parse {raw:?} as a number"),
        }),
    }
}

fn optional_number(rec: &csv::StringRecord, idx: usize, line: u64, name: &str) -> Result<Option<f64>, IngestError> {
    match rec.get(idx).map(str::trim) {
        None | Some("") => Ok(None),
        Some(_) => number(rec, idx, line, name).map(Some),
    }
}

fn timestamp(rec: &csv::StringRecord, line: u64) -> Result<NaiveDateTime, IngestError> {
    let raw = field(rec, 0, line)?;
    parse_timestamp(raw).ok_or_else(|| IngestError::MalformedRow {
        line,
        reason: format!("cannot parse timestamp {raw:?}"),
    })
}

fn csv_reader<R: Read>(input: R) -> csv::Reader<R> {
    csv::ReaderBuilder::new().flexible(true).trim(csv::Trim::All).from_reader(input)
}

fn line_of(rec: &csv::StringRecord) -> u64 {
    rec.position().map(|p| p.line()).unwrap_or(0)
}

fn row_error(e: csv::Error) -> IngestError {
    let line = e.position().map(|p| p.line()).unwrap_or(0);
    IngestError::MalformedRow {
        line,
        reason: e.to_string(),
    }
}

/// Stable sort by timestamp, then keep the last occurrence of every duplicate.
fn sort_dedup_last<T>(mut rows: Vec<T>, key: impl Fn(&T) -> NaiveDateTime, what: &str) -> Vec<T> {
    rows.sort_by_key(&key);
    let before = rows.len();
    let mut out: Vec<T> = Vec::with_capacity(rows.len());
    for row in rows {
        match out.last_mut() {
            Some(last) if key(last) == key(&row) => *last = row,
            _ => out.push(row),
        }
    }
    if out.len() < before {
        warn!("{what}: collapsed {} duplicated timestamps (kept last)", before - out.len());
    }
    out
}

pub fn read_load_csv<R: Read>(input: R) -> Result<Vec<LoadPoint>, IngestError> {
    let mut reader = csv_reader(input);
    check_header(&mut reader, &LOAD_HEADER)?;
    let mut rows = Vec::new();
    for rec in reader.records() {
        let rec = rec.map_err(row_error)?;
        let line = line_of(&rec);
        let ts = timestamp(&rec, line)?;
        if ts.minute() != 0 || ts.second() != 0 {
            return Err(IngestError::MalformedRow {
                line,
                reason: format!("load timestamp {ts} is not an exact hour"),
            });
        }
        let actual = number(&rec, 1, line, "actual_load_mwh")?;
        let forecast = number(&rec, 2, line, "forecast_load_mwh")?;
        if actual <= 0.0 || forecast <= 0.0 {
            return Err(IngestError::MalformedRow {
                line,
                reason: "load values must be positive".into(),
            });
        }
        rows.push(LoadPoint {
            timestamp: ts,
            actual_load: actual,
            forecast_load: forecast,
        });
    }
    Ok(sort_dedup_last(rows, |r| r.timestamp, "load"))
}

/// Reads a load CSV (`timestamp,actual_load_mwh,forecast_load_mwh`).
pub fn parse_load_csv(path: impl AsRef<Path>) -> Result<Vec<LoadPoint>, Error> {
    let path = path.as_ref();
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    Ok(read_load_csv(file)?)
}

pub fn read_weather_csv<R: Read>(input: R) -> Result<Vec<RawWeatherObservation>, IngestError> {
    let mut reader = csv_reader(input);
    check_header(&mut reader, &WEATHER_HEADER)?;
    let mut rows = Vec::new();
    for rec in reader.records() {
        let rec = rec.map_err(row_error)?;
        let line = line_of(&rec);
        let ts = timestamp(&rec, line)?;
        let temp = number(&rec, 1, line, "temp_c")?;
        let dew = number(&rec, 2, line, "dewpoint_c")?;
        if dew > temp + DEW_POINT_TOLERANCE {
            return Err(IngestError::MalformedRow {
                line,
                reason: format!("dew point {dew} above temperature {temp}"),
            });
        }
        rows.push(RawWeatherObservation {
            timestamp: ts,
            dry_bulb_temp: temp,
            dew_point_temp: dew,
            wind_speed: optional_number(&rec, 3, line, "wind_mps")?,
            visibility: optional_number(&rec, 4, line, "visibility_km")?,
        });
    }
    Ok(sort_dedup_last(rows, |r| r.timestamp, "weather"))
}

pub fn parse_weather_csv(path: impl AsRef<Path>) -> Result<Vec<RawWeatherObservation>, Error> {
    let path = path.as_ref();
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    Ok(read_weather_csv(file)?)
}

fn floor_hour(ts: NaiveDateTime) -> NaiveDateTime {
    ts.date().and_hms_opt(ts.hour(), 0, 0).expect("valid hour")
}

fn ceil_hour(ts: NaiveDateTime) -> NaiveDateTime {
    let f = floor_hour(ts);
    if f == ts {
        f
    } else {
        f + Duration::hours(1)
    }
}

/// Maps raw observations onto the exact-hour grid spanning them.
///
/// Each hour takes the observation closest in time; an exact tie goes to the
/// earlier observation. Hours with nothing within [`ALIGN_RADIUS_MINUTES`]
/// come back with `point == None`.
pub fn align_to_hours(obs: &[RawWeatherObservation]) -> Result<Vec<HourlyWeather>, IngestError> {
    let (first, last) = match (obs.first(), obs.last()) {
        (Some(f), Some(l)) => (f.timestamp, l.timestamp),
        _ => return Err(IngestError::EmptyInput),
    };
    if obs.windows(2).any(|w| w[0].timestamp > w[1].timestamp) {
        return Err(IngestError::Unsorted);
    }
    let radius = Duration::minutes(ALIGN_RADIUS_MINUTES);
    let mut out = Vec::new();
    let mut hour = floor_hour(first);
    let end = ceil_hour(last);
    while hour <= end {
        let idx = obs.partition_point(|o| o.timestamp <= hour);
        let before = idx.checked_sub(1).map(|i| &obs[i]);
        let after = obs.get(idx);
        let best = match (before, after) {
            (Some(b), Some(a)) => {
                if hour - b.timestamp <= a.timestamp - hour {
                    Some(b)
                } else {
                    Some(a)
                }
            }
            (b, a) => b.or(a),
        };
        let chosen = best.filter(|o| (o.timestamp - hour).abs() <= radius);
        out.push(HourlyWeather {
            timestamp: hour,
            point: chosen.map(|o| WeatherPoint {
                temp: o.dry_bulb_temp,
                dew_point: o.dew_point_temp,
            }),
            source: chosen.map(|o| o.timestamp),
        });
        hour += Duration::hours(1);
    }
    Ok(out)
}

/// Looks up weather for `hour`, interpolating linearly across short gaps.
pub(crate) fn weather_at(valid: &[(NaiveDateTime, WeatherPoint)], hour: NaiveDateTime) -> Option<WeatherPoint> {
    let idx = valid.partition_point(|(t, _)| *t < hour);
    if let Some((t, p)) = valid.get(idx) {
        if *t == hour {
            return Some(*p);
        }
    }
    let (t0, p0) = valid.get(idx.checked_sub(1)?)?;
    let (t1, p1) = valid.get(idx)?;
    let span = (*t1 - *t0).num_hours();
    if span - 1 > MAX_INTERPOLATED_GAP_HOURS {
        return None;
    }
    let w = (hour - *t0).num_minutes() as f64 / (*t1 - *t0).num_minutes() as f64;
    Some(WeatherPoint {
        temp: p0.temp + w * (p1.temp - p0.temp),
        dew_point: p0.dew_point + w * (p1.dew_point - p0.dew_point),
    })
}

/// Inner join of load hours with aligned weather.
///
/// Missing weather hours inside gaps of at most [`MAX_INTERPOLATED_GAP_HOURS`]
/// are linearly interpolated; hours in longer gaps are dropped and counted.
pub fn merge_datasets(load: &[LoadPoint], weather: &[HourlyWeather]) -> Result<Vec<HourlyRecord>, IngestError> {
    if load.windows(2).any(|w| w[0].timestamp >= w[1].timestamp)
        || weather.windows(2).any(|w| w[0].timestamp >= w[1].timestamp)
    {
        return Err(IngestError::Unsorted);
    }
    let valid: Vec<(NaiveDateTime, WeatherPoint)> = weather
        .iter()
        .filter_map(|w| w.point.map(|p| (w.timestamp, p)))
        .collect();
    let (Some(l0), Some(l1), Some(w0), Some(w1)) = (load.first(), load.last(), valid.first(), valid.last()) else {
        return Err(IngestError::DisjointRanges);
    };
    if l1.timestamp < w0.0 || w1.0 < l0.timestamp {
        return Err(IngestError::DisjointRanges);
    }

    let mut out = Vec::with_capacity(load.len());
    let mut dropped = 0usize;
    for lp in load {
        match weather_at(&valid, lp.timestamp) {
            Some(w) => out.push(HourlyRecord::new(
                lp.timestamp,
                lp.actual_load,
                lp.forecast_load,
                w.temp,
                w.dew_point,
            )?),
            None => dropped += 1,
        }
    }
    if dropped > 0 {
        warn!("merge: dropped {dropped} load hours without usable weather");
    }
    let gaps = find_gaps(&out);
    if !gaps.is_empty() {
        warn!("merge: unified table has {} gaps in the hourly series", gaps.len());
    }
    Ok(out)
}

/// Runs of missing hours between consecutive records, as `(first_missing, last_missing)`.
pub fn find_gaps(records: &[HourlyRecord]) -> Vec<(NaiveDateTime, NaiveDateTime)> {
    records
        .windows(2)
        .filter(|w| w[1].timestamp - w[0].timestamp > Duration::hours(1))
        .map(|w| (w[0].timestamp + Duration::hours(1), w[1].timestamp - Duration::hours(1)))
        .collect()
}

pub fn write_table_to<W: Write>(out: W, records: &[HourlyRecord]) -> Result<(), Error> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(TABLE_HEADER)?;
    for r in records {
        w.write_record([
            format_timestamp(r.timestamp),
            r.actual_load.to_string(),
            r.forecast_load.to_string(),
            r.temp.to_string(),
            r.dew_point.to_string(),
            r.humidity.to_string(),
            r.weekday_index.to_string(),
        ])?;
    }
    w.flush().map_err(|e| Error::io("<table>", e))?;
    Ok(())
}

pub fn write_table(path: impl AsRef<Path>, records: &[HourlyRecord]) -> Result<(), Error> {
    let path = path.as_ref();
    let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    write_table_to(std::io::BufWriter::new(file), records)
}

pub fn read_table_from<R: Read>(input: R) -> Result<Vec<HourlyRecord>, IngestError> {
    let mut reader = csv_reader(input);
    check_header(&mut reader, &TABLE_HEADER)?;
    let mut out: Vec<HourlyRecord> = Vec::new();
    for rec in reader.records() {
        let rec = rec.map_err(row_error)?;
        let line = line_of(&rec);
        let ts = timestamp(&rec, line)?;
        let bad = |reason: String| IngestError::MalformedRow { line, reason };
        let record = HourlyRecord::new(
            ts,
            number(&rec, 1, line, "actual_load_mwh")?,
            number(&rec, 2, line, "forecast_load_mwh")?,
            number(&rec, 3, line, "temp_c")?,
            number(&rec, 4, line, "dewpoint_c")?,
        )
        .map_err(|e| bad(e.to_string()))?;
        let stored = number(&rec, 5, line, "humidity_pct")?;
        if (stored - record.humidity).abs() > 1e-9 {
            return Err(bad(format!("humidity {stored} inconsistent with temperature and dew point")));
        }
        let flag = field(&rec, 6, line)?;
        if flag != record.weekday_index.to_string() {
            return Err(bad(format!("weekday_index {flag} inconsistent with timestamp")));
        }
        if let Some(prev) = out.last() {
            if prev.timestamp >= ts {
                return Err(bad("timestamps must be strictly increasing".into()));
            }
        }
        out.push(record);
    }
    Ok(out)
}

/// Reads a unified hourly table written by [`write_table`].
pub fn read_table(path: impl AsRef<Path>) -> Result<Vec<HourlyRecord>, Error> {
    let path = path.as_ref();
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    Ok(read_table_from(std::io::BufReader::new(file))?)
}

/// Parse, align, and merge in one call.
pub fn ingest_files(load: impl AsRef<Path>, weather: impl AsRef<Path>) -> Result<Vec<HourlyRecord>, Error> {
    let load = parse_load_csv(load)?;
    let obs = parse_weather_csv(weather)?;
    let hourly = align_to_hours(&obs)?;
    Ok(merge_datasets(&load, &hourly)?)
}
