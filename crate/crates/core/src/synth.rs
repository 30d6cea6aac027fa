//! Synthetic hourly weather and load with known structure.
//!
//! Weather: temperature is a seasonal cycle plus a diurnal cycle (peaking at
//! 15:00) plus a daily AR(1) synoptic anomaly, interpolated hourly, plus small
//! hourly AR(1) noise. The dew point sits below it by a depression that follows
//! its own daily AR(1) process and widens in the afternoon. Observations are
//! reported at minute 51 of the preceding hour, rounded to 0.1 °C, with some
//! reports missing and some extra mid-hour reports.
//!
//! Load: a base level shaped by a calendar-driven diurnal profile (winter
//! morning/evening peaks, summer afternoon peak) and a weekend factor, plus a
//! heating response below 14 °C and a cooling response above 21 °C of a
//! lagged effective temperature, plus a daily level shock and hourly AR(1)
//! noise.
//!
//! Day-ahead forecast: the same structure evaluated on a forecast temperature
//! (actual plus a daily AR(1) error and hourly noise) with a damped
//! temperature response, plus its own noise. It therefore under-reacts to
//! temperature extremes.

use std::f64::consts::TAU;
use std::path::{Path, PathBuf};

use chrono::{Datelike, Duration, NaiveDate, NaiveDateTime, Timelike, Weekday};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ingest::{format_timestamp, LoadPoint, RawWeatherObservation, LOAD_HEADER, WEATHER_HEADER};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SynthConfig {
    pub start_year: i32,
    pub years: u32,
    pub seed: u64,
    /// Mean base load (MWh) before temperature response.
    pub base_load: f64,
    /// Probability that an hourly report is missing.
    pub missing_rate: f64,
    /// Probability of an extra mid-hour report.
    pub extra_rate: f64,
    /// Standard deviation of the daily forecast-temperature error (°C).
    pub forecast_temp_error: f64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig {
            start_year: 2000,
            years: 21,
            seed: 7,
            base_load: 10_000.0,
            missing_rate: 0.01,
            extra_rate: 0.03,
            forecast_temp_error: 1.2,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SynthData {
    pub load: Vec<LoadPoint>,
    pub weather: Vec<RawWeatherObservation>,
}

/// Gaussian bump on the 24-hour circle.
fn bump(hour: f64, centre: f64, width: f64) -> f64 {
    let d = (hour - centre + 36.0).rem_euclid(24.0) - 12.0;
    (-0.5 * (d / width).powi(2)).exp()
}

/// Seasonal phase: 1 in mid July, -1 in mid January.
fn season(date: NaiveDate) -> f64 {
    (TAU * (date.ordinal() as f64 - 197.0) / 365.25).cos()
}

struct Response {
    heating: f64,
    cooling: f64,
    /// Hour at which the cooling response is strongest.
    cooling_peak: f64,
    heating_peak: f64,
}

// The forecast model places the weather-driven peaks earlier than they occur.
const ACTUAL: Response = Response { heating: 260.0, cooling: 240.0, cooling_peak: 18.0, heating_peak: 8.0 };
const FORECAST: Response = Response { heating: 235.0, cooling: 215.0, cooling_peak: 16.0, heating_peak: 7.0 };

fn load_shape(ts: NaiveDateTime, base: f64, t_eff: f64, r: &Response) -> f64 {
    let h = ts.hour() as f64;
    let summer = ((season(ts.date()) + 0.2) / 1.0).clamp(0.0, 1.0);
    let winter_profile = 0.80 + 0.13 * bump(h, 7.5, 1.6) + 0.17 * bump(h, 19.0, 2.2) - 0.08 * bump(h, 3.5, 2.5);
    let summer_profile = 0.78 + 0.24 * bump(h, 16.5, 3.6) - 0.06 * bump(h, 4.5, 2.5);
    let profile = (1.0 - summer) * winter_profile + summer * summer_profile;
    let weekend = match ts.weekday() {
        Weekday::Sat => 0.93,
        Weekday::Sun => 0.90,
        _ => 1.0,
    };
    let heat = r.heating * (14.0 - t_eff).max(0.0).powf(1.15) * (0.8 + 0.45 * bump(h, r.heating_peak, 2.0));
    let cool = r.cooling * (t_eff - 21.0).max(0.0).powf(1.25) * (0.65 + 0.55 * bump(h, r.cooling_peak, 3.0));
    base * profile * weekend + heat + cool
}

/// AR(1) step with stationary standard deviation `sd`.
fn ar(prev: f64, phi: f64, sd: f64, z: f64) -> f64 {
    phi * prev + sd * (1.0 - phi * phi).sqrt() * z
}

pub fn generate(cfg: &SynthConfig) -> SynthData {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let normal = Normal::new(0.0, 1.0).expect("unit normal");
    let z = move |rng: &mut ChaCha8Rng| normal.sample(rng);

    let start = NaiveDate::from_ymd_opt(cfg.start_year, 1, 1).expect("start year");
    let end = NaiveDate::from_ymd_opt(cfg.start_year + cfg.years as i32, 1, 1).expect("end year");
    let n_days = (end - start).num_days() as usize;

    // daily processes, one extra day for interpolation
    let mut anomaly = vec![0.0; n_days + 1];
    let mut depression = vec![0.0; n_days + 1];
    let mut fc_error = vec![0.0; n_days + 1];
    let mut level = vec![0.0; n_days + 1];
    let (mut a, mut d, mut e, mut l) = (0.0, 0.0, 0.0, 0.0);
    for i in 0..=n_days {
        let s = season(start + Duration::days(i as i64));
        a = ar(a, 0.75, 3.4 - 0.9 * s, z(&mut rng));
        d = ar(d, 0.6, 1.5, z(&mut rng));
        e = ar(e, 0.5, cfg.forecast_temp_error, z(&mut rng));
        l = ar(l, 0.5, 0.012, z(&mut rng));
        anomaly[i] = a;
        depression[i] = d;
        fc_error[i] = e;
        level[i] = l;
    }

    let n_hours = n_days * 24;
    let first = start.and_hms_opt(0, 0, 0).expect("midnight");
    let mut temps = Vec::with_capacity(n_hours);
    let mut dews = Vec::with_capacity(n_hours);
    let mut load = Vec::with_capacity(n_hours);
    let (mut hourly_t, mut hourly_l, mut hourly_f) = (0.0, 0.0, 0.0);
    let (mut ema, mut ema_f) = (f64::NAN, f64::NAN);
    for k in 0..n_hours {
        let ts = first + Duration::hours(k as i64);
        let day = k / 24;
        let h = ts.hour() as f64;
        let s = season(ts.date());
        // anomaly anchored at noon of each day
        let frac = (h - 12.0) / 24.0;
        let syn = if frac < 0.0 {
            let prev = if day == 0 { anomaly[0] } else { anomaly[day - 1] };
            anomaly[day] + (anomaly[day] - prev) * frac
        } else {
            anomaly[day] + (anomaly[day + 1] - anomaly[day]) * frac
        };
        hourly_t = ar(hourly_t, 0.7, 0.4, z(&mut rng));
        let diurnal = (5.5 + 1.0 * s) * (TAU * (h - 15.0) / 24.0).cos();
        let temp = 15.5 + 11.0 * s + diurnal + syn + hourly_t;
        let dep = (3.5 - 1.0 * s + depression[day]).max(0.3) + 1.5 * (TAU * (h - 15.0) / 24.0).cos().max(0.0);
        temps.push(temp);
        dews.push(temp - dep);

        let t_fc = temp + fc_error[day] + 0.4 * z(&mut rng);
        ema = if ema.is_nan() { temp } else { ema + (temp - ema) / 12.0 };
        ema_f = if ema_f.is_nan() { t_fc } else { ema_f + (t_fc - ema_f) / 12.0 };
        let t_eff = 0.6 * temp + 0.4 * ema;
        let t_eff_fc = 0.6 * t_fc + 0.4 * ema_f;

        hourly_l = ar(hourly_l, 0.9, 0.008, z(&mut rng));
        hourly_f = ar(hourly_f, 0.8, 0.008, z(&mut rng));
        let actual = load_shape(ts, cfg.base_load, t_eff, &ACTUAL) * (1.0 + level[day] + hourly_l);
        let forecast = load_shape(ts, cfg.base_load, t_eff_fc, &FORECAST) * (1.0 + hourly_f);
        load.push(LoadPoint {
            timestamp: ts,
            actual_load: round_to(actual.max(1.0), 1.0),
            forecast_load: round_to(forecast.max(1.0), 1.0),
        });
    }

    let mut weather = Vec::with_capacity(n_hours + n_hours / 20);
    let mut k = 0;
    while k < n_hours {
        let ts = first + Duration::hours(k as i64);
        if rng.random_bool(cfg.missing_rate) {
            // drop a run of one or two reports
            k += rng.random_range(1..=2);
            continue;
        }
        weather.push(observation(ts - Duration::minutes(9), temps[k], dews[k], &mut rng));
        if k + 1 < n_hours && rng.random_bool(cfg.extra_rate) {
            let w = 20.0 / 60.0;
            let t = temps[k] + w * (temps[k + 1] - temps[k]);
            let dp = dews[k] + w * (dews[k + 1] - dews[k]);
            weather.push(observation(ts + Duration::minutes(20), t, dp, &mut rng));
        }
        k += 1;
    }
    SynthData { load, weather }
}

fn round_to(v: f64, step: f64) -> f64 {
    (v / step).round() * step
}

fn observation(ts: NaiveDateTime, temp: f64, dew: f64, rng: &mut ChaCha8Rng) -> RawWeatherObservation {
    let temp = round_to(temp, 0.1);
    RawWeatherObservation {
        timestamp: ts,
        dry_bulb_temp: temp,
        dew_point_temp: round_to(dew, 0.1).min(temp),
        wind_speed: Some(round_to(rng.random_range(0.0..8.0), 0.1)),
        visibility: Some(if rng.random_bool(0.9) { 16.0 } else { round_to(rng.random_range(1.0..16.0), 0.1) }),
    }
}

fn write_csv(path: &Path, header: &[&str], rows: impl Iterator<Item = Vec<String>>) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(header)?;
    for r in rows {
        w.write_record(r)?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

impl SynthData {
    /// Writes `load.csv` and `weather.csv` into `dir`; returns their paths.
    pub fn write(&self, dir: impl AsRef<Path>) -> Result<(PathBuf, PathBuf)> {
        let dir = dir.as_ref();
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let load_path = dir.join("load.csv");
        let weather_path = dir.join("weather.csv");
        write_csv(
            &load_path,
            &LOAD_HEADER,
            self.load
                .iter()
                .map(|p| vec![format_timestamp(p.timestamp), p.actual_load.to_string(), p.forecast_load.to_string()]),
        )?;
        let opt = |v: Option<f64>| v.map_or(String::new(), |v| v.to_string());
        write_csv(
            &weather_path,
            &WEATHER_HEADER,
            self.weather.iter().map(|o| {
                vec![
                    format_timestamp(o.timestamp),
                    o.dry_bulb_temp.to_string(),
                    o.dew_point_temp.to_string(),
                    opt(o.wind_speed),
                    opt(o.visibility),
                ]
            }),
        )?;
        Ok((load_path, weather_path))
    }
}
