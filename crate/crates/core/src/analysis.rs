//! Exploratory diagnostics: correlation-matrix PCA, R² of daily peak load
//! against temperature extremes, and monthly peak-hour histograms.

use std::path::Path;

use chrono::Datelike;
use log::warn;
use nalgebra::{DMatrix, SymmetricEigen};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::error::{Error, Result};
use crate::features::{argmax_first, build_peak_day_rows, DayTable, PEAK_DAY_PREDICTORS};
use crate::learners::Matrix;
use crate::par::{self, Execution};

#[derive(Debug, Error)]
pub enum AnalysisError {
    #[error("need at least {needed} rows, got {got}")]
    TooFewRows { needed: usize, got: usize },
    #[error("every column is constant")]
    RankDeficient,
    #[error("{0} is constant")]
    ConstantInput(&'static str),
    #[error("length mismatch: {0} vs {1}")]
    LengthMismatch(usize, usize),
    #[error("no days of month {0} in the table")]
    EmptyMonth(u32),
    #[error("eigendecomposition produced non-finite values")]
    Eigen,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PcaResult {
    /// Columns of the input that were kept (non-constant).
    pub features: Vec<usize>,
    pub means: Vec<f64>,
    pub scales: Vec<f64>,
    /// `loadings[f][c]`: weight of kept feature `f` in component `c`.
    pub loadings: Vec<Vec<f64>>,
    pub eigenvalues: Vec<f64>,
    pub explained_variance_ratio: Vec<f64>,
}

impl PcaResult {
    pub fn n_components(&self) -> usize {
        self.eigenvalues.len()
    }

    fn standardize(&self, row: &[f64]) -> Vec<f64> {
        self.features
            .iter()
            .enumerate()
            .map(|(k, &j)| (row[j] - self.means[k]) / self.scales[k])
            .collect()
    }

    /// Component scores of one input row.
    pub fn transform(&self, row: &[f64]) -> Vec<f64> {
        let z = self.standardize(row);
        (0..self.n_components())
            .map(|c| z.iter().zip(&self.loadings).map(|(v, l)| v * l[c]).sum())
            .collect()
    }

    /// Standardised row rebuilt from component scores.
    pub fn reconstruct(&self, scores: &[f64]) -> Vec<f64> {
        self.loadings
            .iter()
            .map(|l| l.iter().zip(scores).map(|(a, s)| a * s).sum())
            .collect()
    }

    /// The row standardised as the fit saw it.
    pub fn standardized(&self, row: &[f64]) -> Vec<f64> {
        self.standardize(row)
    }
}

/// PCA of the correlation matrix, keeping `k` components (all when `k` exceeds the rank).
///
/// Components come in descending eigenvalue order and each is signed so that
/// its largest-magnitude loading is positive.
pub fn pca(x: &Matrix, k: usize) -> std::result::Result<PcaResult, AnalysisError> {
    let n = x.rows();
    if n < 2 {
        return Err(AnalysisError::TooFewRows { needed: 2, got: n });
    }
    let mut features = Vec::new();
    let mut means = Vec::new();
    let mut scales = Vec::new();
    for j in 0..x.cols() {
        let col = x.column(j);
        let mean = col.iter().sum::<f64>() / n as f64;
        let var = col.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
        if var > 1e-24 * mean.abs().max(1.0).powi(2) {
            features.push(j);
            means.push(mean);
            scales.push(var.sqrt());
        } else {
            warn!("pca: column {j} is constant and was dropped");
        }
    }
    if features.is_empty() {
        return Err(AnalysisError::RankDeficient);
    }
    let p = features.len();
    let z = DMatrix::from_fn(n, p, |i, k| (x.get(i, features[k]) - means[k]) / scales[k]);
    let corr = (z.transpose() * &z) / (n - 1) as f64;
    let eig = SymmetricEigen::new(corr);
    if eig.eigenvalues.iter().any(|v| !v.is_finite()) {
        return Err(AnalysisError::Eigen);
    }
    let mut order: Vec<usize> = (0..p).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]).then(a.cmp(&b)));
    let k = k.clamp(1, p);
    let order = &order[..k];

    let trace = p as f64;
    let mut loadings = vec![vec![0.0; k]; p];
    for (c, &e) in order.iter().enumerate() {
        let col = eig.eigenvectors.column(e);
        let mut lead = 0;
        for f in 1..p {
            if col[f].abs() > col[lead].abs() {
                lead = f;
            }
        }
        let sign = if col[lead] < 0.0 { -1.0 } else { 1.0 };
        for f in 0..p {
            loadings[f][c] = sign * col[f];
        }
    }
    let eigenvalues: Vec<f64> = order.iter().map(|&e| eig.eigenvalues[e].max(0.0)).collect();
    Ok(PcaResult {
        features,
        means,
        scales,
        loadings,
        explained_variance_ratio: eigenvalues.iter().map(|v| v / trace).collect(),
        eigenvalues,
    })
}

/// Coefficient of determination of the least-squares line of `y` on `x`.
pub fn r_squared(x: &[f64], y: &[f64]) -> std::result::Result<f64, AnalysisError> {
    if x.len() != y.len() {
        return Err(AnalysisError::LengthMismatch(x.len(), y.len()));
    }
    if x.len() < 3 {
        return Err(AnalysisError::TooFewRows { needed: 3, got: x.len() });
    }
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let sxx: f64 = x.iter().map(|v| (v - mx).powi(2)).sum();
    let syy: f64 = y.iter().map(|v| (v - my).powi(2)).sum();
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    if sxx <= 1e-24 * mx.abs().max(1.0).powi(2) * n {
        return Err(AnalysisError::ConstantInput("x"));
    }
    if syy <= 1e-24 * my.abs().max(1.0).powi(2) * n {
        return Err(AnalysisError::ConstantInput("y"));
    }
    Ok((sxy * sxy / (sxx * syy)).min(1.0))
}

/// Counts of the actual daily peak hour over every day of `month` in the table.
pub fn peak_hour_histogram(table: &DayTable, month: u32) -> std::result::Result<[usize; 24], AnalysisError> {
    let mut bins = [0usize; 24];
    let mut days = 0;
    for date in table.dates().filter(|d| d.month() == month) {
        let day = table.day(date).expect("listed date");
        let loads: Vec<f64> = day.iter().map(|r| r.actual_load).collect();
        bins[argmax_first(&loads).expect("24 hours")] += 1;
        days += 1;
    }
    if days == 0 {
        return Err(AnalysisError::EmptyMonth(month));
    }
    Ok(bins)
}

/// R² of daily actual peak load against daily minimum and maximum temperature.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TemperatureFit {
    pub month: u32,
    pub days: usize,
    pub r2_t_min: f64,
    pub r2_t_max: f64,
}

pub fn temperature_fit(table: &DayTable, month: u32) -> std::result::Result<TemperatureFit, AnalysisError> {
    let (mut peak, mut tmin, mut tmax) = (Vec::new(), Vec::new(), Vec::new());
    for date in table.dates().filter(|d| d.month() == month) {
        let day = table.day(date).expect("listed date");
        peak.push(day.iter().map(|r| r.actual_load).fold(f64::NEG_INFINITY, f64::max));
        tmin.push(day.iter().map(|r| r.temp).fold(f64::INFINITY, f64::min));
        tmax.push(day.iter().map(|r| r.temp).fold(f64::NEG_INFINITY, f64::max));
    }
    if peak.is_empty() {
        return Err(AnalysisError::EmptyMonth(month));
    }
    Ok(TemperatureFit {
        month,
        days: peak.len(),
        r2_t_min: r_squared(&tmin, &peak)?,
        r2_t_max: r_squared(&tmax, &peak)?,
    })
}

/// Everything `report` writes.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DiagnosticReport {
    pub temperature: Vec<TemperatureFit>,
    pub histograms: Vec<(u32, [usize; 24])>,
    /// PCA of the peak-day predictors pooled over all months.
    pub pca: PcaResult,
}

pub fn diagnostics(table: &DayTable, exec: Execution) -> Result<DiagnosticReport> {
    let per_month: Vec<_> = par::map_range(exec, 12, |i| {
        let month = i as u32 + 1;
        (month, temperature_fit(table, month), peak_hour_histogram(table, month))
    });
    let mut temperature = Vec::new();
    let mut histograms = Vec::new();
    for (month, fit, hist) in per_month {
        match (fit, hist) {
            (Ok(f), Ok(h)) => {
                temperature.push(f);
                histograms.push((month, h));
            }
            (Err(AnalysisError::EmptyMonth(_)), _) | (_, Err(AnalysisError::EmptyMonth(_))) => {}
            (Err(e), _) | (_, Err(e)) => warn!("diagnostics for month {month} skipped: {e}"),
        }
    }
    let mut rows = Vec::new();
    for month in 1..=12 {
        if let Ok(r) = build_peak_day_rows(table, month) {
            rows.extend(r.iter().map(|r| r.predictors()));
        }
    }
    let pca = pca(&Matrix::from_rows(&rows)?, PEAK_DAY_PREDICTORS.len())?;
    Ok(DiagnosticReport { temperature, histograms, pca })
}

impl DiagnosticReport {
    /// Writes `r_squared.csv`, `peak_hour_histogram.csv`, `pca_loadings.csv` and `pca_variance.csv`.
    pub fn save(&self, dir: impl AsRef<Path>) -> Result<()> {
        let dir = dir.as_ref();
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let write = |name: &str, header: Vec<String>, rows: Vec<Vec<String>>| -> Result<()> {
            let path = dir.join(name);
            let mut w = csv::Writer::from_path(&path)?;
            w.write_record(header)?;
            for r in rows {
                w.write_record(r)?;
            }
            w.flush().map_err(|e| Error::io(&path, e))
        };
        write(
            "r_squared.csv",
            ["month", "days", "r2_t_min", "r2_t_max"].map(String::from).to_vec(),
            self.temperature
                .iter()
                .map(|t| vec![t.month.to_string(), t.days.to_string(), t.r2_t_min.to_string(), t.r2_t_max.to_string()])
                .collect(),
        )?;
        let mut header = vec!["month".to_string()];
        header.extend((0..24).map(|h| format!("h{h}")));
        write(
            "peak_hour_histogram.csv",
            header,
            self.histograms
                .iter()
                .map(|(m, bins)| std::iter::once(m.to_string()).chain(bins.iter().map(|b| b.to_string())).collect())
                .collect(),
        )?;
        let k = self.pca.n_components();
        let mut header = vec!["feature".to_string()];
        header.extend((1..=k).map(|c| format!("PC{c}")));
        write(
            "pca_loadings.csv",
            header,
            self.pca
                .features
                .iter()
                .zip(&self.pca.loadings)
                .map(|(&f, l)| std::iter::once(PEAK_DAY_PREDICTORS[f].to_string()).chain(l.iter().map(|v| v.to_string())).collect())
                .collect(),
        )?;
        write(
            "pca_variance.csv",
            ["component", "eigenvalue", "variance_ratio"].map(String::from).to_vec(),
            (0..k)
                .map(|c| {
                    vec![
                        format!("PC{}", c + 1),
                        self.pca.eigenvalues[c].to_string(),
                        self.pca.explained_variance_ratio[c].to_string(),
                    ]
                })
                .collect(),
        )
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::features::tests::table_with;
    use chrono::NaiveDate;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random(n: usize, m: usize, seed: u64) -> Matrix {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let rows: Vec<Vec<f64>> = (0..n).map(|_| (0..m).map(|_| rng.random::<f64>() * 10.0 - 3.0).collect()).collect();
        Matrix::from_rows(&rows).unwrap()
    }

    #[test]
    fn independent_features_share_variance() {
        // orthogonal +-1 columns: correlation matrix is the identity
        let rows: Vec<[f64; 3]> = (0..8).map(|i| [(i & 1) as f64, ((i >> 1) & 1) as f64, ((i >> 2) & 1) as f64]).collect();
        let r = pca(&Matrix::from_rows(&rows).unwrap(), 3).unwrap();
        for v in &r.explained_variance_ratio {
            assert!((v - 1.0 / 3.0).abs() < 1e-12);
        }
    }

    #[test]
    fn perfectly_correlated_pair() {
        let rows: Vec<[f64; 2]> = (0..20).map(|i| [i as f64, 3.0 * i as f64 - 1.0]).collect();
        let r = pca(&Matrix::from_rows(&rows).unwrap(), 2).unwrap();
        assert!((r.explained_variance_ratio[0] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn full_reconstruction_and_orthonormality() {
        let x = random(50, 5, 1);
        let r = pca(&x, 5).unwrap();
        for row in x.iter_rows() {
            let back = r.reconstruct(&r.transform(row));
            for (a, b) in back.iter().zip(r.standardized(row)) {
                assert!((a - b).abs() <= 1e-8);
            }
        }
        for a in 0..5 {
            for b in 0..5 {
                let dot: f64 = r.loadings.iter().map(|l| l[a] * l[b]).sum();
                assert!((dot - (a == b) as u8 as f64).abs() <= 1e-8);
            }
        }
        assert!(r.explained_variance_ratio.windows(2).all(|w| w[0] >= w[1]));
        assert!(r.explained_variance_ratio.iter().sum::<f64>() <= 1.0 + 1e-9);
        for c in 0..5 {
            let lead = r.loadings.iter().map(|l| l[c]).max_by(|a, b| a.abs().total_cmp(&b.abs())).unwrap();
            assert!(lead > 0.0);
        }
    }

    #[test]
    fn constant_columns_dropped() {
        let rows: Vec<[f64; 3]> = (0..10).map(|i| [i as f64, 5.0, (i * i) as f64]).collect();
        let r = pca(&Matrix::from_rows(&rows).unwrap(), 3).unwrap();
        assert_eq!(r.features, vec![0, 2]);
        assert!(matches!(pca(&Matrix::from_rows(&[[1.0], [1.0]]).unwrap(), 1), Err(AnalysisError::RankDeficient)));
    }

    #[test]
    fn r_squared_cases() {
        let x: Vec<f64> = (0..30).map(|i| i as f64).collect();
        let y: Vec<f64> = x.iter().map(|v| 2.0 * v + 1.0).collect();
        assert!((r_squared(&x, &y).unwrap() - 1.0).abs() < 1e-12);
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let xs: Vec<f64> = (0..20000).map(|_| rng.random()).collect();
        let ys: Vec<f64> = (0..20000).map(|_| rng.random()).collect();
        assert!(r_squared(&xs, &ys).unwrap() < 1e-3);
        let a = r_squared(&xs[..50], &ys[..50]).unwrap();
        let xt: Vec<f64> = xs[..50].iter().map(|v| -3.0 * v + 7.0).collect();
        let yt: Vec<f64> = ys[..50].iter().map(|v| 0.5 * v - 2.0).collect();
        assert!((a - r_squared(&xt, &yt).unwrap()).abs() < 1e-12);
        assert!(matches!(r_squared(&[1.0; 5], &x[..5]), Err(AnalysisError::ConstantInput("x"))));
    }

    #[test]
    fn histogram_counts_days() {
        let start = NaiveDate::from_ymd_opt(2010, 6, 1).unwrap();
        let recs = table_with(start, 30, |d, h| (if h == 18 { 900.0 } else { 500.0 + d as f64 }, 500.0, 20.0));
        let table = DayTable::new(&recs);
        let bins = peak_hour_histogram(&table, 6).unwrap();
        assert_eq!(bins[18], 30);
        assert_eq!(bins.iter().sum::<usize>(), 30);
        assert!(matches!(peak_hour_histogram(&table, 7), Err(AnalysisError::EmptyMonth(7))));
        let one = table_with(start, 1, |_, h| (if h == 8 { 2.0 } else { 1.0 }, 1.0, 20.0));
        let bins = peak_hour_histogram(&DayTable::new(&one), 6).unwrap();
        assert_eq!(bins[8], 1);
        assert_eq!(bins.iter().sum::<usize>(), 1);
    }
}
