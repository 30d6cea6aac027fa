//! Acceptance suite. Runs without the libtest harness and prints one
//! PASS/FAIL line per criterion; exits non-zero when any criterion fails.

use std::path::Path;
use std::time::{Duration, Instant};

use chrono::{NaiveDate, NaiveDateTime};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use peakcast_core::analysis::pca;
use peakcast_core::backtest::{evaluate, forecast_years, BacktestConfig, BacktestReport, DEFAULT_TESTING_YEARS};
use peakcast_core::features::{build_peak_hour_rows, label_direct, label_up_to_date, DayTable};
use peakcast_core::ingest::{compute_humidity, HourlyRecord};
use peakcast_core::learners::logit::{gradient as logit_gradient, log_likelihood};
use peakcast_core::learners::{
    fit_gbm, fit_random_forest, fit_tree, ForestParams, GbmParams, Matrix, MlpConfig, MlpModel, Split, TreeNode, TreeParams,
};
use peakcast_core::peak_models::{peak_day_multiplier, select_top2, ModelSet, PeakDayKind, Task};
use peakcast_core::pipeline::{Pipeline, PipelineConfig, MANIFEST};
use peakcast_core::synth::{generate, SynthConfig};
use peakcast_core::Execution;

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: impl Into<String>) -> Outcome {
    Outcome {
        pass,
        detail: detail.into(),
    }
}

fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

fn secs(d: Duration) -> String {
    format!("{:.2}s", d.as_secs_f64())
}

// 1 ------------------------------------------------------------------------

fn humidity() -> Outcome {
    let start = Instant::now();
    let path = Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures/humidity_oracle.csv");
    let mut reader = csv::Reader::from_path(path).expect("fixture");
    let mut worst: f64 = 0.0;
    let mut n = 0;
    for rec in reader.records() {
        let rec = rec.expect("row");
        let t: f64 = rec[0].parse().unwrap();
        let dt: f64 = rec[1].parse().unwrap();
        let oracle: f64 = rec[2].parse().unwrap();
        let h = compute_humidity(t, dt).expect("valid pair");
        worst = worst.max((h - oracle).abs());
        n += 1;
    }
    let elapsed = start.elapsed();
    outcome(
        n == 1000 && worst <= 1e-9 && elapsed < Duration::from_secs(1),
        format!("{n} pairs, max |error| {worst:.2e}, {}", secs(elapsed)),
    )
}

// 2 ------------------------------------------------------------------------

fn multiplier() -> Outcome {
    let start = Instant::now();
    let mut bad = Vec::new();
    for big_n in 28..=31u32 {
        for n in 1..=big_n {
            let got = peak_day_multiplier(n, big_n).expect("in range");
            let expected = if n + 6 >= big_n { 1.0 } else { (n + 6) as f64 / big_n as f64 };
            if got != expected || (got == 1.0) != (n + 6 >= big_n) {
                bad.push((n, big_n));
            }
        }
        if peak_day_multiplier(0, big_n).is_ok() || peak_day_multiplier(big_n + 1, big_n).is_ok() {
            bad.push((0, big_n));
        }
    }
    let elapsed = start.elapsed();
    outcome(
        bad.is_empty() && elapsed < Duration::from_secs(1),
        format!("118 (n, N) pairs, {} mismatches, {}", bad.len(), secs(elapsed)),
    )
}

// 3 ------------------------------------------------------------------------

fn gini(n: f64, pos: f64) -> f64 {
    if n == 0.0 {
        return 0.0;
    }
    let p = pos / n;
    1.0 - p * p - (1.0 - p) * (1.0 - p)
}

/// Weighted Gini decrease of sending `left[i]` rows left.
fn decrease(y: &[u8], left: impl Fn(usize) -> bool) -> f64 {
    let n = y.len() as f64;
    let (mut nl, mut pl, mut pos) = (0.0, 0.0, 0.0);
    for (i, &v) in y.iter().enumerate() {
        pos += v as f64;
        if left(i) {
            nl += 1.0;
            pl += v as f64;
        }
    }
    let (nr, pr) = (n - nl, pos - pl);
    gini(n, pos) - nl / n * gini(nl, pl) - nr / n * gini(nr, pr)
}

fn brute_force_root(x: &Matrix, y: &[u8]) -> f64 {
    let mut best = 0.0;
    for j in 0..x.cols() {
        let mut values = x.column(j);
        values.sort_by(f64::total_cmp);
        values.dedup();
        for w in values.windows(2) {
            let t = 0.5 * (w[0] + w[1]);
            let d = decrease(y, |i| x.get(i, j) <= t);
            if d > best {
                best = d;
            }
        }
    }
    best
}

fn random_dataset(r: &mut ChaCha8Rng, n: usize, m: usize) -> (Matrix, Vec<u8>) {
    let discrete = r.random_bool(0.5);
    let data: Vec<f64> = (0..n * m)
        .map(|_| if discrete { r.random_range(0..6) as f64 } else { r.random_range(-2.0..2.0) })
        .collect();
    let x = Matrix::new(n, m, data).unwrap();
    let w: Vec<f64> = (0..m).map(|_| r.random_range(-1.5..1.5)).collect();
    let y = (0..n)
        .map(|i| {
            let z: f64 = x.row(i).iter().zip(&w).map(|(a, b)| a * b).sum();
            r.random_bool(1.0 / (1.0 + (-z).exp())) as u8
        })
        .collect();
    (x, y)
}

fn tree_oracle() -> Outcome {
    let start = Instant::now();
    let mut r = rng(3);
    let mut worst: f64 = 0.0;
    let mut failures = 0;
    for _ in 0..100 {
        let n = r.random_range(2..=200);
        let m = r.random_range(1..=8);
        let (x, y) = random_dataset(&mut r, n, m);
        let tree = fit_tree(&x, &y, &TreeParams::default()).expect("fit");
        let brute = brute_force_root(&x, &y);
        let chosen = match &tree.root {
            TreeNode::Leaf { .. } => 0.0,
            TreeNode::Internal { feature, split, .. } => {
                let Split::Numeric { .. } = split else {
                    failures += 1;
                    continue;
                };
                decrease(&y, |i| split.goes_left(x.get(i, *feature)))
            }
        };
        let gap = (brute - chosen).abs();
        worst = worst.max(gap);
        if gap > 1e-12 {
            failures += 1;
        }
    }
    let elapsed = start.elapsed();
    outcome(
        failures == 0 && elapsed < Duration::from_secs(30),
        format!("100 datasets, {failures} mismatches, max decrease gap {worst:.1e}, {}", secs(elapsed)),
    )
}

// 4 ------------------------------------------------------------------------

fn forest_votes() -> Outcome {
    let mut r = rng(4);
    let (x, y) = random_dataset(&mut r, 300, 6);
    let params = ForestParams {
        n_tree: 101,
        seed: 17,
        ..Default::default()
    };
    let model = fit_random_forest(&x, &y, &params).unwrap();
    let mut mismatches = 0;
    for _ in 0..50 {
        let case: Vec<f64> = (0..6).map(|_| r.random_range(-2.5..2.5)).collect();
        let votes = model.trees.iter().filter(|t| t.predict(&case) >= 0.5).count();
        if model.predict_proba(&case).unwrap() != votes as f64 / model.trees.len() as f64 {
            mismatches += 1;
        }
    }
    let again = fit_random_forest(&x, &y, &params).unwrap();
    let seq = fit_random_forest(
        &x,
        &y,
        &ForestParams {
            execution: Execution::Sequential,
            ..params.clone()
        },
    )
    .unwrap();
    let identical = again == model && seq.trees == model.trees && seq.feature_importances == model.feature_importances;
    outcome(
        mismatches == 0 && identical,
        format!("50 cases, {mismatches} vote mismatches, same-seed refit identical: {identical}"),
    )
}

// 5 ------------------------------------------------------------------------

fn gbm_monotone() -> Outcome {
    let start = Instant::now();
    let mut r = rng(5);
    let mut increases = 0;
    let mut rounds = 0;
    for k in 0..20 {
        let n = r.random_range(50..=400);
        let m = r.random_range(2..=8);
        let (x, y) = random_dataset(&mut r, n, m);
        let params = GbmParams {
            n_rounds: 60,
            learning_rate: r.random_range(0.05..1.0),
            max_depth: r.random_range(1..=5),
            seed: k,
            ..Default::default()
        };
        let model = fit_gbm(&x, &y, &params).unwrap();
        rounds += model.train_loss.len() - 1;
        increases += model.train_loss.windows(2).filter(|w| w[1] > w[0]).count();
    }
    let elapsed = start.elapsed();
    outcome(
        increases == 0 && elapsed < Duration::from_secs(60),
        format!("20 datasets, {rounds} rounds, {increases} loss increases, {}", secs(elapsed)),
    )
}

// 6 ------------------------------------------------------------------------

fn relative_gap(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(1e-6)
}

fn gradients() -> Outcome {
    let mut r = rng(6);
    let mut worst_logit: f64 = 0.0;
    for _ in 0..50 {
        let (x, y) = random_dataset(&mut r, 80, 4);
        let beta: Vec<f64> = (0..5).map(|_| r.random_range(-1.0..1.0)).collect();
        let j = r.random_range(0..5);
        let h = 1e-5;
        let shifted = |d: f64| {
            let mut b = beta.clone();
            b[j] += d;
            log_likelihood(&x, &y, &b)
        };
        let numeric = (shifted(h) - shifted(-h)) / (2.0 * h);
        worst_logit = worst_logit.max(relative_gap(logit_gradient(&x, &y, &beta)[j], numeric));
    }

    let mut worst_mlp: f64 = 0.0;
    for k in 0..50 {
        let config = MlpConfig {
            hidden: vec![5, 4],
            seed: k,
            ..Default::default()
        };
        let mut model = MlpModel::zeros(3, &config);
        for p in model.params.iter_mut() {
            *p = r.random_range(-0.8..0.8);
        }
        let data: Vec<f64> = (0..20 * 3).map(|_| r.random_range(-2.0..2.0)).collect();
        let x = Matrix::new(20, 3, data).unwrap();
        let t: Vec<f64> = (0..20).map(|_| r.random_range(-1.0..1.0)).collect();
        let j = r.random_range(0..model.params.len());
        let (_, grad) = model.loss_and_gradient(&x, &t);
        let h = 1e-5;
        let mut loss_at = |d: f64| {
            let saved = model.params[j];
            model.params[j] = saved + d;
            let l = model.loss(&x, &t);
            model.params[j] = saved;
            l
        };
        let numeric = (loss_at(h) - loss_at(-h)) / (2.0 * h);
        worst_mlp = worst_mlp.max(relative_gap(grad[j], numeric));
    }
    outcome(
        worst_logit <= 1e-4 && worst_mlp <= 1e-4,
        format!("50 probes each, max relative gap logit {worst_logit:.1e}, MLP {worst_mlp:.1e}"),
    )
}

// 7 ------------------------------------------------------------------------

fn importances() -> Outcome {
    let mut r = rng(7);
    let mut sums_ok = true;
    for k in 0..10 {
        let (x, y) = random_dataset(&mut r, 200, 6);
        let forest = fit_random_forest(&x, &y, &ForestParams { n_tree: 30, seed: k, ..Default::default() }).unwrap();
        let gbm = fit_gbm(&x, &y, &GbmParams { n_rounds: 20, seed: k, ..Default::default() }).unwrap();
        let tree = fit_tree(&x, &y, &TreeParams::default()).unwrap();
        for imp in [forest.feature_importances.clone(), gbm.feature_importances.clone(), tree.feature_importances()] {
            sums_ok &= imp.iter().all(|&v| v >= 0.0) && (imp.iter().sum::<f64>() - 1.0).abs() <= 1e-9;
        }
    }
    // Feature 0 alone decides the label; the rest are noise.
    let n = 500;
    let data: Vec<f64> = (0..n * 8).map(|_| r.random_range(-1.0..1.0)).collect();
    let x = Matrix::new(n, 8, data).unwrap();
    let y: Vec<u8> = (0..n).map(|i| (x.get(i, 0) > 0.1) as u8).collect();
    let forest = fit_random_forest(&x, &y, &ForestParams { seed: 1, ..Default::default() }).unwrap();
    let gbm = fit_gbm(&x, &y, &GbmParams::default()).unwrap();
    let tree = fit_tree(&x, &y, &TreeParams::default()).unwrap();
    let planted = [forest.feature_importances[0], gbm.feature_importances[0], tree.feature_importances()[0]];
    outcome(
        sums_ok && planted.iter().all(|&v| v >= 0.9),
        format!(
            "30 fits non-negative and summing to 1: {sums_ok}; planted feature share forest {:.3}, GBM {:.3}, tree {:.3}",
            planted[0], planted[1], planted[2]
        ),
    )
}

// 8 ------------------------------------------------------------------------

fn first_max(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in values.iter().enumerate() {
        if v > values[best] {
            best = i;
        }
    }
    best
}

fn labeling() -> Outcome {
    let mut r = rng(8);
    let mut bad = 0;
    for _ in 0..1000 {
        let days = r.random_range(28..=31u32);
        let loads: Vec<f64> = (0..days).map(|_| r.random_range(0..12) as f64).collect();
        let direct = label_direct(&loads).unwrap();
        let peak = first_max(&loads);
        bad += direct.iter().enumerate().filter(|&(i, &l)| l != (i == peak) as u8).count();
        for n in 1..=days {
            let end = ((n + 6).min(days)) as usize;
            let expected = (first_max(&loads[..end]) + 1 == n as usize) as u8;
            bad += (label_up_to_date(&loads, n, days).unwrap() != expected) as usize;
        }
    }

    let start = NaiveDate::from_ymd_opt(2010, 3, 10).unwrap().and_hms_opt(0, 0, 0).unwrap();
    for _ in 0..1000 {
        let records: Vec<HourlyRecord> = (0..72)
            .map(|h| {
                let ts: NaiveDateTime = start + chrono::Duration::hours(h);
                let actual = 1000.0 + r.random_range(0..8) as f64;
                HourlyRecord::new(ts, actual, 1000.0 + r.random_range(0..8) as f64, 10.0, 5.0).unwrap()
            })
            .collect();
        let table = DayTable::new(&records);
        let rows = build_peak_hour_rows(&table, start.date() + chrono::Duration::days(1)).unwrap();
        let actual: Vec<f64> = records[24..48].iter().map(|r| r.actual_load).collect();
        let peak = first_max(&actual);
        bad += rows.iter().filter(|row| row.label != (row.hour as usize == peak) as u8).count();

        let mut values = [0.0; 24];
        for v in values.iter_mut() {
            *v = r.random_range(0..6) as f64;
        }
        let mut order: Vec<usize> = (0..24).collect();
        order.sort_by(|&a, &b| values[b].partial_cmp(&values[a]).unwrap().then(a.cmp(&b)));
        bad += (select_top2(&values) != [order[0] as u32, order[1] as u32]) as usize;
    }
    outcome(bad == 0, format!("1000 months and 1000 days, {bad} mismatches"))
}

// 9, 10, 12 -----------------------------------------------------------------

const BENCHMARK_CONFIG: &str = r#"
seed = 2024
training_years = [2000, 2002, 2003, 2004, 2005, 2007, 2009, 2010, 2012, 2013, 2014, 2015, 2016, 2017, 2018]
testing_years = [2001, 2006, 2008, 2011, 2019, 2020]
threshold = 0.03
kind = "indirect"

[paths]
load = "data/load.csv"
weather = "data/weather.csv"
workdir = "run"

[learners.day]
kind = "forest"
n_tree = 300
min_leaf = 5

[learners.hour]
kind = "forest"
n_tree = 100
sample_fraction = 0.5
min_leaf = 5
"#;

struct Benchmark {
    dir: tempfile::TempDir,
    config: PipelineConfig,
    report: BacktestReport,
    elapsed: Duration,
}

fn run_benchmark() -> Benchmark {
    let start = Instant::now();
    let dir = tempfile::tempdir().unwrap();
    generate(&SynthConfig::default()).write(dir.path().join("data")).unwrap();
    let config = PipelineConfig::from_toml(BENCHMARK_CONFIG, dir.path()).expect("benchmark config");
    let pipeline = Pipeline::new(config.clone());
    pipeline.run().expect("pipeline");
    let text = std::fs::read_to_string(pipeline.workdir().join("backtest/report.json")).unwrap();
    let report: BacktestReport = serde_json::from_str(&text).unwrap();
    Benchmark {
        dir,
        config,
        report,
        elapsed: start.elapsed(),
    }
}

fn benchmark(b: &Benchmark) -> Outcome {
    let r = &b.report;
    let days = r.average_peak_days();
    let max_cycles = r.years.iter().map(|y| y.cycles).max().unwrap_or(0);
    let (model, naive) = r.captured_day_recall().unwrap_or((0.0, 1.0));
    let years_ok = r.years.iter().map(|y| y.year).collect::<Vec<_>>() == DEFAULT_TESTING_YEARS;
    outcome(
        years_ok && days >= 10.0 && max_cycles <= 100 && model >= naive && b.elapsed < Duration::from_secs(300),
        format!(
            "peak days {days:.2}/12 per year, cycles avg {:.1} max {max_cycles}, hour recall on captured days model {model:.3} vs naive {naive:.3}, {}",
            r.average_cycles(),
            secs(b.elapsed)
        ),
    )
}

fn monotonicity(b: &Benchmark) -> Outcome {
    let cfg = &b.config;
    let table = DayTable::new(&peakcast_core::ingest::read_table(cfg.paths.workdir.join("table.csv")).unwrap());
    let models = cfg.paths.workdir.join("models");
    let day = ModelSet::load(&models, Task::Indirect).unwrap();
    let hour = ModelSet::load(&models, Task::Hour).unwrap();
    let forecasts = forecast_years(&day, &hour, &table, &cfg.testing_years, PeakDayKind::Indirect, Execution::Parallel).unwrap();
    let mut points = Vec::new();
    for threshold in [0.01, 0.05, 0.10, 0.15, 0.20] {
        let r = evaluate(&forecasts, &BacktestConfig { threshold, testing_years: cfg.testing_years.clone(), ..Default::default() }).unwrap();
        let cycles: usize = r.years.iter().map(|y| y.cycles).sum();
        let days: usize = r.years.iter().map(|y| y.peak_days_captured).sum();
        points.push((threshold, cycles, days));
    }
    let ok = points.windows(2).all(|w| w[1].1 <= w[0].1 && w[1].2 <= w[0].2);
    let listing: Vec<String> = points.iter().map(|(t, c, d)| format!("{t:.2}: {c} cycles/{d} days")).collect();
    outcome(ok, listing.join(", "))
}

fn reproducibility(b: &Benchmark) -> Outcome {
    let workdir = &b.config.paths.workdir;
    let first = std::fs::read(workdir.join(MANIFEST)).unwrap();
    std::fs::remove_dir_all(workdir).unwrap();
    let config = PipelineConfig::from_toml(BENCHMARK_CONFIG, b.dir.path()).unwrap();
    Pipeline::new(config).run().expect("second run");
    let second = std::fs::read(workdir.join(MANIFEST)).unwrap();
    outcome(first == second, format!("manifest of {} bytes, identical: {}", first.len(), first == second))
}

// 11 -----------------------------------------------------------------------

fn pca_checks() -> Outcome {
    let mut r = rng(11);
    let (n, m) = (200, 6);
    let mut data = Vec::with_capacity(n * m);
    for _ in 0..n {
        let a: f64 = r.random_range(-1.0..1.0);
        let b: f64 = r.random_range(-1.0..1.0);
        for j in 0..m {
            let noise: f64 = r.random_range(-0.3..0.3);
            data.push(a * (j as f64 + 1.0) + b * (m - j) as f64 * 0.5 + noise);
        }
    }
    let x = Matrix::new(n, m, data.clone()).unwrap();
    let fit = pca(&x, m).unwrap();
    let mut recon: f64 = 0.0;
    for i in 0..n {
        let z = fit.standardized(x.row(i));
        let back = fit.reconstruct(&fit.transform(x.row(i)));
        recon = recon.max(z.iter().zip(&back).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max));
    }
    let mut ortho: f64 = 0.0;
    for a in 0..m {
        for b in 0..m {
            let dot: f64 = fit.loadings.iter().map(|l| l[a] * l[b]).sum();
            ortho = ortho.max((dot - if a == b { 1.0 } else { 0.0 }).abs());
        }
    }
    let scale: Vec<f64> = (0..m).map(|_| r.random_range(0.01..100.0)).collect();
    let shift: Vec<f64> = (0..m).map(|_| r.random_range(-50.0..50.0)).collect();
    let rescaled: Vec<f64> = data.iter().enumerate().map(|(k, v)| v * scale[k % m] + shift[k % m]).collect();
    let fit2 = pca(&Matrix::new(n, m, rescaled).unwrap(), m).unwrap();
    let ratio_gap = fit
        .explained_variance_ratio
        .iter()
        .zip(&fit2.explained_variance_ratio)
        .map(|(a, b)| (a - b).abs())
        .fold(0.0, f64::max);
    outcome(
        recon <= 1e-8 && ortho <= 1e-8 && ratio_gap <= 1e-9,
        format!("reconstruction {recon:.1e}, orthonormality {ortho:.1e}, variance-ratio shift under rescaling {ratio_gap:.1e}"),
    )
}

fn main() {
    // Accepts and ignores libtest flags such as --nocapture.
    let mut results: Vec<(u32, &str, Outcome)> = vec![
        (1, "humidity", humidity()),
        (2, "peak-day multiplier", multiplier()),
        (3, "tree root split oracle", tree_oracle()),
        (4, "forest votes and determinism", forest_votes()),
        (5, "boosting loss non-increasing", gbm_monotone()),
        (6, "analytic gradients", gradients()),
        (7, "feature importance", importances()),
        (8, "labeling and top-2 oracle", labeling()),
    ];
    let b = run_benchmark();
    results.push((9, "synthetic benchmark", benchmark(&b)));
    results.push((10, "threshold monotonicity", monotonicity(&b)));
    results.push((12, "manifest reproducibility", reproducibility(&b)));
    results.push((11, "PCA", pca_checks()));
    results.sort_by_key(|r| r.0);

    let mut failed = 0;
    for (k, name, o) in &results {
        println!("criterion {k:>2} {:<4} {name}: {}", if o.pass { "PASS" } else { "FAIL" }, o.detail);
        failed += (!o.pass) as usize;
    }
    if failed > 0 {
        println!("{failed} criteria failed");
        std::process::exit(1);
    }
}
