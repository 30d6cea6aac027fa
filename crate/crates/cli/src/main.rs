use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use log::info;

use peakcast_core::augment::{extend_table, fit_augmenter, synthesize, AugmentationConfig, DateRange};
use peakcast_core::backtest::{evaluate, forecast_years, BacktestConfig, DEFAULT_THRESHOLD, MAX_CYCLES_PER_YEAR};
use peakcast_core::error::ExitKind;
use peakcast_core::features::DayTable;
use peakcast_core::ingest::{align_to_hours, ingest_files, parse_weather_csv, read_table, write_table};
use peakcast_core::learners::serial;
use peakcast_core::peak_models::{check_threshold, fit_monthly_models, ModelSet, PeakDayKind, Task};
use peakcast_core::pipeline::{write_features, write_year_predictions, ConfigError, Learners, Pipeline, Stage};
use peakcast_core::synth::{generate, SynthConfig};
use peakcast_core::{analysis, Error, Execution, Result};

/// Peak-day and peak-hour probability models with battery dispatch backtests.
#[derive(Parser)]
#[command(name = "peakcast", version)]
struct Cli {
    /// Log progress (repeat for more detail).
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    verbose: u8,
    /// Run on one thread.
    #[arg(long, global = true)]
    sequential: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Align weather to the load hours and write the merged hourly table.
    Ingest {
        #[arg(long)]
        load: PathBuf,
        #[arg(long)]
        weather: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Fit load regressors on recorded years and extend the table with synthetic years.
    Augment {
        #[arg(long)]
        table: PathBuf,
        /// Raw weather CSV covering the generation range.
        #[arg(long)]
        weather: PathBuf,
        /// Recorded range to fit on, e.g. `2005..2020` or `2005-01-01..2020-12-31`.
        #[arg(long)]
        train_range: DateRange,
        #[arg(long)]
        gen_range: DateRange,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        allow_overlap: bool,
        /// Add resampled training residuals to the synthetic loads.
        #[arg(long)]
        residual_bootstrap: bool,
        /// Also write the fitted regressors to this file.
        #[arg(long)]
        save_model: Option<PathBuf>,
    },
    /// Write the peak-day and peak-hour predictor tables.
    Features {
        #[arg(long)]
        table: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Fit the twelve monthly peak-day models and peak-hour models.
    Train {
        #[arg(long)]
        table: PathBuf,
        /// Training years, e.g. `2000,2002..2010`.
        #[arg(long)]
        years: Years,
        #[arg(long, default_value = "indirect")]
        kind: PeakDayKind,
        /// TOML file with `[day]` and `[hour]` learner tables.
        #[arg(long)]
        learners: Option<PathBuf>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Predict peak-day probabilities, dispatch decisions and top-2 hours.
    Predict {
        #[command(flatten)]
        eval: EvalArgs,
        /// Directory for `<year>.csv`; standard output when omitted.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Replay the dispatch policy over the testing years.
    Backtest {
        #[command(flatten)]
        eval: EvalArgs,
        #[arg(long, default_value_t = MAX_CYCLES_PER_YEAR)]
        max_cycles: usize,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Write R², peak-hour histograms and PCA of the predictors.
    Report {
        #[arg(long)]
        table: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Run all stages (or one) from a TOML config and write the manifest.
    Pipeline {
        #[arg(long)]
        config: PathBuf,
        /// Run only this stage, reading earlier outputs from the work directory.
        #[arg(long)]
        stage: Option<Stage>,
    },
    /// Generate synthetic `load.csv` and `weather.csv`.
    Simulate {
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 2000)]
        start_year: i32,
        #[arg(long, default_value_t = 21)]
        years: u32,
        #[arg(long, default_value_t = 7)]
        seed: u64,
    },
}

#[derive(Args)]
struct EvalArgs {
    #[arg(long)]
    models: PathBuf,
    #[arg(long)]
    table: PathBuf,
    /// Testing years, e.g. `2001,2019..2020`.
    #[arg(long)]
    years: Years,
    #[arg(long, default_value = "indirect")]
    kind: PeakDayKind,
    #[arg(long, default_value_t = DEFAULT_THRESHOLD)]
    threshold: f64,
}

/// Year list such as `2000,2002..2005`.
#[derive(Clone, Debug)]
struct Years(Vec<i32>);

impl std::str::FromStr for Years {
    type Err = String;
    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        let bad = || format!("expected years like `2000,2002..2005`, got {s:?}");
        let mut years = Vec::new();
        for item in s.split(',') {
            match item.split_once("..") {
                Some((a, b)) => {
                    let a: i32 = a.trim().parse().map_err(|_| bad())?;
                    let b: i32 = b.trim().parse().map_err(|_| bad())?;
                    if b < a {
                        return Err(bad());
                    }
                    years.extend(a..=b);
                }
                None => years.push(item.trim().parse().map_err(|_| bad())?),
            }
        }
        Ok(Years(years))
    }
}

fn table_of(path: &Path) -> Result<DayTable> {
    Ok(DayTable::new(&read_table(path)?))
}

fn load_models(dir: &Path, kind: PeakDayKind) -> Result<(ModelSet, ModelSet)> {
    Ok((ModelSet::load(dir, kind.task())?, ModelSet::load(dir, Task::Hour)?))
}

fn run(cli: Cli) -> Result<()> {
    let exec = if cli.sequential { Execution::Sequential } else { Execution::Parallel };
    match cli.command {
        Command::Ingest { load, weather, out } => {
            let records = ingest_files(&load, &weather)?;
            write_table(&out, &records)?;
            info!("wrote {} hours to {}", records.len(), out.display());
        }
        Command::Augment {
            table,
            weather,
            train_range,
            gen_range,
            out,
            seed,
            allow_overlap,
            residual_bootstrap,
            save_model,
        } => {
            let cfg = AugmentationConfig {
                allow_overlap,
                residual_bootstrap,
                seed,
                ..AugmentationConfig::new(train_range, gen_range)
            };
            let recorded = read_table(&table)?;
            let hourly = align_to_hours(&parse_weather_csv(&weather)?)?;
            let augmenter = fit_augmenter(&recorded, &cfg)?;
            for r in &augmenter.reports {
                info!("{:?}: train RMSE {:.1} MWh, MAPE {:.2}%", r.target, r.train_rmse, 100.0 * r.train_mape);
            }
            let synthetic = synthesize(&augmenter, &hourly, &cfg, exec)?;
            write_table(&out, &extend_table(&recorded, &synthetic))?;
            if let Some(path) = save_model {
                std::fs::write(&path, serial::to_document(&augmenter)?).map_err(|e| Error::io(&path, e))?;
            }
        }
        Command::Features { table, out } => write_features(&table_of(&table)?, out)?,
        Command::Train {
            table,
            years,
            kind,
            learners,
            seed,
            out,
        } => {
            let learners = learners.map(Learners::load).transpose()?.unwrap_or_default();
            let table = table_of(&table)?;
            fit_monthly_models(&table, kind.task(), &years.0, &learners.day, seed, exec)?.save(&out)?;
            fit_monthly_models(&table, Task::Hour, &years.0, &learners.hour, seed, exec)?.save(&out)?;
        }
        Command::Predict { eval, out } => {
            check_threshold(eval.threshold)?;
            let table = table_of(&eval.table)?;
            let (day, hour) = load_models(&eval.models, eval.kind)?;
            let forecasts = forecast_years(&day, &hour, &table, &eval.years.0, eval.kind, exec)?;
            match out {
                Some(dir) => write_year_predictions(&forecasts, eval.threshold, dir)?,
                None => {
                    let days: Vec<_> = forecasts
                        .iter()
                        .flat_map(|y| y.months.iter().flatten())
                        .map(|d| {
                            let mut d = d.clone();
                            d.day = d.day.with_threshold(eval.threshold);
                            d
                        })
                        .collect();
                    peakcast_core::peak_models::write_predictions(std::io::stdout().lock(), &days)?;
                }
            }
        }
        Command::Backtest { eval, max_cycles, out } => {
            let cfg = BacktestConfig {
                testing_years: eval.years.0.clone(),
                threshold: eval.threshold,
                kind: eval.kind,
                max_cycles,
            };
            check_threshold(cfg.threshold)?;
            let table = table_of(&eval.table)?;
            let (day, hour) = load_models(&eval.models, eval.kind)?;
            let report = evaluate(&forecast_years(&day, &hour, &table, &cfg.testing_years, cfg.kind, exec)?, &cfg)?;
            if let Some(dir) = out {
                report.save(dir)?;
            }
            print!("{}", report.to_text());
        }
        Command::Report { table, out } => analysis::diagnostics(&table_of(&table)?, exec)?.save(out)?,
        Command::Pipeline { config, stage } => {
            let mut pipeline = Pipeline::from_path(&config)?;
            if cli.sequential {
                pipeline.config.execution = Execution::Sequential;
            }
            match stage {
                Some(stage) => {
                    pipeline.run_stage(stage)?;
                    pipeline.write_manifest()?;
                }
                None => {
                    pipeline.run()?;
                }
            }
            let summary = pipeline.workdir().join("backtest").join("summary.txt");
            if let Ok(text) = std::fs::read_to_string(summary) {
                print!("{text}");
            }
            println!("manifest: {}", pipeline.workdir().join("manifest.json").display());
        }
        Command::Simulate {
            out,
            start_year,
            years,
            seed,
        } => {
            if years == 0 {
                return Err(ConfigError::Invalid {
                    field: "years",
                    reason: "must be at least 1".into(),
                }
                .into());
            }
            let data = generate(&SynthConfig {
                start_year,
                years,
                seed,
                ..SynthConfig::default()
            });
            let (load, weather) = data.write(&out)?;
            info!("wrote {} and {}", load.display(), weather.display());
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            let code = match e.exit_kind() {
                ExitKind::Config => 2,
                ExitKind::Data => 3,
                ExitKind::Numeric => 4,
            };
            ExitCode::from(code)
        }
    }
}
