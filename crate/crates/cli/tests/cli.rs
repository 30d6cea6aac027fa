use std::path::Path;
use std::process::{Command, Output};

fn peakcast(args: &[&str], cwd: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_peakcast")).args(args).current_dir(cwd).output().unwrap()
}

fn code(o: &Output) -> i32 {
    o.status.code().unwrap()
}

fn simulate(dir: &Path) {
    let o = peakcast(&["simulate", "--out", "data", "--years", "3"], dir);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
}

#[test]
fn every_subcommand_has_help() {
    let dir = tempfile::tempdir().unwrap();
    for sub in ["ingest", "augment", "features", "train", "predict", "backtest", "report", "pipeline", "simulate"] {
        let o = peakcast(&[sub, "--help"], dir.path());
        assert_eq!(code(&o), 0, "{sub}");
        assert!(String::from_utf8_lossy(&o.stdout).contains("Usage"), "{sub}");
    }
}

#[test]
fn staged_commands_chain_through_files() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    simulate(d);
    let steps: [&[&str]; 5] = [
        &["ingest", "--load", "data/load.csv", "--weather", "data/weather.csv", "--out", "table.csv"],
        &["features", "--table", "table.csv", "--out", "features"],
        &["train", "--table", "table.csv", "--years", "2000,2002", "--out", "models"],
        &["predict", "--models", "models", "--table", "table.csv", "--years", "2001", "--out", "pred"],
        &["report", "--table", "table.csv", "--out", "report"],
    ];
    for args in steps {
        let o = peakcast(args, d);
        assert_eq!(code(&o), 0, "{args:?}: {}", String::from_utf8_lossy(&o.stderr));
    }
    assert!(d.join("pred/2001.csv").is_file());
    assert!(d.join("models/indirect/month_01.json").is_file());

    let o = peakcast(&["backtest", "--models", "models", "--table", "table.csv", "--years", "2001", "--out", "bt"], d);
    assert_eq!(code(&o), 0);
    assert!(String::from_utf8_lossy(&o.stdout).contains("2001"));

    // Training years may not be backtested.
    let o = peakcast(&["backtest", "--models", "models", "--table", "table.csv", "--years", "2002"], d);
    assert_eq!(code(&o), 3);
    let o = peakcast(&["predict", "--models", "models", "--table", "table.csv", "--years", "2001", "--threshold", "1.5"], d);
    assert_eq!(code(&o), 2);
}

#[test]
fn pipeline_exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    simulate(d);
    let config = "seed = 1\ntraining_years = [2000, 2002]\ntesting_years = [2001]\n\
        [paths]\nload = \"data/load.csv\"\nweather = \"data/weather.csv\"\nworkdir = \"run\"\n\
        [learners.day]\nkind = \"logit\"\n[learners.hour]\nkind = \"gbm\"\nn_rounds = 10\n";
    std::fs::write(d.join("ok.toml"), config).unwrap();
    let o = peakcast(&["pipeline", "--config", "ok.toml"], d);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    assert!(d.join("run/manifest.json").is_file());

    std::fs::write(d.join("overlap.toml"), config.replace("[2001]", "[2002]")).unwrap();
    let o = peakcast(&["pipeline", "--config", "overlap.toml"], d);
    assert_eq!(code(&o), 2);
    assert!(String::from_utf8_lossy(&o.stderr).contains("2002"));

    std::fs::write(d.join("typo.toml"), config.replace("n_rounds", "n_round")).unwrap();
    let o = peakcast(&["pipeline", "--config", "typo.toml"], d);
    assert_eq!(code(&o), 2);
    assert!(String::from_utf8_lossy(&o.stderr).contains("n_round"));

    std::fs::write(d.join("data/bad.csv"), "timestamp,actual_load_mwh,forecast_load_mwh\n2000-01-01T00:30:00,1,1\n").unwrap();
    std::fs::write(d.join("bad.toml"), config.replace("data/load.csv", "data/bad.csv")).unwrap();
    let o = peakcast(&["pipeline", "--config", "bad.toml"], d);
    assert_eq!(code(&o), 3);
    assert!(String::from_utf8_lossy(&o.stderr).contains("ingest"));
}
