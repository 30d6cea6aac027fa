use std::path::Path;

use peakcast_core::error::ExitKind;
use peakcast_core::pipeline::{Pipeline, PipelineConfig, Stage, MANIFEST};
use peakcast_core::synth::{generate, SynthConfig};

const CONFIG: &str = r#"
seed = 9
training_years = [2000, 2002]
testing_years = [2001]

[paths]
load = "data/load.csv"
weather = "data/weather.csv"
workdir = "run"

[learners.day]
kind = "gbm"
n_rounds = 20

[learners.hour]
kind = "forest"
n_tree = 20
min_leaf = 5
"#;

fn setup(dir: &Path) -> PipelineConfig {
    generate(&SynthConfig { years: 3, ..Default::default() }).write(dir.join("data")).unwrap();
    PipelineConfig::from_toml(CONFIG, dir).unwrap()
}

#[test]
fn full_run_writes_artifact_tree_and_manifest() {
    let dir = tempfile::tempdir().unwrap();
    let pipeline = Pipeline::new(setup(dir.path()));
    let manifest = pipeline.run().unwrap();
    for rel in [
        "table.csv",
        "features/peak_day.csv",
        "features/peak_hour.csv",
        "models/indirect/month_07.json",
        "models/hour/month_12.json",
        "predictions/2001.csv",
        "backtest/summary.txt",
        "report/pca_loadings.csv",
    ] {
        assert!(manifest.artifacts.contains_key(rel), "{rel} missing from manifest");
        assert!(pipeline.workdir().join(rel).is_file());
    }
    assert!(pipeline.workdir().join(MANIFEST).is_file());
    assert!(!manifest.artifacts.keys().any(|k| k.starts_with("augment/")));
}

#[test]
fn stages_rerun_from_disk_reproduce_outputs() {
    let dir = tempfile::tempdir().unwrap();
    let pipeline = Pipeline::new(setup(dir.path()));
    let full = pipeline.run().unwrap();
    for stage in [Stage::Train, Stage::Predict, Stage::Backtest, Stage::Report] {
        pipeline.run_stage(stage).unwrap();
    }
    assert_eq!(pipeline.manifest().unwrap(), full);
}

#[test]
fn sequential_and_parallel_runs_agree() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    let par = Pipeline::new(setup(a.path())).run().unwrap();
    let mut cfg = setup(b.path());
    cfg.execution = peakcast_core::Execution::Sequential;
    let seq = Pipeline::new(cfg).run().unwrap();
    assert_eq!(par, seq);
}

#[test]
fn stage_failure_names_the_stage() {
    let dir = tempfile::tempdir().unwrap();
    let pipeline = Pipeline::new(setup(dir.path()));
    let err = pipeline.run_stage(Stage::Predict).unwrap_err();
    assert!(err.to_string().starts_with("predict:"), "{err}");
    assert_eq!(err.exit_kind(), ExitKind::Data);
}
