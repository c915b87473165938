use std::path::Path;
use std::process::{Command, Output};

use kddg::data::{gen_domains, read_bundle, BenchmarkSpec};
use kddg::harness::{read_results, ExperimentConfig, Method};
use kddg::nn::Schedule;

fn kddg(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_kddg"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn small_config() -> ExperimentConfig {
    let mut cfg = ExperimentConfig::default();
    cfg.benchmark = BenchmarkSpec::with_angles(&[0.0, 25.0, 50.0, 75.0], 8, 80, 1);
    cfg.hidden = vec![12];
    cfg.training.epochs = 2;
    cfg.optimizer.schedule = Schedule::Cosine { total_epochs: 2 };
    cfg.methods = vec![Method::Deepall, Method::Kddg];
    cfg.seeds = vec![0, 1, 2];
    cfg.bench.warmup_iterations = 2;
    cfg.bench.iterations = 10;
    cfg.bench.rounds = 2;
    cfg
}

fn write_config(dir: &Path, cfg: &ExperimentConfig) -> String {
    let path = dir.join("config.json");
    std::fs::write(&path, cfg.to_json().unwrap()).unwrap();
    path.to_str().unwrap().to_string()
}

#[test]
fn unknown_config_key_fails_with_message() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("bad.json");
    std::fs::write(&path, r#"{"methods": ["deepall"], "lamda_kd": 0.5}"#).unwrap();
    let out = kddg(&[
        "train",
        "--config",
        path.to_str().unwrap(),
        "--out",
        dir.path().to_str().unwrap(),
    ]);
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("error"));
}

#[test]
fn unknown_method_fails() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("bad.json");
    std::fs::write(&path, r#"{"methods": ["mixup"]}"#).unwrap();
    let out = kddg(&[
        "train",
        "--config",
        path.to_str().unwrap(),
        "--out",
        dir.path().to_str().unwrap(),
    ]);
    assert!(!out.status.success());
}

#[test]
fn missing_output_directory_fails() {
    let out = kddg(&["gen-data", "--quiet"]);
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("--out"));
}

#[test]
fn gen_data_writes_a_loadable_bundle() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small_config();
    let config = write_config(dir.path(), &cfg);
    let out_dir = dir.path().join("data");
    let out = kddg(&[
        "gen-data",
        "--config",
        &config,
        "--out",
        out_dir.to_str().unwrap(),
        "--quiet",
    ]);
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    let (spec, domains) = read_bundle(&out_dir).unwrap();
    assert_eq!(spec, cfg.benchmark);
    assert_eq!(domains, gen_domains(&cfg.benchmark).unwrap());
    let manifest = std::fs::read_to_string(out_dir.join("manifest.json")).unwrap();
    let effective = ExperimentConfig {
        out_dir: Some(out_dir.clone()),
        ..cfg
    };
    assert!(manifest.contains(&effective.hash().unwrap()));
}

#[test]
fn train_with_seed_override_writes_rows_and_checkpoints() {
    let dir = tempfile::tempdir().unwrap();
    let config = write_config(dir.path(), &small_config());
    let out_dir = dir.path().join("run");
    let out = kddg(&[
        "train",
        "--config",
        &config,
        "--seed",
        "7",
        "--out",
        out_dir.to_str().unwrap(),
        "--quiet",
    ]);
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    let rows = read_results(out_dir.join("results.csv")).unwrap();
    assert_eq!(rows.len(), 2 * 4);
    assert!(rows.iter().all(|r| r.seed == 7));
    let checkpoints = std::fs::read_dir(out_dir.join("checkpoints"))
        .unwrap()
        .count();
    assert_eq!(checkpoints, 2 * 4);
}

#[test]
fn bench_reports_every_method() {
    let dir = tempfile::tempdir().unwrap();
    let config = write_config(dir.path(), &small_config());
    let out_dir = dir.path().join("bench");
    let out = kddg(&[
        "bench",
        "--config",
        &config,
        "--out",
        out_dir.to_str().unwrap(),
        "--quiet",
    ]);
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    let timing = std::fs::read_to_string(out_dir.join("timing.csv")).unwrap();
    let lines: Vec<&str> = timing.lines().collect();
    assert_eq!(lines[0], "method,iterations,batch_size,sec_per_iter");
    assert!(lines[1].starts_with("deepall,") && lines[2].starts_with("kddg,"));
}
