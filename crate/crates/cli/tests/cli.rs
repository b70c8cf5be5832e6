//! End-to-end checks of the `taxogrow` binary.

#[path = "../../core/tests/common/mod.rs"]
mod common;

use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;
use taxogrow::pipeline::{RunConfig, EXPANDED_FILE, FINAL_FILE, MANIFEST_FILE};
use tempfile::TempDir;

fn taxogrow(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_taxogrow")).args(args).output().unwrap()
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

/// Writes the planted inputs and a config file; returns the config path.
fn fixture(dir: &Path) -> (String, RunConfig) {
    let mut cfg = common::planted_countries().write_inputs(dir);
    cfg.max_iter = 2;
    let path = dir.join("config.json");
    fs::write(&path, serde_json::to_string_pretty(&cfg).unwrap()).unwrap();
    (path.display().to_string(), cfg)
}

fn manifest(cfg: &RunConfig) -> Value {
    serde_json::from_str(&fs::read_to_string(cfg.out(MANIFEST_FILE)).unwrap()).unwrap()
}

#[test]
fn run_writes_outputs_and_scores() {
    let dir = TempDir::new().unwrap();
    let (config, cfg) = fixture(dir.path());
    let o = taxogrow(&["run", "--config", &config]);
    assert!(o.status.success(), "{}", stderr(&o));
    assert!(stdout(&o).contains("edge F1 1.0000"), "{}", stdout(&o));
    assert!(cfg.out(FINAL_FILE).exists());
    assert_eq!(manifest(&cfg)["partial"], false);
}

#[test]
fn flags_override_the_config_file() {
    let dir = TempDir::new().unwrap();
    let (config, cfg) = fixture(dir.path());
    let o = taxogrow(&["run", "--config", &config, "--max_iter", "1", "--rng-seed", "7", "--global-opt", "false"]);
    assert!(o.status.success(), "{}", stderr(&o));
    let m = manifest(&cfg);
    assert_eq!(m["config"]["max_iter"], 1);
    assert_eq!(m["rng_seed"], 7);
    assert_eq!(m["snapshots"].as_array().unwrap().len(), 1);
    assert_eq!(
        fs::read_to_string(cfg.out(FINAL_FILE)).unwrap(),
        fs::read_to_string(cfg.out(EXPANDED_FILE)).unwrap()
    );
}

#[test]
fn stages_run_one_at_a_time() {
    let dir = TempDir::new().unwrap();
    let (config, cfg) = fixture(dir.path());
    for stage in ["extract-features", "expand", "optimize", "export-dot"] {
        let o = taxogrow(&[stage, "--config", &config]);
        assert!(o.status.success(), "{stage}: {}", stderr(&o));
    }
    let o = taxogrow(&["evaluate", "--config", &config]);
    assert!(o.status.success(), "{}", stderr(&o));
    let report: Value = serde_json::from_str(&stdout(&o)).unwrap();
    assert_eq!(report["ancestor"]["f1"], 1.0);
    let dot = fs::read_to_string(cfg.out("taxonomy.dot")).unwrap();
    assert!(dot.starts_with("digraph"));
    let stages: Vec<String> = manifest(&cfg)["stages"]
        .as_array()
        .unwrap()
        .iter()
        .map(|s| s["stage"].as_str().unwrap().to_string())
        .collect();
    assert_eq!(stages, ["extract-features", "expand", "optimize"]);
}

#[test]
fn missing_input_exits_with_config_error() {
    let dir = TempDir::new().unwrap();
    let (config, _) = fixture(dir.path());
    let o = taxogrow(&["run", "--config", &config, "--embeddings", "/nonexistent/vectors.txt"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("embeddings"), "{}", stderr(&o));
}

#[test]
fn unknown_config_key_exits_with_config_error() {
    let dir = TempDir::new().unwrap();
    let path = dir.path().join("bad.json");
    fs::write(&path, r#"{"max_iters": 2}"#).unwrap();
    let o = taxogrow(&["run", "--config", path.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn malformed_data_exits_with_data_error() {
    let dir = TempDir::new().unwrap();
    let (config, cfg) = fixture(dir.path());
    fs::write(cfg.seed_taxonomy.as_ref().unwrap(), "{not json").unwrap();
    let o = taxogrow(&["run", "--config", &config]);
    assert_eq!(o.status.code(), Some(3), "{}", stderr(&o));
    assert_eq!(manifest(&cfg)["partial"], true);
}

#[test]
fn evaluate_requires_gold() {
    let dir = TempDir::new().unwrap();
    let (_, cfg) = fixture(dir.path());
    let o = taxogrow(&["evaluate", "--output_dir", cfg.output_dir.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("gold"));
}

#[test]
fn export_dot_reads_explicit_paths() {
    let dir = TempDir::new().unwrap();
    let input = dir.path().join("t.json");
    let out = dir.path().join("t.dot");
    fs::write(&input, r#"[{"term":"A"},{"term":"B"}]"#).unwrap();
    let o = taxogrow(&["export-dot", "--input", input.to_str().unwrap(), "--out", out.to_str().unwrap()]);
    assert!(o.status.success(), "{}", stderr(&o));
    let dot = fs::read_to_string(out).unwrap();
    assert_eq!(dot.lines().filter(|l| l.contains("->")).count(), 2);
}
