use std::path::Path;
use std::process::Command;

use fedmimo::sim::{read_metrics, run_experiment, ExperimentConfig, MetricsTable, Policy};

const SMALL: &str = "devices = 4\nsamples = 200\nfeature_dim = 6\nclasses = 3\noptimum_iterations = 200\n";

fn fedmimo(args: &[&str]) -> std::process::Output {
    Command::new(env!("CARGO_BIN_EXE_fedmimo"))
        .args(args)
        .env("RUST_LOG", "error")
        .output()
        .unwrap()
}

fn small_config(dir: &Path) -> String {
    let path = dir.join("small.toml");
    std::fs::write(&path, SMALL).unwrap();
    path.to_str().unwrap().to_string()
}

#[test]
fn zero_rounds_is_rejected() {
    let out = fedmimo(&["--rounds", "0"]);
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("rounds"));
}

#[test]
fn bad_flags_print_usage() {
    for args in [&["--policy", "greedy"][..], &["--frobnicate"][..], &["--seed", "x"][..]] {
        let out = fedmimo(args);
        assert!(!out.status.success(), "{args:?}");
        assert!(String::from_utf8_lossy(&out.stderr).contains("--help"), "{args:?}");
    }
}

#[test]
fn full_policy_run_writes_file() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small_config(dir.path());
    let out_path = dir.path().join("out.csv");
    let out = fedmimo(&[&cfg, "--policy", "full", "--rounds", "10", "--seed", "1", "--output", out_path.to_str().unwrap()]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let table: MetricsTable<f64> = read_metrics(&out_path).unwrap();
    assert_eq!(table.rounds.len(), 10);
    assert!(table.rounds.iter().all(|r| r.policy == Policy::Full && r.gap_term == 0.0));
}

#[test]
fn compare_emits_three_tables_worth_of_rows() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small_config(dir.path());
    let out_path = dir.path().join("cmp.csv");
    let out = fedmimo(&[&cfg, "--compare", "--rounds", "7", "--output", out_path.to_str().unwrap()]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let table: MetricsTable<f64> = read_metrics(&out_path).unwrap();
    assert_eq!(table.rounds.len(), 3 * 7);
    for (i, p) in Policy::ALL.iter().enumerate() {
        assert!(table.rounds[7 * i..7 * (i + 1)].iter().all(|r| r.policy == *p));
        assert!(table.footer.contains_key(&format!("{p}.final_loss")));
    }
}

#[test]
fn stdout_output_matches_library_run() {
    let dir = tempfile::tempdir().unwrap();
    let cfg_path = small_config(dir.path());
    let out = fedmimo(&[&cfg_path, "--policy", "random", "--rounds", "5", "--seed", "3"]);
    assert!(out.status.success());
    let text = String::from_utf8(out.stdout).unwrap();
    let cfg = ExperimentConfig {
        policy: Policy::Random,
        rounds: 5,
        seed: 3,
        ..ExperimentConfig::from_toml_str(SMALL).unwrap()
    };
    let rec = run_experiment::<f64>(&cfg).unwrap();
    assert_eq!(text, fedmimo::sim::render_metrics(&[&rec]));
}
