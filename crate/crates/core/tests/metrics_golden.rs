use std::path::PathBuf;

use fedmimo::sim::{read_metrics, run_experiment, ExperimentConfig, MetricsTable, Policy};

fn golden() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("tests/data/golden_desk_20.csv")
}

fn reference_config() -> ExperimentConfig {
    let path = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../configs/desk.toml");
    ExperimentConfig {
        rounds: 20,
        ..ExperimentConfig::from_file(&path).unwrap()
    }
}

#[test]
fn golden_file_parses_as_finite_numbers() {
    let table: MetricsTable<f64> = read_metrics(&golden()).unwrap();
    assert_eq!(table.rounds.len(), 20);
    for (i, r) in table.rounds.iter().enumerate() {
        assert_eq!(r.round, i + 1);
        assert_eq!(r.policy, Policy::Proposed);
        for v in [r.loss, r.accuracy, r.weighted_mass, r.residual_norm_sq, r.gap_term, r.system_latency, r.grad_norm_sq] {
            assert!(v.is_finite());
        }
        assert!((0.0..=1.0 + 1e-12).contains(&r.weighted_mass));
        assert!(r.system_latency <= 1.0 + 1e-9, "round {} misses the deadline", r.round);
        assert!(r.scheduled_count >= 1);
    }
    for key in ["final_loss", "bound", "mean_weighted_mass", "residual_violations"] {
        assert!(table.footer.contains_key(key), "{key}");
    }
    assert_eq!(table.footer["identity_violations"], "0");
}

#[test]
fn reference_run_reproduces_golden_file() {
    let rec = run_experiment::<f64>(&reference_config()).unwrap();
    let table: MetricsTable<f64> = read_metrics(&golden()).unwrap();
    assert_eq!(rec.rounds.len(), table.rounds.len());
    for (a, b) in rec.rounds.iter().zip(&table.rounds) {
        assert_eq!((a.round, a.policy, a.scheduled_count), (b.round, b.policy, b.scheduled_count));
        for (x, y) in [(a.loss, b.loss), (a.accuracy, b.accuracy), (a.weighted_mass, b.weighted_mass), (a.grad_norm_sq, b.grad_norm_sq), (a.system_latency, b.system_latency)] {
            assert!((x - y).abs() <= 1e-9 * (1.0 + y.abs()), "round {}: {x} vs {y}", a.round);
        }
    }
}

#[test]
fn f32_run_tracks_f64_run() {
    let cfg = ExperimentConfig {
        rounds: 10,
        optimum_iterations: 200,
        ..reference_config()
    };
    let a = run_experiment::<f64>(&cfg).unwrap();
    let b = run_experiment::<f32>(&cfg).unwrap();
    assert_eq!(a.rounds.len(), b.rounds.len());
    let (la, lb) = (a.summary.final_loss, b.summary.final_loss as f64);
    assert!((la - lb).abs() < 1e-3 * la, "{la} vs {lb}");
}
