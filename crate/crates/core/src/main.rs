use std::path::PathBuf;
use std::process::ExitCode;

use clap::Parser;

use fedmimo::sim::{self, ExperimentConfig, Policy};

/// Simulate federated learning with latency-constrained device scheduling
/// over a multi-antenna uplink.
#[derive(Debug, Parser)]
#[command(name = "fedmimo", version)]
struct Cli {
    /// TOML experiment config; unset fields take their defaults.
    config: Option<PathBuf>,

    /// Scheduling policy.
    #[arg(long, value_parser = ["proposed", "random", "full"])]
    policy: Option<String>,

    /// Number of global rounds.
    #[arg(long)]
    rounds: Option<usize>,

    /// Master seed.
    #[arg(long)]
    seed: Option<u64>,

    /// Metrics file; printed to stdout when unset.
    #[arg(long)]
    output: Option<PathBuf>,

    /// Run all three policies on shared seeds and write one merged table.
    #[arg(long, conflicts_with = "policy")]
    compare: bool,
}

fn run(cli: Cli) -> fedmimo::Result<()> {
    let mut cfg = match &cli.config {
        Some(path) => ExperimentConfig::from_file(path)?,
        None => ExperimentConfig::default(),
    };
    if let Some(p) = &cli.policy {
        cfg.policy = p.parse::<Policy>()?;
    }
    if let Some(r) = cli.rounds {
        cfg.rounds = r;
    }
    if let Some(s) = cli.seed {
        cfg.seed = s;
    }
    if let Some(o) = cli.output {
        cfg.output = Some(o);
    }
    cfg.validate()?;

    let records = if cli.compare {
        sim::run_comparison::<f64>(&cfg)?
    } else {
        vec![sim::run_experiment::<f64>(&cfg)?]
    };
    for rec in &records {
        let s = &rec.summary;
        log::info!(
            "{}: final loss {}, accuracy {}, mean mass {}, mean |grad F|^2 {} vs bound {}",
            rec.config.policy,
            s.final_loss,
            s.final_accuracy,
            s.mean_weighted_mass,
            s.mean_grad_norm_sq,
            s.bound
        );
    }
    match &cfg.output {
        Some(path) => sim::write_merged_metrics(&records, path)?,
        None => {
            let refs: Vec<_> = records.iter().collect();
            print!("{}", sim::render_metrics(&refs));
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
