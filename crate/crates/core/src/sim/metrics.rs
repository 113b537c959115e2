//! Metrics files.
//!
//! A metrics file is comma-separated text. The first line is the header
//!
//! ```text
//! round,policy,loss,accuracy,weighted_mass,scheduled_count,residual_norm_sq,gap_term,system_latency,grad_norm_sq
//! ```
//!
//! followed by one row per round. Rows of several experiments may follow each
//! other, distinguished by `policy`. After the rows comes a footer of
//! `# key=value` lines holding the summary; in a merged file each key is
//! prefixed with `<policy>.`. Floats are written in shortest round-trip form.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use crate::error::{Error, Result};
use crate::scalar::Real;

use super::config::Policy;
use super::run::{ExperimentRecord, RoundMetrics, Summary};

pub const COLUMNS: [&str; 10] = [
    "round",
    "policy",
    "loss",
    "accuracy",
    "weighted_mass",
    "scheduled_count",
    "residual_norm_sq",
    "gap_term",
    "system_latency",
    "grad_norm_sq",
];

/// Plain decimal for moderate magnitudes, scientific otherwise; both forms
/// are the shortest string that parses back to the same value.
fn num<T: Real>(v: T) -> String {
    let a = v.abs();
    if a == T::zero() || !a.is_finite() || (a >= T::lit(1e-4) && a < T::lit(1e15)) {
        v.to_string()
    } else {
        format!("{v:e}")
    }
}

fn summary_pairs<T: Real>(s: &Summary<T>) -> Vec<(&'static str, String)> {
    vec![
        ("rounds", s.rounds.to_string()),
        ("final_loss", num(s.final_loss)),
        ("final_accuracy", num(s.final_accuracy)),
        ("mean_weighted_mass", num(s.mean_weighted_mass)),
        ("mean_grad_norm_sq", num(s.mean_grad_norm_sq)),
        ("bound", num(s.bound)),
        ("bound_conservative", num(s.bound_conservative)),
        ("initial_loss", num(s.initial_loss)),
        ("optimal_loss_estimate", num(s.optimal_loss_estimate)),
        ("step_size", num(s.step_size)),
        ("smoothness", num(s.smoothness)),
        ("kappa_analytic", num(s.kappa_analytic)),
        ("kappa_empirical", num(s.kappa_empirical)),
        ("max_sample_grad_sq", num(s.max_sample_grad_sq)),
        ("postponements", s.postponements.to_string()),
        ("solver_failures", s.solver_failures.to_string()),
        ("identity_violations", s.identity_violations.to_string()),
        ("residual_violations", s.residual_violations.to_string()),
        ("descent_violations", s.descent_violations.to_string()),
    ]
}

/// Renders one or more records as a single table. Footer keys are
/// prefixed by policy when there is more than one record.
pub fn render_metrics<T: Real>(records: &[&ExperimentRecord<T>]) -> String {
    let mut out = COLUMNS.join(",");
    out.push('\n');
    for rec in records {
        for r in &rec.rounds {
            let _ = writeln!(
                out,
                "{},{},{},{},{},{},{},{},{},{}",
                r.round,
                r.policy,
                num(r.loss),
                num(r.accuracy),
                num(r.weighted_mass),
                r.scheduled_count,
                num(r.residual_norm_sq),
                num(r.gap_term),
                num(r.system_latency),
                num(r.grad_norm_sq)
            );
        }
    }
    let merged = records.len() > 1;
    for rec in records {
        let _ = writeln!(out, "# policy={} seed={}", rec.config.policy, rec.config.seed);
        for (key, value) in summary_pairs(&rec.summary) {
            if merged {
                let _ = writeln!(out, "# {}.{key}={value}", rec.config.policy);
            } else {
                let _ = writeln!(out, "# {key}={value}");
            }
        }
    }
    out
}

pub fn write_metrics<T: Real>(record: &ExperimentRecord<T>, path: &Path) -> Result<()> {
    std::fs::write(path, render_metrics(&[record]))?;
    Ok(())
}

pub fn write_merged_metrics<T: Real>(records: &[ExperimentRecord<T>], path: &Path) -> Result<()> {
    let refs: Vec<&ExperimentRecord<T>> = records.iter().collect();
    std::fs::write(path, render_metrics(&refs))?;
    Ok(())
}

/// Parsed metrics file.
#[derive(Debug, Clone, PartialEq)]
pub struct MetricsTable<T> {
    pub rounds: Vec<RoundMetrics<T>>,
    /// Footer entries, keys as written.
    pub footer: BTreeMap<String, String>,
}

fn field<V: std::str::FromStr>(record: &csv::StringRecord, i: usize, line: usize) -> Result<V> {
    let raw = record.get(i).unwrap_or("");
    raw.parse()
        .map_err(|_| Error::Data(format!("row {line}: bad {} value {raw:?}", COLUMNS[i])))
}

pub fn parse_metrics<T: Real>(text: &str) -> Result<MetricsTable<T>> {
    let mut reader = csv::ReaderBuilder::new()
        .comment(Some(b'#'))
        .from_reader(text.as_bytes());
    let header = reader.headers()?.clone();
    if header.iter().ne(COLUMNS) {
        return Err(Error::Data(format!("unexpected header {header:?}")));
    }
    let mut rounds = Vec::new();
    for (line, record) in reader.records().enumerate() {
        let record = record?;
        if record.len() != COLUMNS.len() {
            return Err(Error::Data(format!("row {line}: {} fields", record.len())));
        }
        let policy: Policy = record[1].parse()?;
        rounds.push(RoundMetrics {
            round: field(&record, 0, line)?,
            policy,
            loss: field(&record, 2, line)?,
            accuracy: field(&record, 3, line)?,
            weighted_mass: field(&record, 4, line)?,
            scheduled_count: field(&record, 5, line)?,
            residual_norm_sq: field(&record, 6, line)?,
            gap_term: field(&record, 7, line)?,
            system_latency: field(&record, 8, line)?,
            grad_norm_sq: field(&record, 9, line)?,
        });
    }
    let mut footer = BTreeMap::new();
    for line in text.lines().filter_map(|l| l.strip_prefix("# ")) {
        for pair in line.split_whitespace() {
            if let Some((k, v)) = pair.split_once('=') {
                footer.insert(k.to_string(), v.to_string());
            }
        }
    }
    Ok(MetricsTable { rounds, footer })
}

pub fn read_metrics<T: Real>(path: &Path) -> Result<MetricsTable<T>> {
    parse_metrics(&std::fs::read_to_string(path)?)
}
