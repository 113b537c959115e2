//! The round loop: schedule, update locally, aggregate.

use crate::channel::{draw_channels, Topology};
use crate::conic::Status;
use crate::error::{Error, Result};
use crate::fl::{
    estimate_optimal_loss, estimate_smoothness_and_kappa, load_csv, partition_noniid, round_step,
    synthetic_gaussian_mixture, theorem_bound, BoundInputs, DataShard, Dataset, Model, ModelParams,
};
use crate::linalg::dot;
use crate::phy::{local_latency, noise_power, sinr_targets, sinr_uplink, system_latency, uplink_latency, PhyConfig};
use crate::rng::{derive_seed, stream_rng, Stream};
use crate::scalar::Real;
use crate::scheduler::{
    full_policy, random_policy, schedule_round, PrioritySettings, RoundInputs, ScheduleResult, SchedulerSettings,
};

use super::config::{ExperimentConfig, Policy};

/// One row of the metrics table.
#[derive(Debug, Clone, PartialEq)]
pub struct RoundMetrics<T> {
    /// 1-based round index `t`.
    pub round: usize,
    pub policy: Policy,
    /// `F(w_t)`
    pub loss: T,
    /// Training accuracy of `w_t`.
    pub accuracy: T,
    /// `sum_{k in S_t} alpha_k`
    pub weighted_mass: T,
    pub scheduled_count: usize,
    /// `||e_t||^2`
    pub residual_norm_sq: T,
    /// `(sum_{k not in S_t} alpha_k)^2`, i.e. `(1 - weighted_mass)^2`
    pub gap_term: T,
    pub system_latency: T,
    /// `||grad F(w_{t-1})||^2`
    pub grad_norm_sq: T,
}

/// Per-experiment totals and the convergence bound.
#[derive(Debug, Clone, PartialEq)]
pub struct Summary<T> {
    pub rounds: usize,
    pub final_loss: T,
    pub final_accuracy: T,
    pub mean_weighted_mass: T,
    /// `(1/tau) sum_t ||grad F(w_{t-1})||^2`
    pub mean_grad_norm_sq: T,
    /// Bound with `F*` replaced by the gradient-descent loss estimate.
    pub bound: T,
    /// Bound with `F* = 0`, the trivial lower limit of cross-entropy.
    pub bound_conservative: T,
    pub initial_loss: T,
    pub optimal_loss_estimate: T,
    pub step_size: T,
    pub smoothness: T,
    pub kappa_analytic: T,
    pub kappa_empirical: T,
    /// Largest per-sample squared gradient norm seen during training.
    pub max_sample_grad_sq: T,
    pub postponements: usize,
    pub solver_failures: usize,
    pub identity_violations: usize,
    pub residual_violations: usize,
    pub descent_violations: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentRecord<T> {
    pub config: ExperimentConfig,
    pub rounds: Vec<RoundMetrics<T>>,
    pub summary: Summary<T>,
}

impl<T: Real> ExperimentRecord<T> {
    /// Rebuilds the sequence-derived part of the summary from the rows.
    pub fn recompute_summary(&self) -> Result<Summary<T>> {
        let last = self.rounds.last().ok_or(Error::EmptySchedule)?;
        let n = T::count(self.rounds.len());
        let s = &self.summary;
        let gaps: Vec<T> = self.rounds.iter().map(|r| r.gap_term).collect();
        let inputs = |f_star| BoundInputs {
            smoothness: s.smoothness,
            gradient_bound: s.kappa_analytic,
            step_size: s.step_size,
            initial_loss: s.initial_loss,
            optimal_loss_estimate: f_star,
            round_count: self.rounds.len(),
        };
        Ok(Summary {
            rounds: self.rounds.len(),
            final_loss: last.loss,
            final_accuracy: last.accuracy,
            mean_weighted_mass: self.rounds.iter().map(|r| r.weighted_mass).sum::<T>() / n,
            mean_grad_norm_sq: self.rounds.iter().map(|r| r.grad_norm_sq).sum::<T>() / n,
            bound: theorem_bound(&inputs(s.optimal_loss_estimate), &gaps)?,
            bound_conservative: theorem_bound(&inputs(T::zero()), &gaps)?,
            ..s.clone()
        })
    }
}

/// Dataset, shards, topology and the constants derived from them. These
/// depend only on the config and seed, never on the policy.
#[derive(Debug, Clone)]
pub struct Environment<T> {
    pub phy: PhyConfig<T>,
    pub sigma2: T,
    pub data: Dataset<T>,
    pub shards: Vec<DataShard<T>>,
    pub weights: Vec<T>,
    pub topology: Topology<T>,
    pub local_latencies: Vec<T>,
    pub step_size: T,
    pub smoothness: T,
    pub kappa_analytic: T,
    pub kappa_empirical: T,
    pub initial_loss: T,
    pub optimal_loss_estimate: T,
}

impl<T: Real> Environment<T> {
    pub fn build(cfg: &ExperimentConfig) -> Result<Self> {
        cfg.validate()?;
        let phy = cfg.phy::<T>();
        let data: Dataset<T> = match &cfg.dataset_path {
            Some(path) => load_csv(path, Some(cfg.classes))?,
            None => synthetic_gaussian_mixture(&cfg.synthetic(), cfg.seed)?,
        };
        let shards = partition_noniid(&data, cfg.devices, cfg.seed)?;
        let weights = shards.iter().map(|s| s.weight).collect();
        let topology = Topology::sample(
            cfg.devices,
            T::lit(cfg.inner_radius_m),
            T::lit(cfg.outer_radius_m),
            &mut stream_rng(cfg.seed, Stream::Topology, 0, 0),
        )?;
        let local_latencies = shards.iter().map(|s| local_latency(s.size(), &phy)).collect();

        let smoothness = crate::fl::second_moment_smoothness(&data, true);
        let step_size = T::lit(cfg.learning_rate).min(T::one() / smoothness);
        let est = estimate_smoothness_and_kappa(&data, step_size, cfg.kappa_probe_steps)?;
        let model = Model::for_dataset(&data);
        let initial_loss = model.loss(&ModelParams::zeros(&model), &data)?;
        let optimum = estimate_optimal_loss(
            &data,
            est.smoothness,
            T::lit(cfg.optimum_tolerance),
            cfg.optimum_iterations,
        )?;
        log::debug!(
            "L = {}, step = {}, kappa = {} (analytic) / {} (probe), F* <= {} after {} iterations",
            est.smoothness,
            step_size,
            est.kappa_analytic,
            est.kappa_empirical,
            optimum.loss,
            optimum.iterations
        );
        Ok(Self {
            sigma2: noise_power(&phy),
            phy,
            data,
            shards,
            weights,
            topology,
            local_latencies,
            step_size,
            smoothness: est.smoothness,
            kappa_analytic: est.kappa_analytic,
            kappa_empirical: est.kappa_empirical,
            initial_loss,
            optimal_loss_estimate: optimum.loss,
        })
    }
}

fn scheduler_settings<T: Real>(cfg: &ExperimentConfig) -> SchedulerSettings<T> {
    SchedulerSettings {
        priority: PrioritySettings {
            reweight_iterations: cfg.reweight_iterations,
            ..Default::default()
        },
        ..Default::default()
    }
}

/// Runs `cfg.rounds` rounds of `cfg.policy`.
pub fn run_experiment<T: Real>(cfg: &ExperimentConfig) -> Result<ExperimentRecord<T>> {
    let env = Environment::build(cfg)?;
    run_in(&env, cfg)
}

/// Runs an experiment on a prebuilt environment, so several policies can
/// share the dataset and the constant estimates.
pub fn run_in<T: Real>(env: &Environment<T>, cfg: &ExperimentConfig) -> Result<ExperimentRecord<T>> {
    cfg.validate()?;
    if env.shards.len() != cfg.devices {
        return Err(Error::Dimension {
            expected: cfg.devices,
            actual: env.shards.len(),
        });
    }
    let settings = scheduler_settings::<T>(cfg);
    let targets = sinr_targets(&env.phy, &env.local_latencies);
    let model = Model::for_dataset(&env.data);
    let eta = env.step_size;
    let half_eta = eta * T::lit(0.5);
    let four_kappa = T::lit(4.0) * env.kappa_analytic;

    let mut w = ModelParams::zeros(&model);
    let mut rows = Vec::with_capacity(cfg.rounds);
    let mut postponements = 0;
    let mut solver_failures = 0;
    let mut identity_violations = 0;
    let mut residual_violations = 0;
    let mut descent_violations = 0;
    let mut max_sample_grad_sq = T::zero();

    for t in 1..=cfg.rounds {
        let mut outcome = None;
        for attempt in 0..cfg.max_postponements {
            let mut channels = draw_channels(
                &env.topology,
                cfg.antennas,
                derive_seed(cfg.seed, Stream::Channel, t as u64, attempt as u64),
            )?;
            channels.round_index = t;
            let inputs = RoundInputs {
                channels: &channels,
                targets: &targets,
                weights: &env.weights,
                sum_power: env.phy.sum_power,
                sigma2: env.sigma2,
            };
            let schedule = match cfg.policy {
                Policy::Proposed => schedule_round(&inputs, &settings)?,
                Policy::Random => {
                    let mut rng = stream_rng(cfg.seed, Stream::RandomPolicy, t as u64, attempt as u64);
                    random_policy(&inputs, &mut rng, &settings)?
                }
                Policy::Full => full_policy(&inputs)?,
            };
            if schedule
                .priority
                .as_ref()
                .is_some_and(|p| p.solver_status == Status::Failed)
            {
                solver_failures += 1;
                if 2 * solver_failures > cfg.rounds {
                    return Err(Error::Solver(format!(
                        "priority solver failed {solver_failures} times by round {t} of {}",
                        cfg.rounds
                    )));
                }
            }
            if schedule.is_empty() {
                postponements += 1;
                log::debug!("round {t}: attempt {attempt} scheduled nobody, redrawing channels");
                continue;
            }
            let latency = round_latency(&schedule, &channels, env)?;
            outcome = Some((schedule, latency));
            break;
        }
        let Some((schedule, latency)) = outcome else {
            return Err(Error::Postponed {
                round: t,
                attempts: cfg.max_postponements,
            });
        };

        let mut set = schedule.scheduled.clone();
        set.sort_unstable();
        let rs = round_step(&model, &w, &env.data, &env.shards, &set, eta)?;
        let f_next = model.loss(&rs.next, &env.data)?;
        let accuracy = model.accuracy(&rs.next, &env.data)?;
        let grad_sq = dot(&rs.full_gradient, &rs.full_gradient);
        let e_sq = dot(&rs.residual, &rs.residual);
        let mass = schedule.weighted_mass;
        let miss: T = (0..cfg.devices)
            .filter(|k| set.binary_search(k).is_err())
            .map(|k| env.weights[k])
            .sum();
        let gap = miss * miss;

        if rs.identity_residual > T::tolerance(1e-10) * (T::one() + w.norm()) {
            identity_violations += 1;
            log::warn!("round {t}: update identity residual {}", rs.identity_residual);
        }
        if e_sq > four_kappa * gap {
            residual_violations += 1;
            log::warn!("round {t}: ||e||^2 = {e_sq} exceeds 4 kappa g = {}", four_kappa * gap);
        }
        let descent_rhs = rs.loss - half_eta * grad_sq + half_eta * e_sq;
        if f_next > descent_rhs + T::tolerance(1e-8) * (T::one() + rs.loss.abs()) {
            descent_violations += 1;
            log::warn!("round {t}: descent inequality fails, {f_next} > {descent_rhs}");
        }
        max_sample_grad_sq = max_sample_grad_sq.max(rs.max_sample_grad_sq);

        rows.push(RoundMetrics {
            round: t,
            policy: cfg.policy,
            loss: f_next,
            accuracy,
            weighted_mass: mass,
            scheduled_count: set.len(),
            residual_norm_sq: e_sq,
            gap_term: gap,
            system_latency: latency,
            grad_norm_sq: grad_sq,
        });
        log::trace!("round {t}: |S| = {}, mass = {mass}, loss = {f_next}", set.len());
        w = rs.next;
    }

    let record = ExperimentRecord {
        config: cfg.clone(),
        rounds: rows,
        summary: Summary {
            rounds: 0,
            final_loss: T::zero(),
            final_accuracy: T::zero(),
            mean_weighted_mass: T::zero(),
            mean_grad_norm_sq: T::zero(),
            bound: T::zero(),
            bound_conservative: T::zero(),
            initial_loss: env.initial_loss,
            optimal_loss_estimate: env.optimal_loss_estimate,
            step_size: eta,
            smoothness: env.smoothness,
            kappa_analytic: env.kappa_analytic,
            kappa_empirical: env.kappa_empirical,
            max_sample_grad_sq,
            postponements,
            solver_failures,
            identity_violations,
            residual_violations,
            descent_violations,
        },
    };
    let summary = record.recompute_summary()?;
    if summary.max_sample_grad_sq > summary.kappa_analytic {
        log::warn!(
            "observed sample gradient {} exceeds analytic kappa {}",
            summary.max_sample_grad_sq,
            summary.kappa_analytic
        );
    }
    Ok(ExperimentRecord { summary, ..record })
}

fn round_latency<T: Real>(
    schedule: &ScheduleResult<T>,
    channels: &crate::channel::ChannelRealization<T>,
    env: &Environment<T>,
) -> Result<T> {
    let set = &schedule.scheduled;
    let mut local = Vec::with_capacity(set.len());
    let mut uplink = Vec::with_capacity(set.len());
    for &k in set {
        let sinr = sinr_uplink(k, channels, &schedule.beamformers, &schedule.powers, set, env.sigma2)?;
        local.push(env.local_latencies[k]);
        uplink.push(uplink_latency(sinr, &env.phy)?);
    }
    system_latency(&local, &uplink)
}

/// Runs every policy on the same environment and channel seeds, in
/// parallel, returning records in [`Policy::ALL`] order.
pub fn run_comparison<T: Real>(cfg: &ExperimentConfig) -> Result<Vec<ExperimentRecord<T>>> {
    let env = Environment::<T>::build(cfg)?;
    let results: Vec<Result<ExperimentRecord<T>>> = std::thread::scope(|scope| {
        let handles: Vec<_> = Policy::ALL
            .iter()
            .map(|&policy| {
                let env = &env;
                let cfg = ExperimentConfig {
                    policy,
                    ..cfg.clone()
                };
                scope.spawn(move || run_in(env, &cfg))
            })
            .collect();
        handles
            .into_iter()
            .map(|h| h.join().unwrap_or_else(|_| Err(Error::Solver("experiment thread panicked".into()))))
            .collect()
    });
    results.into_iter().collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny(policy: Policy) -> ExperimentConfig {
        ExperimentConfig {
            devices: 4,
            rounds: 10,
            samples: 200,
            feature_dim: 6,
            classes: 3,
            policy,
            seed: 5,
            optimum_iterations: 200,
            ..Default::default()
        }
    }

    #[test]
    fn full_policy_has_unit_mass_and_zero_gap() {
        let rec = run_experiment::<f64>(&tiny(Policy::Full)).unwrap();
        assert_eq!(rec.rounds.len(), 10);
        for r in &rec.rounds {
            assert!((r.weighted_mass - 1.0).abs() < 1e-12);
            assert!(r.gap_term < 1e-24);
            assert!(r.residual_norm_sq < 1e-24);
            assert_eq!(r.scheduled_count, 4);
        }
        assert_eq!(rec.summary.postponements, 0);
        let s = &rec.summary;
        let descent = 2.0 * (s.initial_loss - s.optimal_loss_estimate) / (s.step_size * 10.0);
        assert!((s.bound - descent).abs() <= 1e-9 * descent);
    }

    #[test]
    fn rerun_is_identical_and_summary_recomputes() {
        let a = run_experiment::<f64>(&tiny(Policy::Proposed)).unwrap();
        let b = run_experiment::<f64>(&tiny(Policy::Proposed)).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.recompute_summary().unwrap(), a.summary);
        assert_eq!(a.summary.identity_violations, 0);
        assert_eq!(a.summary.residual_violations, 0);
        assert_eq!(a.summary.descent_violations, 0);
    }

    #[test]
    fn comparison_matches_individual_runs() {
        let cfg = tiny(Policy::Proposed);
        let all = run_comparison::<f64>(&cfg).unwrap();
        for (rec, policy) in all.iter().zip(Policy::ALL) {
            assert_eq!(rec.config.policy, policy);
            let single = run_experiment::<f64>(&ExperimentConfig { policy, ..cfg.clone() }).unwrap();
            assert_eq!(rec.rounds, single.rounds);
        }
    }

    #[test]
    fn invalid_config_fails_before_running() {
        let cfg = ExperimentConfig {
            rounds: 0,
            ..tiny(Policy::Full)
        };
        assert!(matches!(run_experiment::<f64>(&cfg), Err(Error::Config(_))));
    }
}
