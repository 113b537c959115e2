//! Per-round device scheduling: greedy admission in priority order, plus the
//! random and full-participation baselines.

pub mod priority;

use rand::seq::SliceRandom;
use rand::Rng;

use crate::channel::ChannelRealization;
use crate::conic::Status;
use crate::error::{Error, Result};
use crate::linalg::cnorm_sqr;
use crate::phy::{mmse_beamformers, BeamformerSet, PowerAllocation, SinrTargets};
use crate::power_control::{feasibility_test, FeasibilityReport, FeasibilitySettings};
use crate::scalar::Real;

pub use priority::{
    build_cone_program, constraint_residuals, downlink_feasible, dual_sinr, solve_priority, ConeProgram,
    ConstraintCounts, ConstraintResiduals, DownlinkCheck, PrioritySettings, PrioritySolution, VariableLayout,
};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SchedulerSettings<T> {
    pub priority: PrioritySettings<T>,
    pub feasibility: FeasibilitySettings<T>,
    /// Slacks below this are treated as exact zeros when ordering.
    pub zero_slack: T,
    /// Draws tried by the random policy before it falls back to a prefix.
    pub random_attempts: usize,
}

impl<T: Real> Default for SchedulerSettings<T> {
    fn default() -> Self {
        Self {
            priority: PrioritySettings::default(),
            feasibility: FeasibilitySettings::default(),
            zero_slack: T::tolerance(1e-6),
            random_attempts: 10,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScheduleResult<T> {
    /// Scheduled devices in admission order.
    pub scheduled: Vec<usize>,
    pub powers: PowerAllocation<T>,
    pub beamformers: BeamformerSet<T>,
    /// `sum_{k in S} alpha_k`
    pub weighted_mass: T,
    /// Present for the proposed policy.
    pub priority: Option<PrioritySolution<T>>,
    /// Order in which devices were offered for admission.
    pub order: Vec<usize>,
    /// Feasibility outcome of each tested prefix of `order`.
    pub prefix_outcomes: Vec<bool>,
}

impl<T: Real> ScheduleResult<T> {
    fn empty(device_count: usize) -> Self {
        Self {
            scheduled: Vec::new(),
            powers: PowerAllocation::zeros(device_count),
            beamformers: BeamformerSet::default(),
            weighted_mass: T::zero(),
            priority: None,
            order: Vec::new(),
            prefix_outcomes: Vec::new(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.scheduled.is_empty()
    }
}

/// Channel, target and budget data shared by every policy.
#[derive(Debug, Clone, Copy)]
pub struct RoundInputs<'a, T> {
    pub channels: &'a ChannelRealization<T>,
    pub targets: &'a SinrTargets<T>,
    /// `alpha_k` for every device.
    pub weights: &'a [T],
    pub sum_power: T,
    pub sigma2: T,
}

impl<T: Real> RoundInputs<'_, T> {
    fn validate(&self) -> Result<()> {
        let k = self.channels.device_count();
        for len in [self.weights.len(), self.targets.device_count()] {
            if len != k {
                return Err(Error::Dimension { expected: k, actual: len });
            }
        }
        Ok(())
    }

    fn mass(&self, set: &[usize]) -> T {
        set.iter().map(|&k| self.weights[k]).sum()
    }

    fn feasibility(&self, set: &[usize], settings: &FeasibilitySettings<T>) -> Result<FeasibilityReport<T>> {
        feasibility_test(set, self.channels, self.targets, self.sum_power, self.sigma2, settings)
    }
}

/// Admission order: ascending slack (values below `zero_slack` count as
/// zero), then larger weight, then smaller index.
pub fn priority_order<T: Real>(devices: &[usize], slacks: &[T], weights: &[T], zero_slack: T) -> Vec<usize> {
    let key = |k: usize| {
        let s = slacks[k];
        if s < zero_slack {
            T::zero()
        } else {
            s
        }
    };
    let mut order = devices.to_vec();
    order.sort_by(|&a, &b| {
        key(a)
            .partial_cmp(&key(b))
            .unwrap_or(std::cmp::Ordering::Equal)
            .then(weights[b].partial_cmp(&weights[a]).unwrap_or(std::cmp::Ordering::Equal))
            .then(a.cmp(&b))
    });
    order
}

/// Offers devices in `order` one at a time and stops at the first prefix
/// that fails the feasibility test.
pub fn admit_prefix<T: Real>(
    order: &[usize],
    inputs: &RoundInputs<'_, T>,
    settings: &FeasibilitySettings<T>,
) -> Result<ScheduleResult<T>> {
    inputs.validate()?;
    let mut result = ScheduleResult::empty(inputs.channels.device_count());
    result.order = order.to_vec();
    let mut last: Option<FeasibilityReport<T>> = None;
    for len in 1..=order.len() {
        let report = inputs.feasibility(&order[..len], settings)?;
        result.prefix_outcomes.push(report.feasible);
        if !report.feasible {
            break;
        }
        last = Some(report);
    }
    if let Some(report) = last {
        let set = order[..result.prefix_outcomes.iter().take_while(|&&ok| ok).count()].to_vec();
        finish(&mut result, set, report.powers, inputs)?;
    }
    Ok(result)
}

fn finish<T: Real>(
    result: &mut ScheduleResult<T>,
    set: Vec<usize>,
    powers: PowerAllocation<T>,
    inputs: &RoundInputs<'_, T>,
) -> Result<()> {
    result.beamformers = mmse_beamformers(&set, inputs.channels, &powers, inputs.sigma2)?;
    result.weighted_mass = inputs.mass(&set);
    result.powers = powers;
    result.scheduled = set;
    Ok(())
}

/// Proposed policy: priorities from the cone relaxation, then greedy
/// admission. If the solver fails, devices are offered strongest channel
/// first.
pub fn schedule_round<T: Real>(inputs: &RoundInputs<'_, T>, settings: &SchedulerSettings<T>) -> Result<ScheduleResult<T>> {
    inputs.validate()?;
    let admissible = inputs.targets.admissible();
    let Some(program) = build_cone_program(
        &admissible,
        inputs.channels,
        inputs.targets,
        inputs.weights,
        inputs.sum_power,
        inputs.sigma2,
    )?
    else {
        return Ok(ScheduleResult::empty(inputs.channels.device_count()));
    };
    let solution = solve_priority(&program, &settings.priority);
    let order = if solution.solver_status == Status::Failed {
        log::warn!(
            "priority solve failed after {} iterations; ordering by channel strength",
            solution.iterations
        );
        strongest_first(&admissible, inputs.channels)
    } else {
        priority_order(&admissible, &solution.slacks, inputs.weights, settings.zero_slack)
    };
    let mut result = admit_prefix(&order, inputs, &settings.feasibility)?;
    result.priority = Some(solution);
    Ok(result)
}

fn strongest_first<T: Real>(devices: &[usize], channels: &ChannelRealization<T>) -> Vec<usize> {
    let mut order = devices.to_vec();
    order.sort_by(|&a, &b| {
        cnorm_sqr(channels.channel(b))
            .partial_cmp(&cnorm_sqr(channels.channel(a)))
            .unwrap_or(std::cmp::Ordering::Equal)
            .then(a.cmp(&b))
    });
    order
}

/// Random baseline: a uniformly sized, uniformly drawn subset of the
/// admissible devices that passes the feasibility test. After
/// `random_attempts` failed draws the largest feasible prefix of the last
/// draw's permutation is used.
pub fn random_policy<T: Real, R: Rng + ?Sized>(
    inputs: &RoundInputs<'_, T>,
    rng: &mut R,
    settings: &SchedulerSettings<T>,
) -> Result<ScheduleResult<T>> {
    inputs.validate()?;
    let mut admissible = inputs.targets.admissible();
    if admissible.is_empty() {
        return Ok(ScheduleResult::empty(inputs.channels.device_count()));
    }
    for _ in 0..settings.random_attempts.max(1) {
        admissible.shuffle(rng);
        let size = rng.random_range(1..=admissible.len());
        let set = &admissible[..size];
        let report = inputs.feasibility(set, &settings.feasibility)?;
        if report.feasible {
            let mut result = ScheduleResult::empty(inputs.channels.device_count());
            result.order = set.to_vec();
            result.prefix_outcomes = vec![true];
            finish(&mut result, set.to_vec(), report.powers, inputs)?;
            return Ok(result);
        }
    }
    admit_prefix(&admissible, inputs, &settings.feasibility)
}

/// Full participation, ignoring latency and power limits. Powers are an
/// equal split of the budget and receivers are MMSE, used only to report
/// the latency such a round would take.
pub fn full_policy<T: Real>(inputs: &RoundInputs<'_, T>) -> Result<ScheduleResult<T>> {
    inputs.validate()?;
    let k = inputs.channels.device_count();
    let set: Vec<usize> = (0..k).collect();
    let mut result = ScheduleResult::empty(k);
    result.order = set.clone();
    let powers = PowerAllocation::uniform(k, &set, inputs.sum_power);
    finish(&mut result, set, powers, inputs)?;
    Ok(result)
}

#[cfg(test)]
mod tests {
    use super::*;
    use num_complex::Complex;

    fn c(re: f64, im: f64) -> Complex<f64> {
        Complex::new(re, im)
    }

    #[test]
    fn order_snaps_small_slacks_and_breaks_ties() {
        let slacks = [1e-9, 0.5, 0.0, 0.2, 3e-7];
        let weights = [0.1, 0.2, 0.1, 0.3, 0.3];
        let order = priority_order(&[0, 1, 2, 3, 4], &slacks, &weights, 1e-6);
        assert_eq!(order, vec![4, 0, 2, 3, 1]);
    }

    #[test]
    fn orthogonal_loose_instance_schedules_everyone() {
        let ch = ChannelRealization::new(
            vec![
                vec![c(1.0, 0.0), c(0.0, 0.0), c(0.01, 0.0)],
                vec![c(0.0, 0.0), c(1.0, 0.0), c(0.0, 0.0)],
                vec![c(0.0, 0.01), c(0.0, 0.0), c(1.0, 0.0)],
            ],
            0,
        )
        .unwrap();
        let targets = SinrTargets::from_linear(vec![Some(0.1); 3]).unwrap();
        let weights = [0.5, 0.3, 0.2];
        let inputs = RoundInputs {
            channels: &ch,
            targets: &targets,
            weights: &weights,
            sum_power: 10.0,
            sigma2: 1.0,
        };
        let r = schedule_round(&inputs, &Default::default()).unwrap();
        assert_eq!(r.scheduled.len(), 3);
        assert!((r.weighted_mass - 1.0).abs() < 1e-12);
        assert!(r.prefix_outcomes.iter().all(|&b| b));
        for (k, m) in &r.beamformers.receive {
            assert!((crate::linalg::cnorm(m) - 1.0).abs() < 1e-12, "device {k}");
        }
    }

    #[test]
    fn nothing_admissible_gives_empty_schedule() {
        let ch = ChannelRealization::new(vec![vec![c(1.0, 0.0)]; 2], 0).unwrap();
        let targets = SinrTargets::from_linear(vec![None, None]).unwrap();
        let inputs = RoundInputs {
            channels: &ch,
            targets: &targets,
            weights: &[0.5, 0.5],
            sum_power: 1.0,
            sigma2: 1.0,
        };
        assert!(schedule_round(&inputs, &Default::default()).unwrap().is_empty());
        let mut rng = rand_chacha::ChaCha8Rng::from_seed([3; 32]);
        assert!(random_policy(&inputs, &mut rng, &Default::default()).unwrap().is_empty());
        let full = full_policy(&inputs).unwrap();
        assert_eq!(full.scheduled, vec![0, 1]);
        assert!((full.weighted_mass - 1.0).abs() < 1e-15);
    }

    use rand::SeedableRng;
}
