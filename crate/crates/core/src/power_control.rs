//! Sum-power feasibility of a scheduling set under SINR targets.
//!
//! The required-power map `p~_k(p) = gamma_k / (h_k^H Sigma_k^{-1} h_k)` with
//! `Sigma_k = sum_{i != k} p_i h_i h_i^H + sigma^2 I` is a standard
//! interference function. Iterating it with renormalization to `P_sum`
//! converges to a unique direction; the set is feasible when one more
//! unnormalized step at that direction needs no more than `P_sum`.
//!
//! Internally powers are measured in units of `P_sum` and channels are
//! scaled by `sqrt(P_sum) / sigma`, so the noise term is the identity.

use num_complex::Complex;

use crate::channel::ChannelRealization;
use crate::error::{domain, Error, Result};
use crate::linalg::{CVec, HermitianCholesky, HermitianMatrix};
use crate::phy::{PowerAllocation, SinrTargets};
use crate::scalar::Real;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FeasibilitySettings<T> {
    /// Relative sup-norm change of the normalized powers that ends the iteration.
    pub tolerance: T,
    pub max_iterations: usize,
    /// Relative allowance on the power budget at the fixed point.
    pub budget_slack: T,
}

impl<T: Real> Default for FeasibilitySettings<T> {
    fn default() -> Self {
        Self {
            tolerance: T::tolerance(1e-9),
            max_iterations: 1000,
            budget_slack: T::tolerance(1e-8),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FeasibilityReport<T> {
    pub feasible: bool,
    /// Required powers `p~` when feasible, otherwise the last normalized iterate.
    pub powers: PowerAllocation<T>,
    /// Normalized fixed point, summing to one over the set.
    pub direction: Vec<T>,
    /// `sum p~ / P_sum` at the fixed point.
    pub budget_ratio: T,
    pub iterations: usize,
    pub converged: bool,
}

/// One application of the required-power map: `gamma_k / (g_k^H (noise I +
/// sum_{i != k} q_i g_i g_i^H)^{-1} g_k)` for every member of the set.
fn required<T: Real>(channels: &[&[Complex<T>]], gammas: &[T], q: &[T], noise: T) -> Result<Vec<T>> {
    let n = channels[0].len();
    (0..channels.len())
        .map(|k| {
            let mut cov = HermitianMatrix::scaled_identity(n, noise);
            for (i, g) in channels.iter().enumerate() {
                if i != k && q[i] > T::zero() {
                    cov.add_rank_one(q[i], g);
                }
            }
            let gain = HermitianCholesky::factor(&cov)?.inverse_quadratic_form(channels[k]);
            if !(gain > T::zero()) {
                return Err(Error::Singular);
            }
            Ok(gammas[k] / gain)
        })
        .collect()
}

/// Unnormalized required powers in watts for the set's members, given the
/// current powers `p` of the other devices.
pub fn required_powers<T: Real>(
    set: &[usize],
    channels: &ChannelRealization<T>,
    gammas: &[T],
    p: &PowerAllocation<T>,
    sigma2: T,
) -> Result<Vec<T>> {
    check_set(set, channels, gammas)?;
    let hs: Vec<&[Complex<T>]> = set.iter().map(|&k| channels.channel(k)).collect();
    let q: Vec<T> = set.iter().map(|&k| p.powers[k]).collect();
    required(&hs, gammas, &q, sigma2)
}

fn check_set<T: Real>(set: &[usize], channels: &ChannelRealization<T>, gammas: &[T]) -> Result<()> {
    if set.is_empty() {
        return Err(Error::EmptySchedule);
    }
    if gammas.len() != set.len() {
        return Err(Error::Dimension {
            expected: set.len(),
            actual: gammas.len(),
        });
    }
    if let Some(&k) = set.iter().find(|&&k| k >= channels.device_count()) {
        return Err(domain(format!("device {k} out of range")));
    }
    Ok(())
}

/// Fixed-point feasibility test from the uniform start `P_sum / |S|`.
pub fn feasibility_test<T: Real>(
    set: &[usize],
    channels: &ChannelRealization<T>,
    targets: &SinrTargets<T>,
    sum_power: T,
    sigma2: T,
    settings: &FeasibilitySettings<T>,
) -> Result<FeasibilityReport<T>> {
    let start = vec![T::one(); set.len()];
    feasibility_test_from(set, channels, targets, sum_power, sigma2, &start, settings)
}

/// Fixed-point feasibility test from an arbitrary positive start; the start
/// is rescaled to sum to `P_sum`.
pub fn feasibility_test_from<T: Real>(
    set: &[usize],
    channels: &ChannelRealization<T>,
    targets: &SinrTargets<T>,
    sum_power: T,
    sigma2: T,
    start: &[T],
    settings: &FeasibilitySettings<T>,
) -> Result<FeasibilityReport<T>> {
    let gammas = targets.of(set)?;
    check_set(set, channels, &gammas)?;
    if !(sum_power > T::zero()) || !(sigma2 > T::zero()) {
        return Err(domain("power budget and noise power must be positive"));
    }
    if start.len() != set.len() || start.iter().any(|&v| !(v > T::zero()) || !v.is_finite()) {
        return Err(domain("start powers must be positive, one per device"));
    }
    let scale = (sum_power / sigma2).sqrt();
    let scaled: Vec<CVec<T>> = set
        .iter()
        .map(|&k| channels.channel(k).iter().map(|z| z * scale).collect())
        .collect();
    let gs: Vec<&[Complex<T>]> = scaled.iter().map(Vec::as_slice).collect();
    let one = T::one();

    let total: T = start.iter().copied().sum();
    let mut q: Vec<T> = start.iter().map(|&v| v / total).collect();
    let mut converged = false;
    let mut iterations = 0;
    while iterations < settings.max_iterations {
        iterations += 1;
        let next = normalize(required(&gs, &gammas, &q, one)?);
        let change = next
            .iter()
            .zip(&q)
            .map(|(&a, &b)| (a - b).abs())
            .fold(T::zero(), T::max);
        let size = next.iter().copied().fold(T::zero(), T::max);
        q = next;
        if change <= settings.tolerance * size {
            converged = true;
            break;
        }
    }

    let tilde = required(&gs, &gammas, &q, one)?;
    let budget_ratio: T = tilde.iter().copied().sum();
    let feasible = converged && budget_ratio <= one + settings.budget_slack;
    let mut powers = PowerAllocation::zeros(channels.device_count());
    let chosen = if feasible { &tilde } else { &q };
    for (&k, &v) in set.iter().zip(chosen) {
        powers.powers[k] = v * sum_power;
    }
    Ok(FeasibilityReport {
        feasible,
        powers,
        direction: q,
        budget_ratio,
        iterations,
        converged,
    })
}

fn normalize<T: Real>(v: Vec<T>) -> Vec<T> {
    let s: T = v.iter().copied().sum();
    v.into_iter().map(|x| x / s).collect()
}
