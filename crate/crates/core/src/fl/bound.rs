//! Convergence bookkeeping: the aggregation residual `e_t`, the constants
//! `L` and `kappa`, and the average-gradient bound.

use std::collections::BTreeMap;

use crate::error::{Error, Result};
use crate::linalg::{axpy, dot, norm, symmetric_eigenvalues, Matrix};
use crate::scalar::Real;

use super::data::{DataShard, Dataset};
use super::model::{aggregate, step, Model, ModelParams};

/// Everything one global round produces from `w_{t-1}` and the schedule.
#[derive(Debug, Clone, PartialEq)]
pub struct RoundStep<T> {
    /// `w_t` from aggregating the scheduled local models.
    pub next: ModelParams<T>,
    /// `F(w_{t-1})`
    pub loss: T,
    /// `grad F(w_{t-1}) = sum_k alpha_k grad f_k(w_{t-1})`
    pub full_gradient: Vec<T>,
    /// `e_t`
    pub residual: Vec<T>,
    /// `|| w_t - (w_{t-1} - eta (grad F + e_t)) ||`
    pub identity_residual: T,
    /// Largest per-sample `||grad f(w_{t-1}; xi)||^2` over the dataset.
    pub max_sample_grad_sq: T,
}

/// Runs local updates on the scheduled shards, aggregates them, and
/// evaluates `e_t` and the consistency of the update identity.
pub fn round_step<T: Real>(
    model: &Model,
    w_prev: &ModelParams<T>,
    data: &Dataset<T>,
    shards: &[DataShard<T>],
    set: &[usize],
    eta: T,
) -> Result<RoundStep<T>> {
    if set.is_empty() {
        return Err(Error::EmptySchedule);
    }
    let alpha: Vec<T> = shards.iter().map(|s| s.weight).collect();
    let mut grads = Vec::with_capacity(shards.len());
    let mut loss = T::zero();
    for shard in shards {
        let (l, g) = model.loss_and_gradient(w_prev, data, Some(&shard.indices))?;
        loss += shard.weight * l;
        grads.push(g);
    }
    let len = model.param_len();
    let mut full = vec![T::zero(); len];
    for (g, &a) in grads.iter().zip(&alpha) {
        axpy(a, g, &mut full);
    }
    // e_t = sum_S alpha_k (miss / mass) g_k - sum_{not S} alpha_k g_k, with
    // miss = 1 - mass summed from the unscheduled side so that full
    // participation gives exactly zero.
    let mut scheduled = vec![false; shards.len()];
    for &k in set {
        *scheduled.get_mut(k).ok_or_else(|| Error::Domain(format!("device {k} has no shard")))? = true;
    }
    let mass: T = set.iter().map(|&k| alpha[k]).sum();
    let miss: T = (0..shards.len()).filter(|&k| !scheduled[k]).map(|k| alpha[k]).sum();
    let mut residual = vec![T::zero(); len];
    for k in 0..shards.len() {
        let coef = if scheduled[k] { alpha[k] * miss / mass } else { -alpha[k] };
        axpy(coef, &grads[k], &mut residual);
    }

    let locals: BTreeMap<usize, ModelParams<T>> = set.iter().map(|&k| (k, step(w_prev, &grads[k], eta))).collect();
    let next = aggregate(&locals, &alpha, set)?;
    let mut direction = full.clone();
    axpy(T::one(), &residual, &mut direction);
    let predicted = step(w_prev, &direction, eta);
    let diff: Vec<T> = next.weights.iter().zip(&predicted.weights).map(|(&a, &b)| a - b).collect();

    let max_sample_grad_sq = (0..data.len())
        .map(|i| {
            let (x, y) = data.sample(i);
            model.sample_gradient_norm_sq(w_prev, x, y)
        })
        .fold(T::zero(), T::max);

    Ok(RoundStep {
        next,
        loss,
        full_gradient: full,
        residual,
        identity_residual: norm(&diff),
        max_sample_grad_sq,
    })
}

/// Constants entering the average-gradient bound.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BoundInputs<T> {
    pub smoothness: T,
    pub gradient_bound: T,
    pub step_size: T,
    pub initial_loss: T,
    pub optimal_loss_estimate: T,
    pub round_count: usize,
}

/// `2 (F(w_0) - F*) / (eta tau) + (4 kappa / tau) sum_t (1 - sum_{S_t} alpha)^2`
pub fn theorem_bound<T: Real>(inputs: &BoundInputs<T>, gap_terms: &[T]) -> Result<T> {
    let tau = inputs.round_count;
    if tau == 0 || gap_terms.len() != tau {
        return Err(Error::Dimension {
            expected: tau,
            actual: gap_terms.len(),
        });
    }
    if !(inputs.step_size > T::zero()) || inputs.step_size * inputs.smoothness > T::one() + T::epsilon() {
        return Err(Error::Domain(format!(
            "step size {} outside (0, 1/L] for L = {}",
            inputs.step_size, inputs.smoothness
        )));
    }
    let tau = T::count(tau);
    let descent = T::lit(2.0) * (inputs.initial_loss - inputs.optimal_loss_estimate) / (inputs.step_size * tau);
    let gap: T = gap_terms.iter().copied().sum();
    Ok(descent + T::lit(4.0) * inputs.gradient_bound * gap / tau)
}

/// `L` and `kappa` for softmax regression on `data`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SmoothnessEstimate<T> {
    /// `lambda_max(mean x~ x~^T) / 2`, floored at `1e-8`.
    pub smoothness: T,
    /// `2 max ||x~||^2`, a global bound on per-sample gradient norms.
    pub kappa_analytic: T,
    /// Twice the largest per-sample gradient norm seen along a probe run.
    pub kappa_empirical: T,
}

/// `lambda_max(mean x x^T) / 2` over the raw features, or over `[x; 1]`
/// when `augmented`, floored at `1e-8`. The softmax Hessian has spectral
/// norm at most 1/2, so the augmented value is a smoothness constant of the
/// model's loss.
pub fn second_moment_smoothness<T: Real>(data: &Dataset<T>, augmented: bool) -> T {
    let f = data.feature_dim();
    let d = if augmented { f + 1 } else { f };
    let mut second = Matrix::zeros(d, d);
    let mut v = vec![T::one(); d];
    let inv_n = T::one() / T::count(data.len().max(1));
    for i in 0..data.len() {
        v[..f].copy_from_slice(data.sample(i).0);
        second.add_outer(inv_n, &v, &v);
    }
    let lambda = symmetric_eigenvalues(&second).last().copied().unwrap_or(T::zero());
    (lambda * T::lit(0.5)).max(T::lit(1e-8))
}

/// Analytic `L` and `kappa`, plus an empirical `kappa` from `probe_steps`
/// full-batch gradient steps of size `eta` from zero.
pub fn estimate_smoothness_and_kappa<T: Real>(
    data: &Dataset<T>,
    eta: T,
    probe_steps: usize,
) -> Result<SmoothnessEstimate<T>> {
    if data.is_empty() {
        return Err(Error::Data("empty dataset".into()));
    }
    let smoothness = second_moment_smoothness(data, true);
    let max_sq = (0..data.len())
        .map(|i| {
            let (x, _) = data.sample(i);
            dot(x, x) + T::one()
        })
        .fold(T::zero(), T::max);

    let model = Model::for_dataset(data);
    let mut w = ModelParams::zeros(&model);
    let mut observed = T::zero();
    for it in 0..=probe_steps {
        for i in 0..data.len() {
            let (x, y) = data.sample(i);
            observed = observed.max(model.sample_gradient_norm_sq(&w, x, y));
        }
        if it < probe_steps {
            let (_, g) = model.loss_and_gradient(&w, data, None)?;
            w = step(&w, &g, eta);
        }
    }
    Ok(SmoothnessEstimate {
        smoothness,
        kappa_analytic: T::lit(2.0) * max_sq,
        kappa_empirical: T::lit(2.0) * observed,
    })
}

/// Result of running full gradient descent towards the optimum.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OptimumEstimate<T> {
    pub loss: T,
    pub gradient_norm: T,
    pub iterations: usize,
}

/// Full-batch gradient descent with step `1/L` until the gradient norm drops
/// below `tolerance` or `max_iterations` is reached. The final loss is an
/// achievable value, hence an upper estimate of `F*`.
pub fn estimate_optimal_loss<T: Real>(
    data: &Dataset<T>,
    smoothness: T,
    tolerance: T,
    max_iterations: usize,
) -> Result<OptimumEstimate<T>> {
    let model = Model::for_dataset(data);
    let mut w = ModelParams::zeros(&model);
    let eta = T::one() / smoothness;
    let (mut loss, mut g) = model.loss_and_gradient(&w, data, None)?;
    let mut iterations = 0;
    while iterations < max_iterations && norm(&g) > tolerance {
        w = step(&w, &g, eta);
        (loss, g) = model.loss_and_gradient(&w, data, None)?;
        iterations += 1;
    }
    Ok(OptimumEstimate {
        loss,
        gradient_norm: norm(&g),
        iterations,
    })
}
