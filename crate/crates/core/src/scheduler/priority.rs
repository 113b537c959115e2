//! Device priorities from the sparsity-inducing second-order cone relaxation
//!
//! ```text
//! minimize    sum_k alpha_k s_k
//! subject to  Re(m_k^H h_k) / sqrt(gamma_k) + s_k >= || ((m_i^H h_k)_{i != k}, 1) ||
//!             Im(m_k^H h_k) = 0
//!             sum_k ||m_k||^2 <= P_sum / sigma^2,   s >= 0
//! ```
//!
//! over the dual downlink beamformers `m_k` of the admissible devices.
//!
//! The beamformers are rescaled as `u_k = m_k / rho` with
//! `rho = sqrt(P_sum / sigma^2)`, so the power constraint becomes `||u|| <= 1`
//! and the channel enters as `g_k = rho h_k`. Each `u_k in C^N` is embedded as
//! `[Re u_k; Im u_k] in R^{2N}`, giving
//!
//! ```text
//! Re(u^H g) = [Re g; Im g] . [Re u; Im u]
//! Im(u^H g) = [Im g; -Re g] . [Re u; Im u]
//! ```
//!
//! Variable vector: `[u_1, ..., u_K, s_1, ..., s_K]`. Cone order: the
//! nonnegative orthant for `s`, one `2K`-dimensional second-order cone per
//! device, then the `(1 + 2NK)`-dimensional power cone.

use num_complex::Complex;

use crate::channel::ChannelRealization;
use crate::conic::{self, Cone, Problem, Status};
use crate::error::{domain, Error, Result};
use crate::linalg::{cdot, cnorm_sqr, CVec, CsrMatrix};
use crate::phy::SinrTargets;
use crate::scalar::Real;

/// Positions of each device's beamformer and slack in the real variable vector.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct VariableLayout {
    pub devices: usize,
    pub antennas: usize,
}

impl VariableLayout {
    /// Real parts of the `j`-th local device's beamformer start here; the
    /// imaginary parts follow after `antennas` entries.
    pub fn beam(&self, j: usize) -> usize {
        2 * self.antennas * j
    }

    pub fn slack(&self, j: usize) -> usize {
        2 * self.antennas * self.devices + j
    }

    pub fn len(&self) -> usize {
        (2 * self.antennas + 1) * self.devices
    }

    pub fn is_empty(&self) -> bool {
        self.devices == 0
    }

    /// Writes `(s, m)` in scaled units into a variable vector.
    pub fn pack<T: Real>(&self, slacks: &[T], beams: &[CVec<T>]) -> Vec<T> {
        let mut x = vec![T::zero(); self.len()];
        for (j, b) in beams.iter().enumerate() {
            let o = self.beam(j);
            for (a, z) in b.iter().enumerate() {
                x[o + a] = z.re;
                x[o + self.antennas + a] = z.im;
            }
        }
        for (j, &s) in slacks.iter().enumerate() {
            x[self.slack(j)] = s;
        }
        x
    }

    /// Inverse of [`pack`](Self::pack).
    pub fn unpack<T: Real>(&self, x: &[T]) -> (Vec<T>, Vec<CVec<T>>) {
        let n = self.antennas;
        let beams = (0..self.devices)
            .map(|j| {
                let o = self.beam(j);
                (0..n).map(|a| Complex::new(x[o + a], x[o + n + a])).collect()
            })
            .collect();
        let slacks = (0..self.devices).map(|j| x[self.slack(j)]).collect();
        (slacks, beams)
    }
}

/// Number of constraint blocks of each kind.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ConstraintCounts {
    pub cones: usize,
    pub equalities: usize,
    pub power: usize,
    pub nonnegativity: usize,
}

/// The priority problem for a fixed list of admissible devices.
#[derive(Debug, Clone)]
pub struct ConeProgram<T> {
    /// Device ids in program order.
    pub devices: Vec<usize>,
    /// Total number of devices in the channel realization.
    pub device_count: usize,
    pub layout: VariableLayout,
    pub problem: Problem<T>,
    /// `sqrt(P_sum / sigma^2)`.
    pub scale: T,
    pub gammas: Vec<T>,
    pub weights: Vec<T>,
    /// Channels of the program's devices in original units.
    pub channels: Vec<CVec<T>>,
    pub budget: T,
}

impl<T: Real> ConeProgram<T> {
    pub fn counts(&self) -> ConstraintCounts {
        ConstraintCounts {
            cones: self.devices.len(),
            equalities: self.problem.num_equalities(),
            power: 1,
            nonnegativity: self.devices.len(),
        }
    }
}

/// Builds the program over `devices` (all must be admissible). Returns
/// `Ok(None)` when `devices` is empty.
pub fn build_cone_program<T: Real>(
    devices: &[usize],
    channels: &ChannelRealization<T>,
    targets: &SinrTargets<T>,
    weights: &[T],
    sum_power: T,
    sigma2: T,
) -> Result<Option<ConeProgram<T>>> {
    if devices.is_empty() {
        return Ok(None);
    }
    if weights.len() != channels.device_count() {
        return Err(Error::Dimension {
            expected: channels.device_count(),
            actual: weights.len(),
        });
    }
    if !(sum_power > T::zero()) || !(sigma2 > T::zero()) {
        return Err(domain("power budget and noise power must be positive"));
    }
    let gammas = targets.of(devices)?;
    if let Some(g) = gammas.iter().find(|g| !(**g > T::zero())) {
        return Err(domain(format!("SINR targets must be positive, got {g}")));
    }
    let kk = devices.len();
    let n = channels.antenna_count();
    let layout = VariableLayout {
        devices: kk,
        antennas: n,
    };
    let rho = (sum_power / sigma2).sqrt();
    let g: Vec<CVec<T>> = devices
        .iter()
        .map(|&k| channels.channel(k).iter().map(|z| z * rho).collect())
        .collect();

    let mut c = vec![T::zero(); layout.len()];
    for (j, &k) in devices.iter().enumerate() {
        c[layout.slack(j)] = weights[k];
    }

    let mut gt: Vec<(usize, usize, T)> = Vec::new();
    let mut h: Vec<T> = Vec::new();
    let mut cones = Vec::with_capacity(kk + 2);

    // s >= 0
    for j in 0..kk {
        gt.push((h.len(), layout.slack(j), -T::one()));
        h.push(T::zero());
    }
    cones.push(Cone::Nonnegative(kk));

    // rows of -Re(u_i^H g_k) or -Im(u_i^H g_k) times `coef`
    let push_re = |gt: &mut Vec<_>, row: usize, i: usize, gk: &[Complex<T>], coef: T| {
        let o = layout.beam(i);
        for (a, z) in gk.iter().enumerate() {
            gt.push((row, o + a, -coef * z.re));
            gt.push((row, o + n + a, -coef * z.im));
        }
    };
    let push_im = |gt: &mut Vec<_>, row: usize, i: usize, gk: &[Complex<T>]| {
        let o = layout.beam(i);
        for (a, z) in gk.iter().enumerate() {
            gt.push((row, o + a, -z.im));
            gt.push((row, o + n + a, z.re));
        }
    };

    for (k, gk) in g.iter().enumerate() {
        let row = h.len();
        push_re(&mut gt, row, k, gk, T::one() / gammas[k].sqrt());
        gt.push((row, layout.slack(k), -T::one()));
        h.push(T::zero());
        for i in (0..kk).filter(|&i| i != k) {
            let row = h.len();
            push_re(&mut gt, row, i, gk, T::one());
            h.push(T::zero());
            push_im(&mut gt, row + 1, i, gk);
            h.push(T::zero());
        }
        h.push(T::one());
        cones.push(Cone::SecondOrder(2 * kk));
    }

    // ||u|| <= 1
    let row = h.len();
    h.push(T::one());
    for v in 0..2 * n * kk {
        gt.push((row + 1 + v, v, -T::one()));
        h.push(T::zero());
    }
    cones.push(Cone::SecondOrder(1 + 2 * n * kk));

    // Im(u_k^H g_k) = 0
    let mut at = Vec::new();
    for (k, gk) in g.iter().enumerate() {
        let o = layout.beam(k);
        for (a, z) in gk.iter().enumerate() {
            at.push((k, o + a, z.im));
            at.push((k, o + n + a, -z.re));
        }
    }

    let m = h.len();
    let problem = Problem::new(
        c,
        CsrMatrix::from_triplets(kk, layout.len(), at)?,
        vec![T::zero(); kk],
        CsrMatrix::from_triplets(m, layout.len(), gt)?,
        h,
        cones,
    )?;
    Ok(Some(ConeProgram {
        devices: devices.to_vec(),
        device_count: channels.device_count(),
        layout,
        problem,
        scale: rho,
        gammas,
        weights: devices.iter().map(|&k| weights[k]).collect(),
        channels: devices.iter().map(|&k| channels.channel(k).to_vec()).collect(),
        budget: sum_power / sigma2,
    }))
}

#[derive(Debug, Clone, PartialEq)]
pub struct PrioritySolution<T> {
    /// `s_k` per device id; devices outside the program hold `+inf`.
    pub slacks: Vec<T>,
    /// Dual downlink beamformers `m_k` per device id in original units; zero
    /// outside the program.
    pub dual_beamformers: Vec<CVec<T>>,
    /// `sum_k alpha_k s_k` over the program's devices.
    pub objective: T,
    pub solver_status: Status,
    pub iterations: usize,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PrioritySettings<T> {
    pub solver: conic::Settings<T>,
    /// Extra solves with weights `alpha_k / (s_k + reweight_epsilon)`.
    pub reweight_iterations: usize,
    pub reweight_epsilon: T,
}

impl<T: Real> Default for PrioritySettings<T> {
    fn default() -> Self {
        Self {
            solver: conic::Settings::default(),
            reweight_iterations: 0,
            reweight_epsilon: T::lit(1e-3),
        }
    }
}

fn extract<T: Real>(program: &ConeProgram<T>, sol: &conic::Solution<T>) -> PrioritySolution<T> {
    let n = program.layout.antennas;
    let (s, u) = program.layout.unpack(&sol.x);
    let mut slacks = vec![T::infinity(); program.device_count];
    let mut beams = vec![vec![Complex::new(T::zero(), T::zero()); n]; program.device_count];
    let mut objective = T::zero();
    for (j, &k) in program.devices.iter().enumerate() {
        slacks[k] = s[j];
        beams[k] = u[j].iter().map(|z| z * program.scale).collect();
        objective += program.weights[j] * s[j];
    }
    PrioritySolution {
        slacks,
        dual_beamformers: beams,
        objective,
        solver_status: sol.status,
        iterations: sol.iterations,
    }
}

/// Solves the program; with reweighting enabled the returned slacks come
/// from the last solve while `objective` stays in the original weights.
pub fn solve_priority<T: Real>(program: &ConeProgram<T>, settings: &PrioritySettings<T>) -> PrioritySolution<T> {
    let sol = conic::solve(&program.problem, &settings.solver);
    let mut out = extract(program, &sol);
    let mut iterations = out.iterations;
    for _ in 0..settings.reweight_iterations {
        if out.solver_status == Status::Failed {
            break;
        }
        let mut reweighted = program.problem.clone();
        for (j, &k) in program.devices.iter().enumerate() {
            let s = out.slacks[k].max(T::zero());
            reweighted.c[program.layout.slack(j)] = program.weights[j] / (s + settings.reweight_epsilon);
        }
        let sol = conic::solve(&reweighted, &settings.solver);
        let next = extract(program, &sol);
        iterations += next.iterations;
        if next.solver_status == Status::Failed {
            break;
        }
        out = next;
    }
    out.iterations = iterations;
    out
}

/// Worst violation of each constraint family, evaluated directly in the
/// original units.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ConstraintResiduals<T> {
    /// `max_k (||((m_i^H h_k), 1)|| - Re(m_k^H h_k)/sqrt(gamma_k) - s_k)^+`
    pub cone: T,
    /// `max_k |Im(m_k^H h_k)|`
    pub imaginary: T,
    /// `(sum ||m_k||^2 / (P_sum / sigma^2) - 1)^+`
    pub power: T,
    /// `max_k (-s_k)^+`
    pub nonnegativity: T,
}

impl<T: Real> ConstraintResiduals<T> {
    pub fn max(&self) -> T {
        self.cone.max(self.imaginary).max(self.power).max(self.nonnegativity)
    }
}

/// Residuals of a candidate `(s, m)` given per device id.
pub fn constraint_residuals<T: Real>(
    program: &ConeProgram<T>,
    slacks: &[T],
    beams: &[CVec<T>],
) -> ConstraintResiduals<T> {
    let zero = T::zero();
    let mut out = ConstraintResiduals {
        cone: zero,
        imaginary: zero,
        power: zero,
        nonnegativity: zero,
    };
    let mut energy = zero;
    for (j, &k) in program.devices.iter().enumerate() {
        let hk = &program.channels[j];
        let own = cdot(&beams[k], hk);
        let mut tail = T::one();
        for &i in program.devices.iter().filter(|&&i| i != k) {
            tail += cdot(&beams[i], hk).norm_sqr();
        }
        let lhs = own.re / program.gammas[j].sqrt() + slacks[k];
        out.cone = out.cone.max(tail.sqrt() - lhs);
        out.imaginary = out.imaginary.max(own.im.abs());
        out.nonnegativity = out.nonnegativity.max(-slacks[k]);
        energy += cnorm_sqr(&beams[k]);
    }
    out.power = (energy / program.budget - T::one()).max(zero);
    out
}

/// Dual downlink SINR `|m_k^H h_k|^2 / (sum_{i in set, i != k} |m_i^H h_k|^2 + 1)`.
pub fn dual_sinr<T: Real>(k: usize, set: &[usize], beams: &[CVec<T>], channels: &ChannelRealization<T>) -> T {
    let hk = channels.channel(k);
    let mut interference = T::one();
    for &i in set.iter().filter(|&&i| i != k) {
        interference += cdot(&beams[i], hk).norm_sqr();
    }
    cdot(&beams[k], hk).norm_sqr() / interference
}

/// Outcome of the downlink feasibility check for a fixed set.
#[derive(Debug, Clone, PartialEq)]
pub struct DownlinkCheck<T> {
    pub feasible: bool,
    /// Minimum of `sum_k s_k` over the set; zero exactly when the downlink
    /// SINR system is feasible.
    pub min_slack_sum: T,
    pub solver_status: Status,
}

/// Feasibility of the dual downlink system for `set`: the relaxation over
/// `set` with unit weights, feasible when its optimum is at most `tolerance`.
pub fn downlink_feasible<T: Real>(
    set: &[usize],
    channels: &ChannelRealization<T>,
    targets: &SinrTargets<T>,
    sum_power: T,
    sigma2: T,
    tolerance: T,
    settings: &conic::Settings<T>,
) -> Result<DownlinkCheck<T>> {
    let ones = vec![T::one(); channels.device_count()];
    let program = build_cone_program(set, channels, targets, &ones, sum_power, sigma2)?
        .ok_or(Error::EmptySchedule)?;
    let sol = conic::solve(&program.problem, settings);
    if sol.status == Status::Failed {
        return Err(Error::Solver(format!(
            "downlink check failed after {} iterations",
            sol.iterations
        )));
    }
    let min_slack_sum = extract(&program, &sol).objective;
    Ok(DownlinkCheck {
        feasible: min_slack_sum <= tolerance,
        min_slack_sum,
        solver_status: sol.status,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::channel::standard_complex_gaussian;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn instance(k: usize, n: usize, seed: u64) -> ChannelRealization<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        ChannelRealization::new((0..k).map(|_| standard_complex_gaussian(n, &mut rng)).collect(), 0).unwrap()
    }

    fn targets(g: &[f64]) -> SinrTargets<f64> {
        SinrTargets::from_linear(g.iter().map(|&v| Some(v)).collect()).unwrap()
    }

    #[test]
    fn structure_counts() {
        let ch = instance(3, 2, 1);
        let t = targets(&[1.0, 1.0, 1.0]);
        let w = [0.2, 0.3, 0.5];
        let one = build_cone_program(&[1], &ch, &t, &w, 1.0, 1.0).unwrap().unwrap();
        assert_eq!(
            one.counts(),
            ConstraintCounts {
                cones: 1,
                equalities: 1,
                power: 1,
                nonnegativity: 1
            }
        );
        let all = build_cone_program(&[0, 1, 2], &ch, &t, &w, 1.0, 1.0).unwrap().unwrap();
        assert_eq!(all.counts().cones, 3);
        assert_eq!(all.problem.num_equalities(), 3);
        assert_eq!(all.problem.cones.len(), 1 + 3 + 1);
        assert_eq!(all.problem.cone_dim(), 3 + 3 * 6 + 1 + 12);
        assert!(build_cone_program(&[], &ch, &t, &w, 1.0, 1.0).unwrap().is_none());
    }

    #[test]
    fn pack_round_trips() {
        let layout = VariableLayout { devices: 2, antennas: 3 };
        let ch = instance(2, 3, 4);
        let beams = ch.vectors().to_vec();
        let s = vec![0.25, 1.5];
        let (s2, b2) = layout.unpack(&layout.pack(&s, &beams));
        assert_eq!(s, s2);
        assert_eq!(beams, b2);
    }

    #[test]
    fn zero_beams_with_unit_slack_are_feasible() {
        let ch = instance(3, 4, 2);
        let t = targets(&[0.5, 2.0, 1.0]);
        let p = build_cone_program(&[0, 1, 2], &ch, &t, &[0.2, 0.3, 0.5], 1.0, 0.1).unwrap().unwrap();
        let beams = vec![vec![Complex::new(0.0, 0.0); 4]; 3];
        let r = constraint_residuals(&p, &[1.0, 1.0, 1.0], &beams);
        assert!(r.max() <= 1e-9);
        // same point through the conic form: s = h - G x lies in the cones
        let x = p.layout.pack(&[1.0, 1.0, 1.0], &beams);
        let gx = p.problem.g.mul_vec(&x);
        let s: Vec<f64> = p.problem.h.iter().zip(&gx).map(|(h, g)| h - g).collect();
        let mut off = 0;
        for cone in &p.problem.cones {
            let v = &s[off..off + cone.dim()];
            match cone {
                Cone::Nonnegative(_) => assert!(v.iter().all(|&a| a >= 0.0)),
                Cone::SecondOrder(_) => assert!(v[0] + 1e-12 >= v[1..].iter().map(|a| a * a).sum::<f64>().sqrt()),
            }
            off += cone.dim();
        }
    }

    #[test]
    fn lone_device_with_ample_power_has_zero_slack() {
        let ch = instance(1, 4, 5);
        let p = build_cone_program(&[0], &ch, &targets(&[0.1]), &[1.0], 100.0, 1.0).unwrap().unwrap();
        let sol = solve_priority(&p, &Default::default());
        assert_eq!(sol.solver_status, Status::Optimal);
        assert!(sol.slacks[0].abs() < 1e-6, "{:?}", sol.slacks);
    }

    #[test]
    fn symmetric_devices_get_equal_slacks() {
        let h: CVec<f64> = vec![Complex::new(0.3, 0.1), Complex::new(-0.2, 0.4)];
        let ch = ChannelRealization::new(vec![h.clone(), h.clone(), h], 0).unwrap();
        let p = build_cone_program(&[0, 1, 2], &ch, &targets(&[1.0, 1.0, 1.0]), &[1.0 / 3.0; 3], 1.0, 0.1)
            .unwrap()
            .unwrap();
        let sol = solve_priority(&p, &Default::default());
        assert_ne!(sol.solver_status, Status::Failed);
        assert!(sol.slacks[0] > 1e-3);
        for k in 1..3 {
            assert!((sol.slacks[k] - sol.slacks[0]).abs() < 1e-6, "{:?}", sol.slacks);
        }
        let r = constraint_residuals(&p, &sol.slacks, &sol.dual_beamformers);
        assert!(r.max() < 1e-8, "{r:?}");
    }

    #[test]
    fn dual_sinr_reference_cases() {
        let h: CVec<f64> = vec![Complex::new(0.6, 0.0), Complex::new(0.0, 0.8)];
        let ch = ChannelRealization::new(vec![h.clone()], 0).unwrap();
        let c = 2.5;
        let beam: CVec<f64> = h.iter().map(|z| z * c).collect();
        assert!((dual_sinr(0, &[0], &[beam], &ch) - c * c).abs() < 1e-12);
        let zero = vec![Complex::new(0.0, 0.0); 2];
        assert_eq!(dual_sinr(0, &[0], &[zero], &ch), 0.0);
    }
}
