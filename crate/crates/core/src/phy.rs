//! Physical-layer quantities: noise, SINR, rate, latency and MMSE receivers.
//!
//! Device sets are slices of device indices into a [`ChannelRealization`].
//! Powers are in watts throughout.

use std::collections::BTreeMap;

use num_complex::Complex;

use crate::channel::{dbm_to_watts, ChannelRealization};
use crate::error::{domain, Error, Result};
use crate::linalg::{cdot, cnorm, CVec, HermitianCholesky, HermitianMatrix};
use crate::scalar::Real;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PhyConfig<T> {
    /// `B` in Hz.
    pub bandwidth: T,
    /// `N0` in dBm/Hz.
    pub noise_psd_dbm: T,
    /// Bits per model parameter `I`.
    pub bits_per_param: u32,
    /// Number of parameters uploaded per round `d`.
    pub model_dim: usize,
    /// `R / f^cap` in seconds per sample.
    pub per_sample_compute_time: T,
    /// `T^thr` in seconds.
    pub latency_threshold: T,
    /// `P_sum` in watts.
    pub sum_power: T,
}

impl<T: Real> PhyConfig<T> {
    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("bandwidth", self.bandwidth),
            ("per_sample_compute_time", self.per_sample_compute_time),
            ("latency_threshold", self.latency_threshold),
            ("sum_power", self.sum_power),
        ];
        for (name, v) in positive {
            if !(v > T::zero()) || !v.is_finite() {
                return Err(Error::Config(format!("{name} must be positive and finite, got {v}")));
            }
        }
        if !self.noise_psd_dbm.is_finite() {
            return Err(Error::Config("noise_psd_dbm must be finite".into()));
        }
        if self.bits_per_param == 0 || self.model_dim == 0 {
            return Err(Error::Config("bits_per_param and model_dim must be at least 1".into()));
        }
        Ok(())
    }

    /// Upload payload `I d` in bits.
    pub fn payload_bits(&self) -> T {
        T::count(self.bits_per_param as usize) * T::count(self.model_dim)
    }
}

/// Transmit powers of all `K` devices; unscheduled devices hold zero.
#[derive(Debug, Clone, PartialEq)]
pub struct PowerAllocation<T> {
    pub powers: Vec<T>,
}

impl<T: Real> PowerAllocation<T> {
    pub fn zeros(device_count: usize) -> Self {
        Self {
            powers: vec![T::zero(); device_count],
        }
    }

    /// `total / |set|` on every device of `set`.
    pub fn uniform(device_count: usize, set: &[usize], total: T) -> Self {
        let mut p = Self::zeros(device_count);
        if !set.is_empty() {
            let share = total / T::count(set.len());
            for &k in set {
                p.powers[k] = share;
            }
        }
        p
    }

    pub fn total(&self, set: &[usize]) -> T {
        set.iter().map(|&k| self.powers[k]).sum()
    }
}

/// Unit-norm receive beamformers keyed by device.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct BeamformerSet<T> {
    pub receive: BTreeMap<usize, CVec<T>>,
}

impl<T: Real> BeamformerSet<T> {
    pub fn get(&self, k: usize) -> Option<&[Complex<T>]> {
        self.receive.get(&k).map(Vec::as_slice)
    }
}

/// Per-device SINR thresholds; `None` marks a device that cannot finish its
/// local computation within the latency budget.
#[derive(Debug, Clone, PartialEq)]
pub struct SinrTargets<T> {
    targets: Vec<Option<T>>,
    rates: Vec<Option<T>>,
}

impl<T: Real> SinrTargets<T> {
    /// Targets given directly as linear SINR values.
    pub fn from_linear(targets: Vec<Option<T>>) -> Result<Self> {
        if let Some(g) = targets.iter().flatten().find(|g| !(**g >= T::zero()) || !g.is_finite()) {
            return Err(domain(format!("SINR target must be finite and nonnegative, got {g}")));
        }
        let rates = targets.iter().map(|g| g.map(|g| g.ln_1p() / T::lit(2.0).ln())).collect();
        Ok(Self { targets, rates })
    }

    pub fn device_count(&self) -> usize {
        self.targets.len()
    }

    pub fn target(&self, k: usize) -> Option<T> {
        self.targets[k]
    }

    /// Required spectral efficiency `r_k` in bits/s/Hz.
    pub fn rate(&self, k: usize) -> Option<T> {
        self.rates[k]
    }

    pub fn is_admissible(&self, k: usize) -> bool {
        self.targets[k].is_some()
    }

    pub fn admissible(&self) -> Vec<usize> {
        (0..self.targets.len()).filter(|&k| self.is_admissible(k)).collect()
    }

    /// Targets of `set`, failing if any member is inadmissible.
    pub fn of(&self, set: &[usize]) -> Result<Vec<T>> {
        set.iter()
            .map(|&k| {
                self.targets
                    .get(k)
                    .copied()
                    .flatten()
                    .ok_or_else(|| domain(format!("device {k} is not admissible")))
            })
            .collect()
    }
}

/// `sigma^2 = B N0` in watts.
pub fn noise_power<T: Real>(cfg: &PhyConfig<T>) -> T {
    cfg.bandwidth * dbm_to_watts(cfg.noise_psd_dbm)
}

/// Uplink SINR of device `k` for an arbitrary receive vector `m`.
pub fn sinr_with_receiver<T: Real>(
    k: usize,
    m: &[Complex<T>],
    channels: &ChannelRealization<T>,
    p: &PowerAllocation<T>,
    set: &[usize],
    sigma2: T,
) -> T {
    let signal = p.powers[k] * cdot(m, channels.channel(k)).norm_sqr();
    let mut interference = T::zero();
    for &i in set {
        if i != k {
            interference += p.powers[i] * cdot(m, channels.channel(i)).norm_sqr();
        }
    }
    signal / (interference + sigma2 * m.iter().map(|z| z.norm_sqr()).sum())
}

/// Uplink SINR of scheduled device `k` under receivers `m`.
pub fn sinr_uplink<T: Real>(
    k: usize,
    channels: &ChannelRealization<T>,
    m: &BeamformerSet<T>,
    p: &PowerAllocation<T>,
    set: &[usize],
    sigma2: T,
) -> Result<T> {
    if !set.contains(&k) {
        return Err(domain(format!("device {k} is not in the scheduled set")));
    }
    let mk = m.get(k).ok_or_else(|| domain(format!("no beamformer for device {k}")))?;
    Ok(sinr_with_receiver(k, mk, channels, p, set, sigma2))
}

/// `B log2(1 + sinr)` in bits/s.
pub fn uplink_rate<T: Real>(sinr: T, bandwidth: T) -> Result<T> {
    if !(sinr >= T::zero()) {
        return Err(domain(format!("SINR must be nonnegative, got {sinr}")));
    }
    Ok(bandwidth * sinr.ln_1p() / T::lit(2.0).ln())
}

/// Local computation time for `samples` samples.
pub fn local_latency<T: Real>(samples: usize, cfg: &PhyConfig<T>) -> T {
    T::count(samples) * cfg.per_sample_compute_time
}

/// Upload time `I d / (B log2(1 + sinr))`; infinite at zero SINR.
pub fn uplink_latency<T: Real>(sinr: T, cfg: &PhyConfig<T>) -> Result<T> {
    let rate = uplink_rate(sinr, cfg.bandwidth)?;
    if rate == T::zero() {
        return Ok(T::infinity());
    }
    Ok(cfg.payload_bits() / rate)
}

/// Slowest device's local plus upload time.
pub fn system_latency<T: Real>(local: &[T], uplink: &[T]) -> Result<T> {
    if local.is_empty() {
        return Err(Error::EmptySchedule);
    }
    if local.len() != uplink.len() {
        return Err(Error::Dimension {
            expected: local.len(),
            actual: uplink.len(),
        });
    }
    Ok(local
        .iter()
        .zip(uplink)
        .map(|(&a, &b)| a + b)
        .fold(T::neg_infinity(), T::max))
}

/// SINR thresholds that make each device finish exactly at `T^thr`.
pub fn sinr_targets<T: Real>(cfg: &PhyConfig<T>, local_latencies: &[T]) -> SinrTargets<T> {
    let payload = cfg.payload_bits();
    let mut targets = Vec::with_capacity(local_latencies.len());
    let mut rates = Vec::with_capacity(local_latencies.len());
    for &t_loc in local_latencies {
        let budget = cfg.latency_threshold - t_loc;
        if budget > T::zero() {
            let r = payload / (cfg.bandwidth * budget);
            rates.push(Some(r));
            targets.push(Some(r.exp2() - T::one()));
        } else {
            rates.push(None);
            targets.push(None);
        }
    }
    SinrTargets { targets, rates }
}

/// Receive covariance `sigma^2 I + sum_{i in set} p_i h_i h_i^H`, optionally
/// leaving out one device.
pub fn covariance<T: Real>(
    channels: &ChannelRealization<T>,
    p: &PowerAllocation<T>,
    set: &[usize],
    sigma2: T,
    skip: Option<usize>,
) -> HermitianMatrix<T> {
    let mut cov = HermitianMatrix::scaled_identity(channels.antenna_count(), sigma2);
    for &i in set {
        if Some(i) != skip && p.powers[i] > T::zero() {
            cov.add_rank_one(p.powers[i], channels.channel(i));
        }
    }
    cov
}

/// MMSE receivers `m_k ~ (sigma^2 I + sum p_i h_i h_i^H)^{-1} h_k`, unit norm.
pub fn mmse_beamformers<T: Real>(
    set: &[usize],
    channels: &ChannelRealization<T>,
    p: &PowerAllocation<T>,
    sigma2: T,
) -> Result<BeamformerSet<T>> {
    if !(sigma2 > T::zero()) {
        return Err(domain("noise power must be positive"));
    }
    if let Some(&k) = set.iter().find(|&&k| !(p.powers[k] >= T::zero())) {
        return Err(domain(format!("negative power for device {k}")));
    }
    let chol = HermitianCholesky::factor(&covariance(channels, p, set, sigma2, None))?;
    let mut receive = BTreeMap::new();
    for &k in set {
        let v = chol.solve(channels.channel(k));
        let n = cnorm(&v);
        if !(n > T::zero()) || !n.is_finite() {
            return Err(Error::Singular);
        }
        receive.insert(k, v.into_iter().map(|z| z / n).collect());
    }
    Ok(BeamformerSet { receive })
}
