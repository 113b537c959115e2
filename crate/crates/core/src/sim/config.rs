//! Experiment configuration, read from flat TOML.

use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fl::SyntheticSpec;
use crate::phy::PhyConfig;
use crate::scalar::Real;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Policy {
    Proposed,
    Random,
    Full,
}

impl Policy {
    pub const ALL: [Policy; 3] = [Policy::Proposed, Policy::Random, Policy::Full];

    pub fn name(&self) -> &'static str {
        match self {
            Policy::Proposed => "proposed",
            Policy::Random => "random",
            Policy::Full => "full",
        }
    }
}

impl fmt::Display for Policy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Policy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "proposed" => Ok(Policy::Proposed),
            "random" => Ok(Policy::Random),
            "full" => Ok(Policy::Full),
            other => Err(Error::Config(format!("unknown policy {other:?}"))),
        }
    }
}

/// All experiment constants. Every field has a default, so a config file
/// only lists what it changes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub devices: usize,
    pub antennas: usize,
    pub rounds: usize,
    pub policy: Policy,
    pub seed: u64,

    pub bandwidth_hz: f64,
    pub noise_psd_dbm_per_hz: f64,
    pub sum_power_w: f64,
    pub latency_threshold_s: f64,
    pub bits_per_param: u32,
    /// Parameters uploaded per round in the latency model.
    pub payload_dim: usize,
    pub per_sample_compute_time_s: f64,
    pub inner_radius_m: f64,
    pub outer_radius_m: f64,

    /// Requested step size; the run uses `min(learning_rate, 1/L)`.
    pub learning_rate: f64,
    /// CSV file of `features..., label`; the synthetic task is used when unset.
    pub dataset_path: Option<PathBuf>,
    pub classes: usize,
    pub feature_dim: usize,
    pub samples: usize,
    pub separation: f64,

    pub max_postponements: usize,
    /// Extra reweighted solves of the priority problem.
    pub reweight_iterations: usize,
    /// Gradient steps of the probe run behind the empirical `kappa`.
    pub kappa_probe_steps: usize,
    /// Gradient-descent budget for the `F*` estimate.
    pub optimum_iterations: usize,
    pub optimum_tolerance: f64,
    pub output: Option<PathBuf>,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            devices: 50,
            antennas: 4,
            rounds: 5000,
            policy: Policy::Proposed,
            seed: 0,
            bandwidth_hz: 10e6,
            noise_psd_dbm_per_hz: -174.0,
            sum_power_w: 0.03,
            latency_threshold_s: 1.0,
            bits_per_param: 32,
            payload_dim: 30720,
            per_sample_compute_time_s: 1e-4,
            inner_radius_m: 50.0,
            outer_radius_m: 250.0,
            learning_rate: 5e-3,
            dataset_path: None,
            classes: 10,
            feature_dim: 32,
            samples: 2000,
            separation: 3.0,
            max_postponements: 100,
            reweight_iterations: 0,
            kappa_probe_steps: 20,
            optimum_iterations: 5000,
            optimum_tolerance: 1e-8,
            output: None,
        }
    }
}

impl ExperimentConfig {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn from_file(path: &Path) -> Result<Self> {
        Self::from_toml_str(&std::fs::read_to_string(path)?)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::Config(msg));
        if self.devices == 0 {
            return bad("devices must be at least 1".into());
        }
        if self.antennas == 0 {
            return bad("antennas must be at least 1".into());
        }
        if self.rounds == 0 {
            return bad("rounds must be at least 1".into());
        }
        if !(self.inner_radius_m > 0.0 && self.inner_radius_m <= self.outer_radius_m && self.outer_radius_m.is_finite())
        {
            return bad(format!(
                "radii must satisfy 0 < inner <= outer, got {} and {}",
                self.inner_radius_m, self.outer_radius_m
            ));
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return bad(format!("learning_rate must be positive, got {}", self.learning_rate));
        }
        if self.dataset_path.is_none() {
            if self.samples < self.devices {
                return bad(format!("{} samples cannot cover {} devices", self.samples, self.devices));
            }
            if self.classes < 2 || self.feature_dim == 0 {
                return bad("synthetic task needs two classes and one feature".into());
            }
            if !(self.separation >= 0.0 && self.separation.is_finite()) {
                return bad("separation must be finite and nonnegative".into());
            }
        }
        if self.max_postponements == 0 {
            return bad("max_postponements must be at least 1".into());
        }
        if !(self.optimum_tolerance > 0.0) {
            return bad("optimum_tolerance must be positive".into());
        }
        self.phy::<f64>().validate()
    }

    pub fn phy<T: Real>(&self) -> PhyConfig<T> {
        PhyConfig {
            bandwidth: T::lit(self.bandwidth_hz),
            noise_psd_dbm: T::lit(self.noise_psd_dbm_per_hz),
            bits_per_param: self.bits_per_param,
            model_dim: self.payload_dim,
            per_sample_compute_time: T::lit(self.per_sample_compute_time_s),
            latency_threshold: T::lit(self.latency_threshold_s),
            sum_power: T::lit(self.sum_power_w),
        }
    }

    pub fn synthetic(&self) -> SyntheticSpec {
        SyntheticSpec {
            classes: self.classes,
            feature_dim: self.feature_dim,
            samples: self.samples,
            separation: self.separation,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_match_reference_system() {
        let c = ExperimentConfig::default();
        assert_eq!((c.devices, c.antennas, c.rounds), (50, 4, 5000));
        assert_eq!(c.bandwidth_hz, 1e7);
        assert_eq!(c.noise_psd_dbm_per_hz, -174.0);
        assert_eq!(c.latency_threshold_s, 1.0);
        assert_eq!(c.sum_power_w, 0.03);
        assert_eq!(c.bits_per_param, 32);
        assert_eq!(c.learning_rate, 5e-3);
        c.validate().unwrap();
    }

    #[test]
    fn parses_partial_file_and_rejects_bad_values() {
        let c = ExperimentConfig::from_toml_str("devices = 10\nrounds = 200\npolicy = \"random\"\n").unwrap();
        assert_eq!((c.devices, c.rounds, c.policy), (10, 200, Policy::Random));
        assert_eq!(c.antennas, 4);
        assert!(ExperimentConfig::from_toml_str("rounds = 0").is_err());
        assert!(ExperimentConfig::from_toml_str("typo_field = 1").is_err());
        assert!(ExperimentConfig::from_toml_str("sum_power_w = -1.0").is_err());
        assert!(ExperimentConfig::from_toml_str("inner_radius_m = 300.0").is_err());
    }

    #[test]
    fn policy_names_round_trip() {
        for p in Policy::ALL {
            assert_eq!(p.name().parse::<Policy>().unwrap(), p);
        }
        assert!("greedy".parse::<Policy>().is_err());
    }
}
