//! Federated learning over a multi-antenna uplink: joint device scheduling
//! and receive beamforming under a per-round latency limit.
//!
//! Numerical code is generic over [`scalar::Real`] (`f32` or `f64`); the
//! aliases below fix the scalar to `f64`.

// Guards are written `!(x > 0)` so that NaN is rejected too.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod channel;
pub mod conic;
pub mod error;
pub mod fl;
pub mod linalg;
pub mod phy;
pub mod power_control;
pub mod rng;
pub mod scalar;
pub mod scheduler;
pub mod sim;

pub use error::{Error, Result};

pub type ChannelRealization = channel::ChannelRealization<f64>;
pub type Topology = channel::Topology<f64>;
pub type PhyConfig = phy::PhyConfig<f64>;
pub type PowerAllocation = phy::PowerAllocation<f64>;
pub type BeamformerSet = phy::BeamformerSet<f64>;
pub type SinrTargets = phy::SinrTargets<f64>;
pub type FeasibilityReport = power_control::FeasibilityReport<f64>;
pub type ScheduleResult = scheduler::ScheduleResult<f64>;
pub type PrioritySolution = scheduler::PrioritySolution<f64>;
pub type Dataset = fl::Dataset<f64>;
pub type DataShard = fl::DataShard<f64>;
pub type ModelParams = fl::ModelParams<f64>;
pub type ExperimentRecord = sim::ExperimentRecord<f64>;
pub type RoundMetrics = sim::RoundMetrics<f64>;
