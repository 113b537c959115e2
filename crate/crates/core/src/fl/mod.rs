//! Federated learning over the scheduled devices: model, data, and the
//! convergence bookkeeping.

pub mod bound;
pub mod data;
pub mod model;

pub use bound::{
    estimate_optimal_loss, estimate_smoothness_and_kappa, round_step, second_moment_smoothness, theorem_bound,
    BoundInputs, OptimumEstimate, RoundStep, SmoothnessEstimate,
};
pub use data::{label_entropy, load_csv, partition_noniid, synthetic_gaussian_mixture, DataShard, Dataset, SyntheticSpec};
pub use model::{aggregate, step, Model, ModelParams};
