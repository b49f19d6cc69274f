//! Synthetic instances, experiment configs and the replicate runner.

pub mod config;
pub mod experiment;
pub mod generate;
pub mod presets;

pub use config::{ExperimentConfig, FactorLaw, MethodName, Order, Task, WeightLaw, ENV_PREFIX};
pub use experiment::{
    aggregate, read_aggregate_csv, run_experiment, run_experiment_with, run_replicate, write_aggregate_csv,
    AggregateRow, ExperimentSummary, RunOutcome,
};
pub use generate::{ar1_factors, gen_coherent_factors, gen_instance, gen_truth, haar_rotation, observed_tensor};
pub use presets::{preset, preset_names};
