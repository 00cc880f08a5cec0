//! Config-driven experiment runner: replicate seeds, reports and sweeps.

pub mod config;
pub mod experiment;
pub mod sweep;

pub use config::{
    desk_benchmark, parse_config, parse_config_str, DataSource, DatasetFiles, ExperimentConfig, ModelConfig, SweepAxis,
    SweepConfig,
};
pub use experiment::{
    inject_noise, load_splits, pretrain, run_experiment, run_seed, seed_dir, std_dev, BaselineSummary,
    ExperimentSummary, IterationSummary, MeanSummary, SeedSummary, Splits,
};
pub use sweep::{aggregate_rows, point_config, run_sweep, SweepPoint, SWEEP_HEADER};
