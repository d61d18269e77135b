//! Experiment orchestration: configs, seeded runs, sweeps, replay and output.

pub mod bounds;
pub mod config;
pub mod output;
pub mod replay;
pub mod run;
pub mod streams;

pub use bounds::{print_bounds, BoundsReport};
pub use config::{ArmsMode, ExperimentConfig, Mode, PRESETS};
pub use output::{write_experiment, write_gap_csv};
pub use replay::{export_replay_csv, load_replay_dataset, parse_replay, run_replay, ReplayConfig, ReplayDataset};
pub use run::{
    record_environment, run_experiment, sweep_oracle_gap, ExperimentResult, GapRow, GapSweep, RunParameters, Series,
};
pub use streams::{stream, StreamRole};
