//! Scenario generation, experiment grids and result files.

mod experiment;
mod grid;
pub mod output;

pub use experiment::{
    ablation_suite, evaluate_replicas, run_experiment, transfer_eval, transfer_tag, ControllerSpec,
    Experiment, ExperimentReport, ExperimentSpec, ResultRow, TrainedPolicy,
};
pub use grid::{generate_grid_scenario, DemandProfile, GridOptions, PhaseScheme};
