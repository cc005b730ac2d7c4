//! Synthetic scenes and radar returns for measuring how well radar-derived
//! depth targets agree with true scene depth.

mod eval;
mod experiment;
mod radar;
mod scene;

pub use eval::{evaluate_supervision, SimStrategy, SupervisionMetrics};
pub use experiment::{
    bootstrap_mean_ci, run_experiment, run_seed, write_plot_csv, write_rows_csv, BootstrapConfig,
    Comparison, ComparisonSummary, ConfigSummary, ExperimentConfig, ExperimentResult,
    ExperimentSummary, NoiseConfig, RunConfig, SeedRange, SeedRow,
};
pub use radar::{
    lateral_error, lateral_error_bound, simulate_radar, RadarNoiseModel, SimulatedPoint,
};
pub use scene::{generate_scene, DepthMap, Scene, SceneObject, SceneSpec, K_S_SIM};
