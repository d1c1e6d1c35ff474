//! Configured experiments: batches of seeded restarts, method and model
//! comparisons, Hessian analysis.

mod commands;
mod config;
mod runner;

pub use commands::{
    cmd_analyze_hessian, cmd_compare_methods, cmd_compare_models, cmd_simulate, cmd_solve, load_or_generate, Aggregates,
    ExperimentSummary, HessianAnalysis, HessianPoint, MethodComparison, MethodOrdering, MethodRow, ModelComparison,
    ModelSeries, ModelSpectra, PlaneSpectra, COMPARED_METHODS, MODEL_RMS_THRESHOLD, SNR_DEFINITION,
};
pub use config::{
    ExperimentConfig, NoiseSection, ObjectiveSection, PlanSection, ProblemKind, ProblemSection, RunSection,
};
pub use runner::{random_start, records, run_batch, run_restart, MorozovSetting, RestartRecord, RestartRun};
