//! Experiment configuration, orchestration and reporting.

mod config;
mod run;
mod sweep;

pub use config::{CorruptionConfig, EstimateMode, ExperimentConfig, OutputPaths, SeedSet, TruthSpec};
pub use run::{
    estimate, evaluate, generate_instance, replay, resolve_truth, run_experiment, without_timings, Diagnostics,
    EstimateOutput, Evaluation, Instance, LabelCounts, PhaseEvaluation, RoundEvaluation, RowSummary, RunReport,
    Timings,
};
pub use sweep::{mean_tv_nondecreasing, run_sweep, SweepRow, SweepSpec};
