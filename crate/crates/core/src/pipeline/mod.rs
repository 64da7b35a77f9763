//! End-to-end stabilization and the experiment suites built on it.

mod budget;
mod config;
mod experiments;
mod run;

pub use budget::{compute_budget, default_l, PipelineBudget, StageBudgets, BUDGET_LIMIT};
pub use config::{LiftPath, PipelineConfig};
pub use experiments::{
    kk_estimate, kk_experiment, parse_tower, recover_instance, sweep, sweep_csv, sweep_instances,
    sweep_shapes, tower_experiment, unitary_at_distance, Inclusion, KKEstimate, KKReport,
    RecoveryInstance, RecoveryRow, SweepReport, TowerReport, TowerStage, SWEEP_HEADER,
};
pub use run::{
    run_pipeline, run_pipeline_into, PipelineAbort, PipelineOutput, PipelineReport, StageRecord,
    Timings,
};
