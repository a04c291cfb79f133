//! Grid search, amplitude sweeps, tolerance thresholds and report files.

mod grid;
mod plan;
mod report;
mod sweep;

pub use grid::{grid_search, select_best, GridPoint, GridResult};
pub use plan::{resolve_seed, DatasetRef, ExperimentPlan, GridSpec, TableSettings, DEFAULT_SEED, SEED_ENV};
pub use report::{
    aggregate, emit_report, mean_std, read_long_csv, tolerance_thresholds, write_aggregated_csv, write_long_csv,
    write_thresholds_csv, AggregateRow, Threshold, ThresholdValue, AGGREGATED_FILE, LONG_FILE, THRESHOLDS_FILE,
    TIMINGS_FILE,
};
pub use sweep::{run_sweep, Arm, ScatterPoint, SweepResult, SweepRow};
