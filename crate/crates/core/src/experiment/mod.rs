//! Sweeps, run directories and their analysis.

mod analyze;
mod artifacts;
mod config;
mod plan;
mod sweep;

pub use analyze::{
    analyze_dir, analyze_runs, figure_tables, load_runs, AlignmentEntry, Analysis, DecayComparison,
    NormLawEntry, WidthExponentEntry,
};
pub use artifacts::{
    fmt_f64, read_csv, read_gains, read_spectra, read_trajectory, LoadedRun, Manifest, RunStatus,
    RunSummary, FORMAT_VERSION, GAINS, MANIFEST, SPECTRUM, SUMMARY, TRAJECTORY,
};
pub use config::{ExperimentConfig, HyperScaling, OptimizerSettings, ScheduleSettings};
pub use plan::{plan_document, PlanDocument, PlanEntry, PlanMode};
pub use sweep::{resolve_cell, run_cell, run_sweep, summary_csv, CellAxes, SweepAxes};
