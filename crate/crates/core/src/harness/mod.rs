//! Scenario configuration, experiment drivers and CSV output.

pub mod config;
pub mod output;
pub mod sweep;
pub mod train;

pub use config::{apply_override, Scenario, DEFAULT_ENERGY_BUDGET_J};
pub use output::{emit_plot_data, write_csv, write_manifest, write_sweep};
pub use sweep::{
    compare_schemes, cut_breakdown, run_point, run_sweep, sample_selected_fleet, simulate_rounds, CutBreakdown,
    SchemeComparison, SimulatedRound, SweepPoint, SweepResults,
};
pub use train::{run_training, TrainingRow};
