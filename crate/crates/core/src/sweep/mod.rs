//! The ablation sweep: factor grid, per-cell runs and report files.

mod config;
mod report;
mod run;

pub use config::{enumerate_grid, SweepCell, SweepConfig};
pub use report::{emit_reports, frontier, normalize_radar, radar_area, Summary};
pub use run::{run_cell, run_sweep, CellReport, CellStatus};
