//! Benchmark harness: runs solver-model grids under time limits, records
//! per-run results, and evaluates them as performance profiles with CSV and
//! SVG output.

pub mod grid;
pub mod profile;
pub mod record;
pub mod svg;

pub use grid::{parse_grid, run_grid, run_task, GridError, GridSpec};
pub use profile::{emit_profile_csv, performance_profile, ProfileError, ProfileTable};
pub use record::{emit_records_csv, parse_records_csv, BenchRecord, CsvError, RunStatus, CSV_HEADER};
pub use svg::emit_svg;
