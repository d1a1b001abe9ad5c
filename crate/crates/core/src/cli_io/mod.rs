//! Configuration files, the command-line interface, and result files:
//! per-step CSV diagnostics, legacy-VTK field snapshots and a JSON summary.

mod cli;
mod config_file;
mod convergence;
mod output;
pub mod verify;
mod vtk;

pub use cli::cli;
pub use config_file::{parse_config, parse_config_file};
pub use convergence::{ladder_configs, run_ladder, run_ladder_with, self_convergence};
pub use output::{write_diagnostics, write_run, DiagnosticsTable, OutputFiles, RunSummary, CSV_HEADER};
pub use vtk::{write_fields, VtkGrid};

#[cfg(test)]
mod tests;
