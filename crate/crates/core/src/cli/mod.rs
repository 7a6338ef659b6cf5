//! Experiment runner: config files, trajectory CSVs, figure presets, step-size
//! search and SVG charts.

pub mod commands;
pub mod config;
pub mod figures;
pub mod output;
pub mod svg;

pub use commands::{execute, main_with_args, Cli, Command};
pub use config::{config_to_toml, load_config, parse_config};
pub use figures::{
    build_appendix_b_model, fig1_runs, grid_search, reproduce_figure, sweep, FigureId, FigureOptions, GridResult,
    Sweep, TargetShift, ETA_GRID,
};
pub use output::{parse_trajectory_csv, run_config, run_experiment, trajectory_csv, RunManifest, TRAJECTORY_HEADER};
