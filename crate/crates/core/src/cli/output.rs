//! Trajectory CSV files and run manifests.
//!
//! Layout of a trajectory file:
//!
//! ```text
//! t,a,b,r,cos,loss01
//! # model.mu = [1.0, 0.0]
//! # ...            (config, generator, version, overflow)
//! 1,0.5,1,0.5,0.447...,0.3...
//! ```
//!
//! Floats use the shortest round-trip decimal form, so identical runs give
//! identical bytes.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::time::{Instant, SystemTime, UNIX_EPOCH};

use serde::{Deserialize, Serialize};

use super::config::{config_to_toml, load_config};
use crate::dynamics::{run, ExperimentConfig, Trajectory, TrajectoryPoint};
use crate::{rng, Error, Result};

pub const TRAJECTORY_HEADER: &str = "t,a,b,r,cos,loss01";
pub const VERSION: &str = env!("CARGO_PKG_VERSION");

/// Renders a trajectory with its metadata block. `extra` holds additional
/// `key = value` metadata lines.
pub fn trajectory_csv(config: &ExperimentConfig, traj: &Trajectory, extra: &[String]) -> String {
    let mut out = String::new();
    out.push_str(TRAJECTORY_HEADER);
    out.push('\n');
    for line in config_to_toml(config).lines() {
        writeln!(out, "# {line}").unwrap();
    }
    writeln!(out, "# generator = \"{}\"", rng::GENERATOR).unwrap();
    writeln!(out, "# version = \"{VERSION}\"").unwrap();
    writeln!(out, "# overflow = {}", traj.overflow).unwrap();
    writeln!(out, "# reduced_precision = {}", traj.reduced_precision).unwrap();
    for line in extra {
        writeln!(out, "# {line}").unwrap();
    }
    for p in &traj.points {
        writeln!(out, "{},{},{},{},{},{}", p.t, p.a, p.b, p.r, p.cos, p.loss01).unwrap();
    }
    out
}

#[derive(Debug, Clone, PartialEq)]
pub struct ParsedTrajectory {
    pub points: Vec<TrajectoryPoint>,
    /// Metadata lines with the `# ` prefix removed.
    pub metadata: Vec<String>,
}

pub fn parse_trajectory_csv(text: &str) -> Result<ParsedTrajectory> {
    let mut lines = text.lines();
    if lines.next() != Some(TRAJECTORY_HEADER) {
        return Err(Error::Config(format!(
            "trajectory CSV must start with `{TRAJECTORY_HEADER}`"
        )));
    }
    let mut points = Vec::new();
    let mut metadata = Vec::new();
    for (i, line) in lines.enumerate() {
        if let Some(meta) = line.strip_prefix('#') {
            metadata.push(meta.trim_start().to_string());
            continue;
        }
        if line.is_empty() {
            continue;
        }
        let bad = || Error::Config(format!("trajectory CSV line {}: cannot parse `{line}`", i + 2));
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != 6 {
            return Err(bad());
        }
        let f = |k: usize| fields[k].parse::<f64>().map_err(|_| bad());
        points.push(TrajectoryPoint {
            t: fields[0].parse().map_err(|_| bad())?,
            a: f(1)?,
            b: f(2)?,
            r: f(3)?,
            cos: f(4)?,
            loss01: f(5)?,
        });
    }
    Ok(ParsedTrajectory { points, metadata })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub config: ExperimentConfig,
    pub version: String,
    pub generator: String,
    pub root_seed: u64,
    /// Seconds since the Unix epoch when the run started.
    pub started_at: f64,
    pub wall_seconds: f64,
    pub outputs: Vec<String>,
    pub overflow: bool,
    pub reduced_precision: bool,
}

#[derive(Debug, Clone)]
pub struct RunOutput {
    pub manifest: RunManifest,
    pub csv_path: PathBuf,
    pub manifest_path: PathBuf,
    pub trajectory: Trajectory,
}

/// Runs `config` and writes `<stem>.csv` and `<stem>.manifest.json` into
/// `out_dir`.
pub fn run_config(config: &ExperimentConfig, stem: &str, out_dir: &Path) -> Result<RunOutput> {
    let started_at = SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map(|d| d.as_secs_f64())
        .unwrap_or(0.0);
    let clock = Instant::now();
    let trajectory = run(config)?;
    let wall_seconds = clock.elapsed().as_secs_f64();

    std::fs::create_dir_all(out_dir)?;
    let csv_name = format!("{stem}.csv");
    let manifest_name = format!("{stem}.manifest.json");
    let csv_path = out_dir.join(&csv_name);
    let manifest_path = out_dir.join(&manifest_name);
    std::fs::write(
        &csv_path,
        trajectory_csv(config, &trajectory, &[format!("manifest = \"{manifest_name}\"")]),
    )?;

    let manifest = RunManifest {
        config: config.clone(),
        version: VERSION.to_string(),
        generator: rng::GENERATOR.to_string(),
        root_seed: config.seed,
        started_at,
        wall_seconds,
        outputs: vec![csv_name],
        overflow: trajectory.overflow,
        reduced_precision: trajectory.reduced_precision,
    };
    let json = serde_json::to_string_pretty(&manifest).map_err(|e| Error::Config(e.to_string()))?;
    std::fs::write(&manifest_path, json + "\n")?;
    Ok(RunOutput {
        manifest,
        csv_path,
        manifest_path,
        trajectory,
    })
}

/// Loads, validates and runs a config file. Outputs are named after the
/// config file.
pub fn run_experiment(config_path: &Path, out_dir: &Path) -> Result<RunOutput> {
    let config = load_config(config_path)?;
    let stem = config_path.file_stem().and_then(|s| s.to_str()).unwrap_or("run");
    run_config(&config, stem, out_dir)
}
