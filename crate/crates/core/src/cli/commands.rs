//! Command-line front end.

use std::path::PathBuf;

use clap::{Parser, Subcommand};

use super::config::load_config;
use super::figures::{
    grid_search, reproduce_figure, FigureId, FigureOptions, DEFAULT_BATCH, DEFAULT_DIM, DEFAULT_SEEDS,
};
use super::output::run_experiment;
use crate::analysis::{lemma_recursion_run, stein_identity_check, verify_club_default, Records};
use crate::losses::SelfTrainingLoss;
use crate::{Error, Result};

#[derive(Debug, Parser)]
#[command(
    name = "ttadapt",
    version,
    about = "Pseudo-label self-training dynamics under a Gaussian model"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Run one experiment config and write its trajectory CSV and manifest.
    Run {
        config: PathBuf,
        #[arg(long, default_value = ".")]
        out: PathBuf,
    },
    /// Reproduce a figure preset as CSV and SVG.
    Figure {
        /// fig1a, fig1b, fig2, fig3, fig4-exp or fig4-logistic
        id: String,
        #[arg(long, default_value_t = DEFAULT_DIM)]
        dim: usize,
        #[arg(long, default_value_t = DEFAULT_BATCH)]
        batch: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        horizon: Option<usize>,
        #[arg(long, default_value_t = DEFAULT_SEEDS)]
        seeds: usize,
        #[arg(long, default_value = ".")]
        out: PathBuf,
    },
    /// Search step sizes for a config; prints the per-step-size CSV.
    Grid {
        config: PathBuf,
        /// Comma-separated step sizes.
        #[arg(long, value_delimiter = ',', required = true)]
        etas: Vec<f64>,
    },
    /// Check the exponential tail bound of the losses that have one.
    Club {
        /// RULE:FAMILY; all losses with a bound when omitted.
        #[arg(long)]
        loss: Option<String>,
    },
    /// Simulate r_{t+1} = r_t + c exp(-L r_t) and check its log lower bound.
    Lemma2 {
        #[arg(long)]
        c: f64,
        #[arg(long = "L")]
        l: f64,
        #[arg(long, default_value_t = 1.0)]
        r1: f64,
        #[arg(long = "T", default_value_t = 100_000)]
        t: usize,
        /// Use r_{t+1} = r_t + 2c exp(-L r_t) instead.
        #[arg(long)]
        inequality: bool,
    },
    /// Monte Carlo check of E[Z psi'(m + sZ)] = s E[psi''(m + sZ)].
    Stein {
        #[arg(long)]
        loss: String,
        #[arg(long)]
        m: f64,
        #[arg(long)]
        s: f64,
        #[arg(long, default_value_t = 1_000_000)]
        n: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
}

/// Runs a command and returns what it prints on success.
pub fn execute(command: Command) -> Result<String> {
    match command {
        Command::Run { config, out } => {
            let res = run_experiment(&config, &out)?;
            let last = res.trajectory.last();
            Ok(format!(
                "csv = {}\nmanifest = {}\nrows = {}\noverflow = {}\nfinal_loss01 = {}\nfinal_cos = {}\n",
                res.csv_path.display(),
                res.manifest_path.display(),
                res.trajectory.points.len(),
                res.trajectory.overflow,
                last.loss01,
                last.cos,
            ))
        }
        Command::Figure {
            id,
            dim,
            batch,
            seed,
            horizon,
            seeds,
            out,
        } => {
            let id: FigureId = id.parse()?;
            let opts = FigureOptions {
                dim,
                batch,
                seed,
                horizon,
                seeds,
            };
            let res = reproduce_figure(id, &opts, &out)?;
            let mut s: String = res.files.iter().map(|f| format!("wrote {}\n", f.display())).collect();
            for line in res.summary {
                s.push_str(&line);
                s.push('\n');
            }
            Ok(s)
        }
        Command::Grid { config, etas } => {
            let base = load_config(&config)?;
            let res = grid_search(&base, &etas)?;
            Ok(format!("{}# best_eta = {}\n", res.to_csv(), res.best_eta))
        }
        Command::Club { loss } => {
            let losses: Vec<SelfTrainingLoss> = match loss {
                Some(s) => vec![s.parse()?],
                None => SelfTrainingLoss::CLUB.to_vec(),
            };
            let mut s = String::new();
            for loss in losses {
                let cert = verify_club_default(&loss)
                    .ok_or_else(|| Error::invalid("loss", format!("{loss} has no exponential tail bound")))?;
                s.push_str(&cert.to_key_values());
                s.push('\n');
            }
            Ok(s)
        }
        Command::Lemma2 {
            c,
            l,
            r1,
            t,
            inequality,
        } => {
            let (r, report) = lemma_recursion_run(r1, c, l, t, !inequality)?;
            Ok(format!("{}r_T = {}\n", report.to_key_values(), r[r.len() - 1]))
        }
        Command::Stein { loss, m, s, n, seed } => {
            let loss: SelfTrainingLoss = loss.parse()?;
            let report = stein_identity_check(&loss, m, s, n, seed)?;
            Ok(report.to_key_values())
        }
    }
}

/// Parses `args` (including the program name), runs the command and returns
/// the process exit code.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    match execute(cli.command) {
        Ok(out) => {
            print!("{out}");
            0
        }
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}
