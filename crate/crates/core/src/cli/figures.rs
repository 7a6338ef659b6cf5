//! Figure presets and step-size searches.
//!
//! The noisy presets share one construction: a source mean `e1`, a unit-norm
//! target mean whose first coordinate is 0.6567 (the rest random), and a
//! target noise level chosen so that the source classifier has 20% expected
//! error on the target while the best linear classifier has 10%.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;

use super::output::trajectory_csv;
use super::svg;
use crate::analysis::tail_rate_curve;
use crate::dynamics::{run, ExperimentConfig, Mode, SampleStream, Trajectory, TrajectoryPoint};
use crate::losses::{make_loss, LabelRule, LossFamily, SelfTrainingLoss};
use crate::model::{decompose, norm, zero_one_loss, GaussianModel};
use crate::{rng, Error, Result};

pub const MU_T_FIRST: f64 = 0.6567;
pub const SIGMA_T: f64 = 0.6567 / 0.8416;

/// Step sizes searched for the noisy presets.
pub const ETA_GRID: [f64; 11] = [1e-3, 5e-3, 1e-2, 5e-2, 1e-1, 5e-1, 1.0, 5.0, 10.0, 50.0, 100.0];

pub const DEFAULT_DIM: usize = 10;
pub const DEFAULT_BATCH: usize = 32;
pub const DEFAULT_SEEDS: usize = 10;
pub const FIG1_HORIZON: usize = 50;
pub const FIG4_HORIZON: usize = 500;

#[derive(Debug, Clone, PartialEq)]
pub struct TargetShift {
    pub mu_s: Vec<f64>,
    pub mu_t: Vec<f64>,
    pub sigma_t: f64,
    pub w_init: Vec<f64>,
}

impl TargetShift {
    pub fn target(&self) -> GaussianModel {
        GaussianModel::new(self.mu_t.clone(), self.sigma_t).expect("target mean is a unit vector")
    }
}

pub fn build_appendix_b_model(d: usize, seed: u64) -> Result<TargetShift> {
    if d < 2 {
        return Err(Error::invalid("dim", "dimension must be at least 2"));
    }
    let mut rng = rng::stream(seed);
    let tail_norm = (1.0 - MU_T_FIRST * MU_T_FIRST).sqrt();
    let tail = loop {
        let v: Vec<f64> = (1..d).map(|_| StandardNormal.sample(&mut rng)).collect();
        let n = norm(&v);
        if n > 0.0 {
            break v.into_iter().map(|x| x * tail_norm / n).collect::<Vec<f64>>();
        }
    };
    let mut mu_t = Vec::with_capacity(d);
    mu_t.push(MU_T_FIRST);
    mu_t.extend(tail);
    let mut mu_s = vec![0.0; d];
    mu_s[0] = 1.0;
    Ok(TargetShift {
        w_init: mu_s.clone(),
        mu_s,
        mu_t,
        sigma_t: SIGMA_T,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FigureId {
    Fig1a,
    Fig1b,
    Fig2,
    Fig3,
    Fig4Exp,
    Fig4Logistic,
}

impl FigureId {
    pub const ALL: [FigureId; 6] = [
        FigureId::Fig1a,
        FigureId::Fig1b,
        FigureId::Fig2,
        FigureId::Fig3,
        FigureId::Fig4Exp,
        FigureId::Fig4Logistic,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            FigureId::Fig1a => "fig1a",
            FigureId::Fig1b => "fig1b",
            FigureId::Fig2 => "fig2",
            FigureId::Fig3 => "fig3",
            FigureId::Fig4Exp => "fig4-exp",
            FigureId::Fig4Logistic => "fig4-logistic",
        }
    }
}

impl FromStr for FigureId {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        FigureId::ALL.into_iter().find(|id| id.as_str() == s).ok_or_else(|| {
            let known: Vec<&str> = FigureId::ALL.iter().map(|id| id.as_str()).collect();
            Error::invalid("figure", format!("unknown figure `{s}` (one of {})", known.join(", ")))
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FigureOptions {
    pub dim: usize,
    pub batch: usize,
    pub seed: u64,
    /// Overrides the preset horizon.
    pub horizon: Option<usize>,
    pub seeds: usize,
}

impl Default for FigureOptions {
    fn default() -> Self {
        Self {
            dim: DEFAULT_DIM,
            batch: DEFAULT_BATCH,
            seed: 0,
            horizon: None,
            seeds: DEFAULT_SEEDS,
        }
    }
}

#[derive(Debug, Clone)]
pub struct Fig1Result {
    pub eta: f64,
    pub hard: (ExperimentConfig, Trajectory),
    pub conj: (ExperimentConfig, Trajectory),
    /// The source classifier, never updated.
    pub baseline: Trajectory,
    pub best_error: f64,
}

fn constant_trajectory(w: &[f64], model: &GaussianModel, len: usize) -> Result<Trajectory> {
    let dec = decompose(w, model)?;
    let loss01 = zero_one_loss(model, w)?;
    let points = (1..=len)
        .map(|t| TrajectoryPoint {
            t,
            a: dec.a,
            b: dec.b,
            r: dec.r,
            cos: dec.cos,
            loss01,
        })
        .collect();
    Ok(Trajectory {
        points,
        overflow: false,
        reduced_precision: false,
    })
}

/// Noiseless alternating `+mu_T, -mu_T` stream, one sample per step, loss
/// measured on the noisy target distribution.
pub fn fig1_runs(eta: f64, opts: &FigureOptions) -> Result<Fig1Result> {
    let setup = build_appendix_b_model(opts.dim, opts.seed)?;
    let model = setup.target();
    let horizon = opts.horizon.unwrap_or(FIG1_HORIZON);
    let config = |rule| ExperimentConfig {
        model: model.clone(),
        loss: make_loss(rule, LossFamily::Square),
        eta,
        mode: Mode::Stochastic,
        stream: SampleStream::Alternating,
        batch_size: 1,
        horizon,
        seed: opts.seed,
        w_init: setup.w_init.clone(),
    };
    let hard = config(LabelRule::Hard);
    let conj = config(LabelRule::Conj);
    let hard_run = run(&hard)?;
    let conj_run = run(&conj)?;
    Ok(Fig1Result {
        eta,
        baseline: constant_trajectory(&setup.w_init, &model, horizon + 1)?,
        hard: (hard, hard_run),
        conj: (conj, conj_run),
        best_error: model.best_error(),
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct GridRow {
    pub eta: f64,
    pub seed: u64,
    pub final_loss01: f64,
    pub overflow: bool,
    /// Recorded iterates (fewer than `horizon + 1` after an overflow).
    pub points: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GridResult {
    pub best_eta: f64,
    pub rows: Vec<GridRow>,
}

impl GridResult {
    pub fn to_csv(&self) -> String {
        let mut s = String::from("eta,seed,final_loss01,overflow,points,best\n");
        for r in &self.rows {
            writeln!(
                s,
                "{},{},{},{},{},{}",
                r.eta,
                r.seed,
                r.final_loss01,
                r.overflow,
                r.points,
                r.eta == self.best_eta
            )
            .unwrap();
        }
        s
    }
}

/// Index of the best entry: non-overflowing first, then smallest loss, then
/// smallest step size.
fn best_index(entries: &[(f64, f64, bool)]) -> usize {
    let mut order: Vec<usize> = (0..entries.len()).collect();
    order.sort_by(|&i, &j| {
        let (ei, li, oi) = entries[i];
        let (ej, lj, oj) = entries[j];
        oi.cmp(&oj).then(li.total_cmp(&lj)).then(ei.total_cmp(&ej))
    });
    order[0]
}

fn check_etas(etas: &[f64]) -> Result<()> {
    if etas.is_empty() {
        return Err(Error::invalid("etas", "step-size grid must not be empty"));
    }
    if let Some(bad) = etas.iter().find(|e| !(**e > 0.0 && e.is_finite())) {
        return Err(Error::invalid(
            "etas",
            format!("step sizes must be positive, got {bad}"),
        ));
    }
    Ok(())
}

/// Runs `base` once per step size, each with its own derived stream, and
/// picks the step size with the smallest final expected 0-1 loss.
pub fn grid_search(base: &ExperimentConfig, etas: &[f64]) -> Result<GridResult> {
    check_etas(etas)?;
    let rows = etas
        .par_iter()
        .enumerate()
        .map(|(i, &eta)| {
            let config = ExperimentConfig {
                eta,
                seed: rng::derive_seed(base.seed, i as u64),
                ..base.clone()
            };
            let traj = run(&config)?;
            Ok(GridRow {
                eta,
                seed: config.seed,
                final_loss01: traj.final_loss(),
                overflow: traj.overflow,
                points: traj.points.len(),
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let entries: Vec<_> = rows.iter().map(|r| (r.eta, r.final_loss01, r.overflow)).collect();
    Ok(GridResult {
        best_eta: rows[best_index(&entries)].eta,
        rows,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepCell {
    pub loss: SelfTrainingLoss,
    pub eta: f64,
    pub final_losses: Vec<f64>,
    pub overflow_runs: usize,
    pub mean: f64,
    /// Sample standard deviation over seeds.
    pub sd: f64,
    /// Loss at each `t`, averaged over seeds. Overflowed runs hold their last
    /// recorded value.
    pub mean_curve: Vec<f64>,
}

#[derive(Debug, Clone)]
pub struct Sweep {
    pub setup: TargetShift,
    pub best_error: f64,
    pub horizon: usize,
    /// Ordered by loss, then step size.
    pub cells: Vec<SweepCell>,
}

impl Sweep {
    pub fn cells_for(&self, loss: &SelfTrainingLoss) -> impl Iterator<Item = &SweepCell> {
        let loss = *loss;
        self.cells.iter().filter(move |c| c.loss == loss)
    }

    /// Best step size for `loss` by mean final loss over seeds.
    pub fn best(&self, loss: &SelfTrainingLoss) -> Option<&SweepCell> {
        let cells: Vec<&SweepCell> = self.cells_for(loss).collect();
        if cells.is_empty() {
            return None;
        }
        let entries: Vec<_> = cells.iter().map(|c| (c.eta, c.mean, c.overflow_runs > 0)).collect();
        Some(cells[best_index(&entries)])
    }

    pub fn losses(&self) -> Vec<SelfTrainingLoss> {
        let mut out: Vec<SelfTrainingLoss> = Vec::new();
        for c in &self.cells {
            if !out.contains(&c.loss) {
                out.push(c.loss);
            }
        }
        out
    }

    pub fn grid_csv(&self) -> String {
        let mut s = String::from("loss,eta,mean_final_loss01,sd_final_loss01,overflow_runs,best\n");
        for loss in self.losses() {
            let best = self.best(&loss).map(|c| c.eta);
            for c in self.cells_for(&loss) {
                writeln!(
                    s,
                    "{},{},{},{},{},{}",
                    loss,
                    c.eta,
                    c.mean,
                    c.sd,
                    c.overflow_runs,
                    Some(c.eta) == best
                )
                .unwrap();
            }
        }
        s
    }

    /// Mean curves of each loss at its best step size, plus the best
    /// achievable error as a constant column.
    pub fn curves_csv(&self) -> String {
        let best: Vec<&SweepCell> = self.losses().iter().filter_map(|l| self.best(l)).collect();
        let mut s = String::from("t");
        for c in &best {
            write!(s, ",{} eta={}", c.loss, c.eta).unwrap();
        }
        s.push_str(",best_error\n");
        for t in 0..=self.horizon {
            write!(s, "{}", t + 1).unwrap();
            for c in &best {
                write!(s, ",{}", c.mean_curve[t]).unwrap();
            }
            writeln!(s, ",{}", self.best_error).unwrap();
        }
        s
    }
}

fn mean_sd(v: &[f64]) -> (f64, f64) {
    let n = v.len() as f64;
    let mean = v.iter().sum::<f64>() / n;
    if v.len() < 2 {
        return (mean, 0.0);
    }
    let var = v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

/// Noisy mini-batch runs of `losses` over `etas` and `opts.seeds` seeds on
/// the target distribution. Seed `k` at step-size index `i` uses
/// `derive_seed(derive_seed(root, k), i)` for every loss, so losses are
/// compared on the same sample streams.
pub fn sweep(losses: &[SelfTrainingLoss], etas: &[f64], opts: &FigureOptions) -> Result<Sweep> {
    check_etas(etas)?;
    if opts.seeds == 0 {
        return Err(Error::invalid("seeds", "need at least one seed"));
    }
    let setup = build_appendix_b_model(opts.dim, opts.seed)?;
    let model = setup.target();
    let horizon = opts.horizon.unwrap_or(FIG4_HORIZON);

    let jobs: Vec<(SelfTrainingLoss, usize, usize)> = losses
        .iter()
        .flat_map(|&l| (0..etas.len()).flat_map(move |i| (0..opts.seeds).map(move |k| (l, i, k))))
        .collect();
    let runs = jobs
        .par_iter()
        .map(|&(loss, i, k)| {
            let config = ExperimentConfig {
                model: model.clone(),
                loss,
                eta: etas[i],
                mode: Mode::Stochastic,
                stream: SampleStream::Gaussian,
                batch_size: opts.batch,
                horizon,
                seed: rng::derive_seed(rng::derive_seed(opts.seed, k as u64), i as u64),
                w_init: setup.w_init.clone(),
            };
            run(&config)
        })
        .collect::<Result<Vec<Trajectory>>>()?;

    let cells = runs
        .chunks(opts.seeds)
        .zip(jobs.chunks(opts.seeds))
        .map(|(trajs, job)| {
            let (loss, i, _) = job[0];
            let final_losses: Vec<f64> = trajs.iter().map(Trajectory::final_loss).collect();
            let (mean, sd) = mean_sd(&final_losses);
            let mean_curve = (0..=horizon)
                .map(|t| {
                    let sum: f64 = trajs
                        .iter()
                        .map(|tr| tr.points[t.min(tr.points.len() - 1)].loss01)
                        .sum();
                    sum / trajs.len() as f64
                })
                .collect();
            SweepCell {
                loss,
                eta: etas[i],
                final_losses,
                overflow_runs: trajs.iter().filter(|t| t.overflow).count(),
                mean,
                sd,
                mean_curve,
            }
        })
        .collect();
    Ok(Sweep {
        best_error: model.best_error(),
        setup,
        horizon,
        cells,
    })
}

pub fn fig4_losses(family: LossFamily) -> [SelfTrainingLoss; 2] {
    [make_loss(LabelRule::Hard, family), make_loss(LabelRule::Conj, family)]
}

fn loss_table(header: &str, grid: &[f64], f: impl Fn(&SelfTrainingLoss, f64) -> Option<f64>) -> String {
    let mut s = String::from(header);
    for loss in SelfTrainingLoss::CLUB {
        write!(s, ",{loss}").unwrap();
    }
    s.push('\n');
    for &x in grid {
        write!(s, "{x}").unwrap();
        for loss in SelfTrainingLoss::CLUB {
            match f(&loss, x) {
                Some(v) => write!(s, ",{v}").unwrap(),
                None => s.push(','),
            }
        }
        s.push('\n');
    }
    s
}

/// `psi(u)` on `[-4, 4]`.
pub fn fig2_csv() -> String {
    let grid: Vec<f64> = (-400..=400).map(|k| k as f64 / 100.0).collect();
    loss_table("u", &grid, |l, u| Some(l.psi(u)))
}

/// Tail exponent `L(z)` on `(0, 8]`.
pub fn fig3_csv() -> String {
    let grid: Vec<f64> = (1..=800).map(|k| k as f64 / 100.0).collect();
    let curves: Vec<_> = SelfTrainingLoss::CLUB
        .iter()
        .map(|l| tail_rate_curve(l, &grid))
        .collect();
    loss_table("z", &grid, |l, z| {
        let curve = curves.iter().find(|c| c.loss == *l)?;
        curve.points.iter().find(|p| p.0 == z).map(|p| p.1)
    })
}

#[derive(Debug, Clone, Default)]
pub struct FigureOutput {
    pub files: Vec<PathBuf>,
    /// `key = value` lines summarizing the figure.
    pub summary: Vec<String>,
}

fn write(dir: &Path, name: &str, body: &str, out: &mut FigureOutput) -> Result<()> {
    let path = dir.join(name);
    std::fs::write(&path, body)?;
    out.files.push(path);
    Ok(())
}

/// Writes the CSVs and SVG of a figure preset into `out_dir`.
pub fn reproduce_figure(id: FigureId, opts: &FigureOptions, out_dir: &Path) -> Result<FigureOutput> {
    if opts.batch == 0 {
        return Err(Error::invalid("batch", "batch size must be at least 1"));
    }
    std::fs::create_dir_all(out_dir)?;
    let name = id.as_str();
    let mut out = FigureOutput::default();
    match id {
        FigureId::Fig1a | FigureId::Fig1b => {
            let eta = if id == FigureId::Fig1a { 1.0 } else { 100.0 };
            let res = fig1_runs(eta, opts)?;
            let meta = |curve: &str| vec![format!("curve = \"{curve}\"")];
            let hard = trajectory_csv(&res.hard.0, &res.hard.1, &meta("hard+square"));
            let conj = trajectory_csv(&res.conj.0, &res.conj.1, &meta("conj+square"));
            let base = trajectory_csv(&res.conj.0, &res.baseline, &meta("no adaptation"));
            write(out_dir, &format!("{name}_hard_square.csv"), &hard, &mut out)?;
            write(out_dir, &format!("{name}_conj_square.csv"), &conj, &mut out)?;
            write(out_dir, &format!("{name}_no_adaptation.csv"), &base, &mut out)?;
            let chart = svg::chart_from_trajectories(
                &format!("alternating stream, eta = {eta}"),
                &[("hard+square", &hard), ("conj+square", &conj), ("no adaptation", &base)],
            )?;
            write(out_dir, &format!("{name}.svg"), &chart, &mut out)?;
            out.summary = vec![
                format!("eta = {eta}"),
                format!("hard_square_final_loss01 = {}", res.hard.1.final_loss()),
                format!("hard_square_overflow = {}", res.hard.1.overflow),
                format!("conj_square_final_loss01 = {}", res.conj.1.final_loss()),
                format!("conj_square_overflow = {}", res.conj.1.overflow),
                format!("no_adaptation_loss01 = {}", res.baseline.final_loss()),
                format!("best_error = {}", res.best_error),
            ];
        }
        FigureId::Fig2 => {
            let csv = fig2_csv();
            write(out_dir, "fig2.csv", &csv, &mut out)?;
            write(
                out_dir,
                "fig2.svg",
                &svg::chart_from_table("self-training losses", "psi(u)", &csv)?,
                &mut out,
            )?;
        }
        FigureId::Fig3 => {
            let csv = fig3_csv();
            write(out_dir, "fig3.csv", &csv, &mut out)?;
            let chart = svg::chart_from_table("tail exponent", "L(z) = -log(-psi'(z)) / z", &csv)?;
            write(out_dir, "fig3.svg", &chart, &mut out)?;
        }
        FigureId::Fig4Exp | FigureId::Fig4Logistic => {
            let family = if id == FigureId::Fig4Exp {
                LossFamily::Exp
            } else {
                LossFamily::Logistic
            };
            let sw = sweep(&fig4_losses(family), &ETA_GRID, opts)?;
            let curves = sw.curves_csv();
            write(out_dir, &format!("{name}_grid.csv"), &sw.grid_csv(), &mut out)?;
            write(out_dir, &format!("{name}_curves.csv"), &curves, &mut out)?;
            let chart = svg::chart_from_table(
                &format!("{} family, best step size per method", family.as_str()),
                "expected 0-1 loss",
                &curves,
            )?;
            write(out_dir, &format!("{name}.svg"), &chart, &mut out)?;
            for loss in sw.losses() {
                if let Some(c) = sw.best(&loss) {
                    let tag = format!("{}_{}", loss.rule.as_str(), loss.family.as_str());
                    out.summary.push(format!("{tag}_best_eta = {}", c.eta));
                    out.summary.push(format!("{tag}_mean_final_loss01 = {}", c.mean));
                    out.summary.push(format!("{tag}_sd_final_loss01 = {}", c.sd));
                }
            }
            out.summary.push(format!("best_error = {}", sw.best_error));
        }
    }
    Ok(out)
}
