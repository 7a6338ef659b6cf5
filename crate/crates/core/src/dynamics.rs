//! Gradient-descent dynamics of pseudo-label self-training.
//!
//! Two modes are kept strictly apart:
//!
//! * **Stochastic**: plain (mini-batch) gradient descent on sampled test
//!   points. Only `x` is read from each sample; labels never reach the update.
//! * **Population**: the idealized recursion on the pair `(a, b)` obtained by
//!   taking the expectation of the update over the data distribution. With
//!   Stein's identity the update of `w` becomes
//!   `w' = (1 - eta sigma^2 E[psi''(Z)]) w - eta E[psi'(Z)] mu` with
//!   `Z = w^T (mu + sigma xi)`, which only involves `a = <w, mu>` and the
//!   orthogonal size `b`.

use serde::{Deserialize, Serialize};

use crate::losses::SelfTrainingLoss;
use crate::model::{
    decompose, dot, loss_from_alignment, norm, sample_batch, zero_one_loss, GaussianModel, PredictorDecomposition,
    Sample,
};
use crate::quadrature::{rule128, rule64};
use crate::{rng, Error, Result};

/// Magnitude beyond which a run is stopped and flagged as overflowed.
pub const OVERFLOW_LIMIT: f64 = 1e150;

/// Relative disagreement between the order-64 and order-128 rules above
/// which an expectation is reported as reduced precision.
pub const QUADRATURE_TOLERANCE: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    Stochastic,
    Population,
}

/// Where the stochastic runner gets its test points from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SampleStream {
    /// Fresh draws `x = y (mu + sigma xi)`.
    #[default]
    Gaussian,
    /// Noiseless `x = +mu, -mu, +mu, ...` by global sample index.
    Alternating,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub model: GaussianModel,
    pub loss: SelfTrainingLoss,
    pub eta: f64,
    pub mode: Mode,
    #[serde(default)]
    pub stream: SampleStream,
    pub batch_size: usize,
    pub horizon: usize,
    pub seed: u64,
    pub w_init: Vec<f64>,
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.eta > 0.0 && self.eta.is_finite()) {
            return Err(Error::invalid("run.eta", "eta must be positive"));
        }
        if self.batch_size == 0 {
            return Err(Error::invalid("run.batch", "batch size must be at least 1"));
        }
        if self.horizon == 0 {
            return Err(Error::invalid("run.horizon", "horizon must be at least 1"));
        }
        if self.w_init.len() != self.model.dim() {
            return Err(Error::invalid(
                "init.w",
                format!(
                    "length {} does not match model dimension {}",
                    self.w_init.len(),
                    self.model.dim()
                ),
            ));
        }
        if self.w_init.iter().any(|v| !v.is_finite()) || norm(&self.w_init) == 0.0 {
            return Err(Error::invalid("init.w", "initial weights must be finite and non-zero"));
        }
        if self.mode == Mode::Population {
            check_population_support(&self.loss, &self.model)?;
        }
        Ok(())
    }

    /// Whether the initial point has positive correlation with `mu`, the
    /// standing assumption behind every convergence statement.
    pub fn starts_acute(&self) -> bool {
        decompose(&self.w_init, &self.model).map(|d| d.a > 0.0).unwrap_or(false)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryPoint {
    pub t: usize,
    pub a: f64,
    pub b: f64,
    pub r: f64,
    pub cos: f64,
    pub loss01: f64,
}

impl TrajectoryPoint {
    fn new(t: usize, dec: &PredictorDecomposition, loss01: f64) -> Self {
        Self {
            t,
            a: dec.a,
            b: dec.b,
            r: dec.r,
            cos: dec.cos,
            loss01,
        }
    }

    pub fn is_epsilon_optimal(&self, eps: f64) -> bool {
        self.a > 0.0 && self.cos * self.cos >= 1.0 - eps
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    pub points: Vec<TrajectoryPoint>,
    /// The run stopped early because the iterate left floating-point range.
    pub overflow: bool,
    /// At least one population expectation failed the quadrature cross-check.
    pub reduced_precision: bool,
}

impl Trajectory {
    pub fn last(&self) -> &TrajectoryPoint {
        self.points.last().expect("trajectories always hold the initial point")
    }

    pub fn final_loss(&self) -> f64 {
        self.last().loss01
    }

    /// Index `t` of the first ε-optimal iterate.
    pub fn first_epsilon_optimal(&self, eps: f64) -> Option<usize> {
        self.points.iter().find(|p| p.is_epsilon_optimal(eps)).map(|p| p.t)
    }
}

/// One step of gradient descent on the batch-mean self-training loss.
pub fn gd_step(w: &[f64], batch: &[Sample], loss: &SelfTrainingLoss, eta: f64) -> Result<Vec<f64>> {
    if batch.is_empty() {
        return Err(Error::invalid("batch", "batch must not be empty"));
    }
    let mut grad = vec![0.0; w.len()];
    for sample in batch {
        if sample.x.len() != w.len() {
            return Err(Error::DimensionMismatch {
                expected: w.len(),
                found: sample.x.len(),
            });
        }
        let g = loss.dpsi(dot(w, &sample.x));
        grad.iter_mut().zip(&sample.x).for_each(|(acc, xi)| *acc += g * xi);
    }
    let scale = eta / batch.len() as f64;
    Ok(w.iter().zip(&grad).map(|(wi, gi)| wi - scale * gi).collect())
}

fn stochastic_point(t: usize, w: &[f64], model: &GaussianModel) -> Result<TrajectoryPoint> {
    if norm(w) == 0.0 {
        let dec = PredictorDecomposition::from_components(0.0, 0.0, model.mu_norm());
        return Ok(TrajectoryPoint::new(t, &dec, 0.5));
    }
    let dec = decompose(w, model)?;
    Ok(TrajectoryPoint::new(t, &dec, zero_one_loss(model, w)?))
}

fn overflowed(values: &[f64]) -> bool {
    values.iter().any(|v| !v.is_finite() || v.abs() > OVERFLOW_LIMIT)
}

/// Runs test-time adaptation with pseudo-labels: a fresh batch per step, one
/// gradient step on the pseudo-label loss, record before each update.
pub fn run_stochastic(config: &ExperimentConfig) -> Result<Trajectory> {
    config.validate()?;
    if config.mode != Mode::Stochastic {
        return Err(Error::invalid("run.mode", "run_stochastic requires stochastic mode"));
    }
    let model = &config.model;
    let mut rng = rng::stream(config.seed);
    let mut w = config.w_init.clone();
    let mut points = Vec::with_capacity(config.horizon + 1);
    let mut drawn = 0usize;
    let mut overflow = false;

    for t in 1..=config.horizon {
        points.push(stochastic_point(t, &w, model)?);
        let batch = match config.stream {
            SampleStream::Gaussian => sample_batch(model, &mut rng, config.batch_size),
            SampleStream::Alternating => (0..config.batch_size)
                .map(|_| {
                    let y: i8 = if drawn.is_multiple_of(2) { 1 } else { -1 };
                    drawn += 1;
                    let x = model.mu().iter().map(|m| f64::from(y) * m).collect();
                    Sample { x, y }
                })
                .collect(),
        };
        let next = gd_step(&w, &batch, &config.loss, config.eta)?;
        if overflowed(&next) {
            overflow = true;
            break;
        }
        w = next;
    }
    if !overflow {
        points.push(stochastic_point(config.horizon + 1, &w, model)?);
    }
    Ok(Trajectory {
        points,
        overflow,
        reduced_precision: false,
    })
}

fn check_population_support(loss: &SelfTrainingLoss, model: &GaussianModel) -> Result<()> {
    if model.sigma() > 0.0 && !loss.smooth_second_derivative() {
        return Err(Error::Unsupported(format!(
            "distributional ψ″: population dynamics of {} at sigma > 0 need the point mass of psi'' at 0",
            loss.name()
        )));
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Expectations {
    /// `E[psi'(Z)]`.
    pub e1: f64,
    /// `E[psi''(Z)]`.
    pub e2: f64,
    pub reduced_precision: bool,
}

/// `E[psi'(Z)]` and `E[psi''(Z)]` for `Z = w^T (mu + sigma xi)`, which is
/// `N(a, sigma^2 (a^2 / |mu|^2 + b^2))`.
pub fn expectation_terms(loss: &SelfTrainingLoss, a: f64, b: f64, model: &GaussianModel) -> Result<Expectations> {
    check_population_support(loss, model)?;
    let mu_norm = model.mu_norm();
    let sd = model.sigma() * ((a / mu_norm).powi(2) + b * b).sqrt();
    if sd == 0.0 {
        return Ok(Expectations {
            e1: loss.dpsi(a),
            e2: loss.ddpsi(a),
            reduced_precision: false,
        });
    }
    let e1_64 = rule64().expect_normal(a, sd, |z| loss.dpsi(z));
    let e2_64 = rule64().expect_normal(a, sd, |z| loss.ddpsi(z));
    let e1_128 = rule128().expect_normal(a, sd, |z| loss.dpsi(z));
    let e2_128 = rule128().expect_normal(a, sd, |z| loss.ddpsi(z));
    let disagree = |lo: f64, hi: f64| (lo - hi).abs() > QUADRATURE_TOLERANCE * hi.abs().max(1e-6);
    if disagree(e1_64, e1_128) || disagree(e2_64, e2_128) {
        return Ok(Expectations {
            e1: e1_128,
            e2: e2_128,
            reduced_precision: true,
        });
    }
    Ok(Expectations {
        e1: e1_64,
        e2: e2_64,
        reduced_precision: false,
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PopulationUpdate {
    pub a: f64,
    pub b: f64,
    pub reduced_precision: bool,
}

/// One step of the population recursion on `(a, b)`.
pub fn population_step(
    a: f64,
    b: f64,
    loss: &SelfTrainingLoss,
    model: &GaussianModel,
    eta: f64,
) -> Result<PopulationUpdate> {
    let ex = expectation_terms(loss, a, b, model)?;
    let contraction = 1.0 - eta * model.sigma().powi(2) * ex.e2;
    let mu2 = model.mu_norm().powi(2);
    Ok(PopulationUpdate {
        a: contraction * a - eta * ex.e1 * mu2,
        b: contraction.abs() * b,
        reduced_precision: ex.reduced_precision,
    })
}

fn population_point(t: usize, a: f64, b: f64, model: &GaussianModel) -> TrajectoryPoint {
    let dec = PredictorDecomposition::from_components(a, b, model.mu_norm());
    TrajectoryPoint::new(t, &dec, loss_from_alignment(model, dec.cos))
}

pub fn run_population(config: &ExperimentConfig) -> Result<Trajectory> {
    config.validate()?;
    if config.mode != Mode::Population {
        return Err(Error::invalid("run.mode", "run_population requires population mode"));
    }
    let model = &config.model;
    let start = decompose(&config.w_init, model)?;
    let (mut a, mut b) = (start.a, start.b);
    let mut points = Vec::with_capacity(config.horizon + 1);
    let mut overflow = false;
    let mut reduced_precision = false;

    for t in 1..=config.horizon {
        points.push(population_point(t, a, b, model));
        let next = population_step(a, b, &config.loss, model, config.eta)?;
        reduced_precision |= next.reduced_precision;
        if overflowed(&[next.a, next.b]) {
            overflow = true;
            break;
        }
        (a, b) = (next.a, next.b);
    }
    if !overflow {
        points.push(population_point(config.horizon + 1, a, b, model));
    }
    Ok(Trajectory {
        points,
        overflow,
        reduced_precision,
    })
}

/// Dispatches on `config.mode`.
pub fn run(config: &ExperimentConfig) -> Result<Trajectory> {
    match config.mode {
        Mode::Stochastic => run_stochastic(config),
        Mode::Population => run_population(config),
    }
}

/// Noiseless hard-label square-loss recursion on `a_bar = <w, mu / |mu|>`.
pub fn hard_square_scalar_step(a_bar: f64, eta: f64, mu_norm: f64) -> f64 {
    let sign = if a_bar > 0.0 {
        1.0
    } else if a_bar < 0.0 {
        -1.0
    } else {
        0.0
    };
    (1.0 - eta * mu_norm * mu_norm) * a_bar + eta * sign * mu_norm
}

/// Per-step growth factor of the ratio `a / b` under conj+square.
pub fn conj_square_growth(eta: f64, mu_norm: f64, sigma: f64) -> f64 {
    1.0 + eta * mu_norm * mu_norm / (1.0 + eta * sigma * sigma)
}

/// `r_{t+1} = r_1 g^t` for conj+square.
pub fn conj_square_ratio_closed_form(r1: f64, eta: f64, mu_norm: f64, sigma: f64, t: u32) -> f64 {
    r1 * conj_square_growth(eta, mu_norm, sigma).powf(f64::from(t))
}

/// Iterations after which conj+square is guaranteed ε-optimal:
/// `ceil(log(|mu|^2 / (eps r1^2)) / (2 log g))`, floored at zero.
pub fn epsilon_iteration_bound(eps: f64, r1: f64, eta: f64, mu_norm: f64, sigma: f64) -> u64 {
    let target = (mu_norm * mu_norm / (eps * r1 * r1)).ln();
    if target <= 0.0 {
        return 0;
    }
    let bound = target / (2.0 * conj_square_growth(eta, mu_norm, sigma).ln());
    let nearest = bound.round();
    // exact powers of the growth factor should not be pushed up by rounding
    if (bound - nearest).abs() <= 1e-9 * nearest.max(1.0) {
        nearest as u64
    } else {
        bound.ceil() as u64
    }
}

/// Noiseless population run for a tail-bounded loss with `mu = mu_norm e_1`.
pub fn noiseless_population(
    loss: SelfTrainingLoss,
    a1: f64,
    b1: f64,
    eta: f64,
    mu_norm: f64,
    horizon: usize,
) -> Result<Trajectory> {
    let dim = if b1 > 0.0 { 2 } else { 1 };
    let model = GaussianModel::axis_aligned(dim, mu_norm, 0.0)?;
    let mut w_init = vec![a1 / mu_norm];
    if dim == 2 {
        w_init.push(b1);
    }
    run_population(&ExperimentConfig {
        model,
        loss,
        eta,
        mode: Mode::Population,
        stream: SampleStream::Gaussian,
        batch_size: 1,
        horizon,
        seed: 0,
        w_init,
    })
}
