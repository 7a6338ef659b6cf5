//! Numerical certificates for the tail and rate statements about the
//! self-training dynamics.
//!
//! Everything here is a finite check: tail bounds are verified on a dense grid
//! and rate bounds on simulated trajectories, each with an explicit constant so
//! that a failure points at a concrete grid point or iteration.

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::dynamics::noiseless_population;
use crate::losses::SelfTrainingLoss;
use crate::{Error, Result};

/// Default grid spacing for tail-bound certificates.
pub const DEFAULT_CLUB_STEP: f64 = 1e-3;

/// Slack allowed below zero in the difference `-psi'(a) - exp(-L a)`.
pub const CLUB_ABS_TOLERANCE: f64 = 1e-12;

/// Slack allowed below zero in `log(-psi'(a)) + L a`.
pub const CLUB_LOG_TOLERANCE: f64 = 1e-9;

/// Largest `a` worth checking: beyond `700 / L` the bound `exp(-L a)` is
/// below the smallest normal double.
pub fn club_cap(l: f64) -> f64 {
    (700.0 / l).min(1000.0)
}

/// Flat key/value view used for text and CSV output.
pub trait Records {
    fn records(&self) -> Vec<(&'static str, String)>;

    /// One `key = value` line per field.
    fn to_key_values(&self) -> String {
        self.records().iter().map(|(k, v)| format!("{k} = {v}\n")).collect()
    }

    fn csv_header(&self) -> String {
        self.records().iter().map(|(k, _)| *k).collect::<Vec<_>>().join(",")
    }

    fn csv_row(&self) -> String {
        self.records()
            .iter()
            .map(|(_, v)| v.as_str())
            .collect::<Vec<_>>()
            .join(",")
    }
}

fn opt<T: ToString>(v: Option<T>) -> String {
    v.map(|v| v.to_string()).unwrap_or_else(|| "none".into())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClubCertificate {
    pub loss: SelfTrainingLoss,
    pub l: f64,
    pub a_min: f64,
    /// Upper end of the grid after the underflow cap.
    pub a_max: f64,
    pub step: f64,
    pub passed: bool,
    /// Smallest `-psi'(a) - exp(-L a)` on the grid; negative means violated.
    pub max_violation: f64,
    /// Where `max_violation` was attained.
    pub worst_a: f64,
    /// Smallest `log(-psi'(a)) + L a`, sensitive deep in the tail.
    pub min_log_ratio: f64,
    pub evenness_passed: bool,
}

impl Records for ClubCertificate {
    fn records(&self) -> Vec<(&'static str, String)> {
        vec![
            ("loss", self.loss.to_string()),
            ("L", self.l.to_string()),
            ("a_min", self.a_min.to_string()),
            ("a_max", self.a_max.to_string()),
            ("step", self.step.to_string()),
            ("passed", self.passed.to_string()),
            ("max_violation", format!("{:e}", self.max_violation)),
            ("worst_a", self.worst_a.to_string()),
            ("min_log_ratio", format!("{:e}", self.min_log_ratio)),
            ("evenness_passed", self.evenness_passed.to_string()),
        ]
    }
}

/// Checks that `psi` is even on `[-a_max, a_max]` and that
/// `-psi'(a) >= exp(-L a)` on the grid `a_min, a_min + step, ...`.
///
/// At `a = 0` the right-hand derivative is used, since the hard losses set
/// `psi'(0) = 0`.
pub fn verify_club(loss: &SelfTrainingLoss, l: f64, a_min: f64, a_max: f64, step: f64) -> Result<ClubCertificate> {
    if !(l > 0.0 && l.is_finite()) {
        return Err(Error::invalid("L", "must be positive"));
    }
    if a_min.is_nan() || a_min < 0.0 {
        return Err(Error::invalid("a_min", "must be non-negative"));
    }
    if a_max.is_nan() || a_max <= a_min {
        return Err(Error::invalid("a_max", "must exceed a_min"));
    }
    if step.is_nan() || step <= 0.0 {
        return Err(Error::invalid("step", "must be positive"));
    }
    let a_max = a_max.min(club_cap(l)).max(a_min);

    let n_even = (a_max / step).floor() as usize;
    let evenness_passed = (0..=n_even).all(|k| {
        let a = k as f64 * step;
        let (p, q) = (loss.psi(a), loss.psi(-a));
        (p - q).abs() <= 1e-13 * p.abs().max(1.0)
    });

    let n_tail = ((a_max - a_min) / step).floor() as usize;
    let mut max_violation = f64::INFINITY;
    let mut worst_a = a_min;
    let mut min_log_ratio = f64::INFINITY;
    for k in 0..=n_tail {
        let a = a_min + k as f64 * step;
        let slope = -loss.dpsi_right(a);
        let diff = slope - (-l * a).exp();
        if diff < max_violation {
            max_violation = diff;
            worst_a = a;
        }
        let log_ratio = if slope > 0.0 {
            slope.ln() + l * a
        } else {
            f64::NEG_INFINITY
        };
        min_log_ratio = min_log_ratio.min(log_ratio);
    }
    let passed = evenness_passed && max_violation >= -CLUB_ABS_TOLERANCE && min_log_ratio >= -CLUB_LOG_TOLERANCE;
    Ok(ClubCertificate {
        loss: *loss,
        l,
        a_min,
        a_max,
        step,
        passed,
        max_violation,
        worst_a,
        min_log_ratio,
        evenness_passed,
    })
}

/// Certificate for the loss's own `(L, a_min)` on the default grid, or `None`
/// for losses without a tail bound.
pub fn verify_club_default(loss: &SelfTrainingLoss) -> Option<ClubCertificate> {
    let club = loss.club()?;
    verify_club(loss, club.l, club.a_min, club_cap(club.l), DEFAULT_CLUB_STEP).ok()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TailRateCurve {
    pub loss: SelfTrainingLoss,
    /// `(z, L(z))` with `L(z) = -log(-psi'(z)) / z`.
    pub points: Vec<(f64, f64)>,
    /// Grid points where `z <= 0` or `-psi'(z) <= 0`.
    pub skipped: Vec<f64>,
}

/// Pointwise tail exponent: the `L` for which `-psi'(z) = exp(-L z)`.
pub fn tail_rate(loss: &SelfTrainingLoss, z: f64) -> Option<f64> {
    let slope = -loss.dpsi(z);
    (z > 0.0 && slope > 0.0).then(|| -slope.ln() / z)
}

pub fn tail_rate_curve(loss: &SelfTrainingLoss, z_grid: &[f64]) -> TailRateCurve {
    let mut points = Vec::with_capacity(z_grid.len());
    let mut skipped = Vec::new();
    for &z in z_grid {
        match tail_rate(loss, z) {
            Some(l) => points.push((z, l)),
            None => skipped.push(z),
        }
    }
    TailRateCurve {
        loss: *loss,
        points,
        skipped,
    }
}

/// Smallest grid point from which `lower`'s tail exponent stays at or below
/// `upper`'s for the rest of the grid.
pub fn tail_crossover(lower: &SelfTrainingLoss, upper: &SelfTrainingLoss, z_grid: &[f64]) -> Option<f64> {
    let below = |z: f64| match (tail_rate(lower, z), tail_rate(upper, z)) {
        (Some(a), Some(b)) => a <= b,
        _ => false,
    };
    let last_bad = z_grid.iter().rposition(|&z| !below(z));
    match last_bad {
        None => z_grid.first().copied(),
        Some(i) => z_grid.get(i + 1).copied(),
    }
}

/// Smaller solution of `nu = exp(L nu)`, which exists iff `L < 1/e`.
pub fn burn_in_fixed_point(l: f64) -> Option<f64> {
    if l >= (-1.0f64).exp() {
        return None;
    }
    let g = |nu: f64| (l * nu).exp() - nu;
    let (mut lo, mut hi) = (0.0, 1.0 / l);
    while hi - lo > 1e-12 {
        let mid = 0.5 * (lo + hi);
        if g(mid) > 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Some(0.5 * (lo + hi))
}

/// Burn-in `nu*^2 / c`, zero when no fixed point exists or `c = 0`.
pub fn burn_in(c: f64, l: f64) -> f64 {
    match burn_in_fixed_point(l) {
        Some(nu) if c > 0.0 => nu * nu / c,
        _ => 0.0,
    }
}

/// `(1 / 2L) log(c (t - 1))`, minus infinity when the argument is zero.
pub fn log_lower_bound(c: f64, l: f64, t: usize) -> f64 {
    let arg = c * (t as f64 - 1.0);
    if arg <= 0.0 {
        f64::NEG_INFINITY
    } else {
        arg.ln() / (2.0 * l)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RecursionReport {
    pub c: f64,
    pub l: f64,
    pub r1: f64,
    pub horizon: usize,
    pub nu_star: Option<f64>,
    pub tau_star: f64,
    /// `ceil(tau_star)`, the index shift applied to `r`.
    pub tau_offset: usize,
    /// How `tau_star` was obtained.
    pub tau_reason: String,
    pub bound_holds: bool,
    pub first_violation_t: Option<usize>,
    /// Smallest `r_{t - offset} - bound(t)` over the checked range.
    pub min_slack: f64,
    /// `exp(L r_t) r_t >= c (t - 1)` at every step.
    pub proof_chain_holds: bool,
}

impl Records for RecursionReport {
    fn records(&self) -> Vec<(&'static str, String)> {
        vec![
            ("c", self.c.to_string()),
            ("L", self.l.to_string()),
            ("r1", self.r1.to_string()),
            ("T", self.horizon.to_string()),
            ("nu_star", opt(self.nu_star)),
            ("tau_star", self.tau_star.to_string()),
            ("tau_offset", self.tau_offset.to_string()),
            ("tau_reason", self.tau_reason.clone()),
            ("bound_holds", self.bound_holds.to_string()),
            ("first_violation_t", opt(self.first_violation_t)),
            ("min_slack", self.min_slack.to_string()),
            ("proof_chain_holds", self.proof_chain_holds.to_string()),
        ]
    }
}

struct BoundCheck {
    holds: bool,
    first_violation: Option<usize>,
    min_slack: f64,
    min_slack_t: Option<usize>,
}

/// Checks `r_{t - offset} >= (1/2L) log(c (t-1))` for every integer
/// `t > tau + 1` up to `r.len()`. `r[0]` is `r_1`.
fn check_log_bound(r: &[f64], c: f64, l: f64, tau: f64, offset: usize) -> BoundCheck {
    let start = (tau.floor() as usize + 2).max(offset + 1);
    let mut out = BoundCheck {
        holds: true,
        first_violation: None,
        min_slack: f64::INFINITY,
        min_slack_t: None,
    };
    for t in start..=r.len() {
        let slack = r[t - offset - 1] - log_lower_bound(c, l, t);
        if slack < out.min_slack {
            out.min_slack = slack;
            out.min_slack_t = Some(t);
        }
        if slack < 0.0 && out.holds {
            out.holds = false;
            out.first_violation = Some(t);
        }
    }
    out
}

/// Simulates `r_{t+1} = r_t + c exp(-L r_t)` (or, with `equality = false`,
/// the faster member `r_t + 2 c exp(-L r_t)` of the same inequality family)
/// for `t = 1..T` and checks the logarithmic lower bound after the burn-in.
pub fn lemma_recursion_run(
    r1: f64,
    c: f64,
    l: f64,
    horizon: usize,
    equality: bool,
) -> Result<(Vec<f64>, RecursionReport)> {
    if !(r1 > 0.0 && r1.is_finite()) {
        return Err(Error::invalid("r1", "must be positive"));
    }
    if !(c >= 0.0 && c.is_finite()) {
        return Err(Error::invalid("c", "must be non-negative"));
    }
    if !(l > 0.0 && l.is_finite()) {
        return Err(Error::invalid("L", "must be positive"));
    }
    if horizon == 0 {
        return Err(Error::invalid("T", "must be at least 1"));
    }
    let gain = if equality { c } else { 2.0 * c };
    let mut r = Vec::with_capacity(horizon);
    r.push(r1);
    for _ in 1..horizon {
        let prev = *r.last().unwrap();
        r.push(prev + gain * (-l * prev).exp());
    }

    let nu_star = burn_in_fixed_point(l);
    let tau_star = burn_in(c, l);
    let tau_offset = tau_star.ceil() as usize;
    let tau_reason = match nu_star {
        None => "no fixed point",
        Some(_) if c == 0.0 => "c = 0",
        Some(_) => "smaller fixed point",
    }
    .to_string();
    let check = check_log_bound(&r, c, l, tau_star, tau_offset);

    let proof_chain_holds = r.iter().enumerate().all(|(i, &rt)| {
        let t = i + 1;
        let rhs = c * (t as f64 - 1.0);
        rhs <= 0.0 || l * rt + rt.ln() >= rhs.ln() - 1e-12
    });

    let report = RecursionReport {
        c,
        l,
        r1,
        horizon,
        nu_star,
        tau_star,
        tau_offset,
        tau_reason,
        bound_holds: check.holds,
        first_violation_t: check.first_violation,
        min_slack: check.min_slack,
        proof_chain_holds,
    };
    Ok((r, report))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RateReport {
    pub loss: SelfTrainingLoss,
    pub a1: f64,
    pub b1: f64,
    pub eta: f64,
    pub mu_norm: f64,
    pub horizon: usize,
    pub l: f64,
    pub tau_star: f64,
    pub holds: bool,
    pub first_violation_t: Option<usize>,
    pub min_slack: f64,
    pub min_slack_t: Option<usize>,
    /// `a_t` and `r_t` never decrease.
    pub monotone: bool,
    pub final_r: f64,
}

impl Records for RateReport {
    fn records(&self) -> Vec<(&'static str, String)> {
        vec![
            ("loss", self.loss.to_string()),
            ("a1", self.a1.to_string()),
            ("b1", self.b1.to_string()),
            ("eta", self.eta.to_string()),
            ("mu_norm", self.mu_norm.to_string()),
            ("T", self.horizon.to_string()),
            ("L", self.l.to_string()),
            ("tau_star", self.tau_star.to_string()),
            ("holds", self.holds.to_string()),
            ("first_violation_t", opt(self.first_violation_t)),
            ("min_slack", self.min_slack.to_string()),
            ("min_slack_t", opt(self.min_slack_t)),
            ("monotone", self.monotone.to_string()),
            ("final_r", self.final_r.to_string()),
        ]
    }
}

/// Runs the noiseless population dynamic from `(a1, b1)` and checks
/// `r_t >= (1 / (2 L b1)) log((eta |mu|^2 / b1) (t - 1))` for `t = 2..=T`
/// (shifted by the burn-in when one exists).
pub fn prop3_rate_check(
    loss: &SelfTrainingLoss,
    a1: f64,
    b1: f64,
    eta: f64,
    mu_norm: f64,
    horizon: usize,
) -> Result<RateReport> {
    let club = loss
        .club()
        .ok_or_else(|| Error::invalid("loss", format!("{} has no exponential tail bound", loss.name())))?;
    if a1 < club.a_min {
        return Err(Error::invalid(
            "a1",
            format!("a1 = {a1} is below a_min = {} for {}", club.a_min, loss.name()),
        ));
    }
    if b1.is_nan() || b1 <= 0.0 {
        return Err(Error::invalid("b1", "must be positive"));
    }
    if horizon < 2 {
        return Err(Error::invalid("T", "must be at least 2"));
    }
    let tr = noiseless_population(*loss, a1, b1, eta, mu_norm, horizon - 1)?;
    let r: Vec<f64> = tr.points.iter().map(|p| p.r).collect();
    let monotone = tr.points.windows(2).all(|w| w[1].a >= w[0].a && w[1].r >= w[0].r);

    let exponent = club.l * b1;
    let c = eta * mu_norm * mu_norm / b1;
    let tau_star = burn_in(c, exponent);
    let check = check_log_bound(&r, c, exponent, tau_star, tau_star.ceil() as usize);

    Ok(RateReport {
        loss: *loss,
        a1,
        b1,
        eta,
        mu_norm,
        horizon,
        l: club.l,
        tau_star,
        holds: check.holds,
        first_violation_t: check.first_violation,
        min_slack: check.min_slack,
        min_slack_t: check.min_slack_t,
        monotone,
        final_r: *r.last().unwrap(),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SteinReport {
    /// Monte Carlo mean of `Z psi'(m + s Z)`.
    pub lhs: f64,
    /// `s` times the Monte Carlo mean of `psi''(m + s Z)`.
    pub rhs: f64,
    pub stderr_lhs: f64,
    pub stderr_rhs: f64,
    pub passed: bool,
}

impl Records for SteinReport {
    fn records(&self) -> Vec<(&'static str, String)> {
        vec![
            ("lhs", self.lhs.to_string()),
            ("rhs", self.rhs.to_string()),
            ("stderr_lhs", self.stderr_lhs.to_string()),
            ("stderr_rhs", self.stderr_rhs.to_string()),
            ("passed", self.passed.to_string()),
        ]
    }
}

/// Running mean and standard error (Welford).
#[derive(Default)]
struct Moments {
    n: f64,
    mean: f64,
    m2: f64,
}

impl Moments {
    fn push(&mut self, x: f64) {
        self.n += 1.0;
        let d = x - self.mean;
        self.mean += d / self.n;
        self.m2 += d * (x - self.mean);
    }

    fn stderr(&self) -> f64 {
        if self.n < 2.0 {
            return 0.0;
        }
        (self.m2 / (self.n - 1.0) / self.n).sqrt()
    }
}

/// Monte Carlo check of `E[Z psi'(m + sZ)] = s E[psi''(m + sZ)]` for
/// `Z ~ N(0, 1)`, drawing from the stream seeded by `seed`.
pub fn stein_identity_check(loss: &SelfTrainingLoss, m: f64, s: f64, n: usize, seed: u64) -> Result<SteinReport> {
    if !loss.smooth_second_derivative() {
        return Err(Error::Unsupported(format!(
            "distributional ψ″: {} has a jump in psi' at 0",
            loss.name()
        )));
    }
    if s.is_nan() || s <= 0.0 {
        return Err(Error::invalid("s", "must be positive"));
    }
    if n < 2 {
        return Err(Error::invalid("n", "need at least two samples"));
    }
    let mut rng = crate::rng::stream(seed);
    let mut lhs = Moments::default();
    let mut rhs = Moments::default();
    for _ in 0..n {
        let z: f64 = rng.sample(StandardNormal);
        let u = m + s * z;
        lhs.push(z * loss.dpsi(u));
        rhs.push(s * loss.ddpsi(u));
    }
    let (se_l, se_r) = (lhs.stderr(), rhs.stderr());
    Ok(SteinReport {
        lhs: lhs.mean,
        rhs: rhs.mean,
        stderr_lhs: se_l,
        stderr_rhs: se_r,
        passed: (lhs.mean - rhs.mean).abs() <= 3.0 * (se_l + se_r),
    })
}
