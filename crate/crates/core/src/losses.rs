//! Hard and conjugate pseudo-label self-training losses.
//!
//! For a linear predictor every loss reduces to a scalar function of the
//! margin `u = w^T x`, so `loss(w; x) = psi(u)` and the gradient is
//! `psi'(u) x`. Six closed forms are provided:
//!
//! | rule | family    | pseudo-label | psi(u)                        |
//! |------|-----------|--------------|-------------------------------|
//! | hard | square    | sign(u)      | (sign(u) - u)^2 / 2           |
//! | conj | square    | u            | -u^2 / 2                      |
//! | hard | logistic  | sign(u)      | log cosh(u) - abs(u)          |
//! | conj | logistic  | tanh(u)      | log cosh(u) - u tanh(u)       |
//! | hard | exp       | sign(u)      | exp(-abs(u))                  |
//! | conj | exp       | tanh(u)      | sech(u)                       |
//!
//! `sign(0) = 0` throughout, so the hard losses have `psi'(0) = 0`.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::model::dot;
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LabelRule {
    Hard,
    Conj,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LossFamily {
    Square,
    Logistic,
    Exp,
}

impl LabelRule {
    pub const ALL: [LabelRule; 2] = [LabelRule::Hard, LabelRule::Conj];

    pub fn as_str(self) -> &'static str {
        match self {
            LabelRule::Hard => "hard",
            LabelRule::Conj => "conj",
        }
    }
}

impl LossFamily {
    pub const ALL: [LossFamily; 3] = [LossFamily::Square, LossFamily::Logistic, LossFamily::Exp];

    pub fn as_str(self) -> &'static str {
        match self {
            LossFamily::Square => "square",
            LossFamily::Logistic => "logistic",
            LossFamily::Exp => "exp",
        }
    }
}

impl FromStr for LabelRule {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "hard" => Ok(LabelRule::Hard),
            "conj" | "conjugate" => Ok(LabelRule::Conj),
            other => Err(Error::invalid(
                "loss.rule",
                format!("unknown label rule `{other}` (hard|conj)"),
            )),
        }
    }
}

impl FromStr for LossFamily {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "square" => Ok(LossFamily::Square),
            "logistic" => Ok(LossFamily::Logistic),
            "exp" | "exponential" => Ok(LossFamily::Exp),
            other => Err(Error::invalid(
                "loss.family",
                format!("unknown loss family `{other}` (square|logistic|exp)"),
            )),
        }
    }
}

/// Parameters `(L, a_min)` of the exponential tail bound
/// `-psi'(a) >= exp(-L a)` for `a >= a_min`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClubParams {
    pub l: f64,
    pub a_min: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct SelfTrainingLoss {
    pub rule: LabelRule,
    pub family: LossFamily,
}

pub const fn make_loss(rule: LabelRule, family: LossFamily) -> SelfTrainingLoss {
    SelfTrainingLoss { rule, family }
}

fn sign(u: f64) -> f64 {
    if u > 0.0 {
        1.0
    } else if u < 0.0 {
        -1.0
    } else {
        0.0
    }
}

/// `log cosh(u)` without overflow.
pub fn log_cosh(u: f64) -> f64 {
    let x = u.abs();
    x - std::f64::consts::LN_2 + (-2.0 * x).exp().ln_1p()
}

/// `sech(u)` without overflow.
pub fn sech(u: f64) -> f64 {
    let x = u.abs();
    2.0 * (-x).exp() / (1.0 + (-2.0 * x).exp())
}

/// `1 - tanh(|u|)`, accurate where `tanh` rounds to one.
fn one_minus_tanh_abs(u: f64) -> f64 {
    let e = (-2.0 * u.abs()).exp();
    2.0 * e / (1.0 + e)
}

impl SelfTrainingLoss {
    pub const ALL: [SelfTrainingLoss; 6] = [
        make_loss(LabelRule::Hard, LossFamily::Square),
        make_loss(LabelRule::Conj, LossFamily::Square),
        make_loss(LabelRule::Hard, LossFamily::Logistic),
        make_loss(LabelRule::Conj, LossFamily::Logistic),
        make_loss(LabelRule::Hard, LossFamily::Exp),
        make_loss(LabelRule::Conj, LossFamily::Exp),
    ];

    /// The four losses with an exponential tail bound, in plotting order.
    pub const CLUB: [SelfTrainingLoss; 4] = [
        make_loss(LabelRule::Hard, LossFamily::Exp),
        make_loss(LabelRule::Conj, LossFamily::Exp),
        make_loss(LabelRule::Hard, LossFamily::Logistic),
        make_loss(LabelRule::Conj, LossFamily::Logistic),
    ];

    /// Short identifier such as `conj+square`.
    pub fn name(&self) -> String {
        format!("{}+{}", self.rule.as_str(), self.family.as_str())
    }

    pub fn psi(&self, u: f64) -> f64 {
        use LabelRule::*;
        use LossFamily::*;
        match (self.rule, self.family) {
            (Hard, Square) => 0.5 * (sign(u) - u).powi(2),
            (Conj, Square) => -0.5 * u * u,
            // log cosh(u) - |u| = log1p(exp(-2|u|)) - log 2
            (Hard, Logistic) => (-2.0 * u.abs()).exp().ln_1p() - std::f64::consts::LN_2,
            (Conj, Logistic) => log_cosh(u) - u * u.tanh(),
            (Hard, Exp) => (-u.abs()).exp(),
            (Conj, Exp) => sech(u),
        }
    }

    pub fn dpsi(&self, u: f64) -> f64 {
        use LabelRule::*;
        use LossFamily::*;
        match (self.rule, self.family) {
            (Hard, Square) => u - sign(u),
            (Conj, Square) => -u,
            // tanh(u) - sign(u)
            (Hard, Logistic) => -sign(u) * one_minus_tanh_abs(u),
            (Conj, Logistic) => -u * sech(u).powi(2),
            (Hard, Exp) => -sign(u) * (-u.abs()).exp(),
            (Conj, Exp) => -u.tanh() * sech(u),
        }
    }

    /// Right-hand limit of `psi'` at `u`. Differs from [`Self::dpsi`] only for
    /// the hard losses at `u = 0`, where `psi'` jumps.
    pub fn dpsi_right(&self, u: f64) -> f64 {
        if u == 0.0 && self.rule == LabelRule::Hard {
            self.dpsi(f64::MIN_POSITIVE)
        } else {
            self.dpsi(u)
        }
    }

    /// Smooth part of `psi''`. For the hard losses the point mass at the
    /// origin is not represented; see [`Self::smooth_second_derivative`].
    pub fn ddpsi(&self, u: f64) -> f64 {
        use LabelRule::*;
        use LossFamily::*;
        match (self.rule, self.family) {
            (Hard, Square) => 1.0,
            (Conj, Square) => -1.0,
            (Hard, Logistic) => sech(u).powi(2),
            (Conj, Logistic) => {
                let s2 = sech(u).powi(2);
                -s2 + 2.0 * u * u.tanh() * s2
            }
            (Hard, Exp) => (-u.abs()).exp(),
            (Conj, Exp) => {
                let s = sech(u);
                let t = u.tanh();
                -s * s * s + t * t * s
            }
        }
    }

    /// True iff `psi'` is continuous on the whole real line.
    pub fn smooth_second_derivative(&self) -> bool {
        self.rule == LabelRule::Conj
    }

    pub fn club(&self) -> Option<ClubParams> {
        use LabelRule::*;
        use LossFamily::*;
        let (l, a_min) = match (self.rule, self.family) {
            (_, Square) => return None,
            (Hard, Exp) => (1.0, 0.0),
            (Hard, Logistic) => (2.0, 0.0),
            (Conj, Exp) => (1.0, 0.75),
            (Conj, Logistic) => (2.0, 0.5),
        };
        Some(ClubParams { l, a_min })
    }

    pub fn pseudo_label(&self, margin: f64) -> f64 {
        match (self.rule, self.family) {
            (LabelRule::Hard, _) => sign(margin),
            (LabelRule::Conj, LossFamily::Square) => margin,
            (LabelRule::Conj, _) => margin.tanh(),
        }
    }

    /// `grad_w psi(w^T x) = psi'(w^T x) x`.
    pub fn gradient(&self, w: &[f64], x: &[f64]) -> Result<Vec<f64>> {
        if w.len() != x.len() {
            return Err(Error::DimensionMismatch {
                expected: w.len(),
                found: x.len(),
            });
        }
        let g = self.dpsi(dot(w, x));
        Ok(x.iter().map(|xi| g * xi).collect())
    }
}

impl fmt::Display for SelfTrainingLoss {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{}", self.rule.as_str(), self.family.as_str())
    }
}

/// Parses `RULE:FAMILY` (also accepts `RULE+FAMILY`).
impl FromStr for SelfTrainingLoss {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let (rule, family) = s
            .split_once([':', '+'])
            .ok_or_else(|| Error::invalid("loss", format!("expected RULE:FAMILY, got `{s}`")))?;
        Ok(make_loss(rule.parse()?, family.parse()?))
    }
}

pub fn pseudo_label(loss: &SelfTrainingLoss, margin: f64) -> f64 {
    loss.pseudo_label(margin)
}

pub fn self_loss_gradient(loss: &SelfTrainingLoss, w: &[f64], x: &[f64]) -> Result<Vec<f64>> {
    loss.gradient(w, x)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use LabelRule::*;
    use LossFamily::*;

    fn grid(lo: f64, hi: f64, step: f64) -> impl Iterator<Item = f64> {
        let n = ((hi - lo) / step).round() as i64;
        (0..=n).map(move |i| lo + i as f64 * step)
    }

    #[test]
    fn closed_form_values() {
        assert_eq!(make_loss(Conj, Square).psi(2.0), -2.0);
        let he = make_loss(Hard, Exp);
        assert_eq!(he.psi(0.0), 1.0);
        assert_eq!(he.psi(3.0), (-3.0f64).exp());
        assert_eq!(he.psi(-3.0), (-3.0f64).exp());

        let cl = make_loss(Conj, Logistic);
        assert_eq!(cl.psi(0.0), 0.0);
        // -u sech^2(u) at u = 1, oracle from std cosh
        let oracle = -1.0 / 1.0f64.cosh().powi(2);
        assert_abs_diff_eq!(oracle, -0.41997, epsilon = 1e-5);
        assert_abs_diff_eq!(cl.dpsi(1.0), oracle, epsilon = 1e-15);
    }

    #[test]
    fn table_forms_against_naive_formulas() {
        for u in grid(-6.0, 6.0, 0.37) {
            let lc = u.cosh().ln();
            let s = u.signum() * f64::from(u != 0.0);
            assert_abs_diff_eq!(make_loss(Hard, Logistic).psi(u), lc - u.abs(), epsilon = 1e-13);
            assert_abs_diff_eq!(make_loss(Conj, Logistic).psi(u), lc - u.tanh() * u, epsilon = 1e-13);
            assert_abs_diff_eq!(make_loss(Conj, Exp).psi(u), 1.0 / u.cosh(), epsilon = 1e-15);
            assert_abs_diff_eq!(make_loss(Hard, Logistic).dpsi(u), u.tanh() - s, epsilon = 1e-15);
            assert_abs_diff_eq!(make_loss(Hard, Square).psi(u), 0.5 * (s - u).powi(2), epsilon = 1e-15);
        }
    }

    #[test]
    fn hard_square_is_shifted_parabola_off_origin() {
        let l = make_loss(Hard, Square);
        for u in grid(-5.0, 5.0, 0.01).filter(|u| *u != 0.0) {
            assert_abs_diff_eq!(l.psi(u), 0.5 * (1.0 - u.abs()).powi(2), epsilon = 1e-14);
        }
        assert_eq!(l.dpsi(0.0), 0.0);
    }

    #[test]
    fn evenness_and_oddness() {
        for loss in SelfTrainingLoss::ALL {
            for u in grid(0.0, 30.0, 0.01) {
                assert!((loss.psi(u) - loss.psi(-u)).abs() <= 1e-13, "{} at {u}", loss.name());
                assert!((loss.dpsi(u) + loss.dpsi(-u)).abs() <= 1e-13, "{} at {u}", loss.name());
            }
            assert_eq!(loss.dpsi(0.0), 0.0);
        }
    }

    #[test]
    fn derivatives_match_finite_differences() {
        let h = 1e-5;
        for loss in SelfTrainingLoss::ALL {
            for u in grid(-30.0, 30.0, 0.01).filter(|u| u.abs() > 1e-3) {
                let fd1 = (loss.psi(u + h) - loss.psi(u - h)) / (2.0 * h);
                let d1 = loss.dpsi(u);
                assert!(
                    (d1 - fd1).abs() <= 1e-6 * d1.abs().max(1.0),
                    "{} psi' at {u}: {d1} vs {fd1}",
                    loss.name()
                );
                let fd2 = (loss.dpsi(u + h) - loss.dpsi(u - h)) / (2.0 * h);
                let d2 = loss.ddpsi(u);
                assert!(
                    (d2 - fd2).abs() <= 1e-6 * d2.abs().max(1.0),
                    "{} psi'' at {u}: {d2} vs {fd2}",
                    loss.name()
                );
            }
        }
    }

    #[test]
    fn finite_on_wide_range() {
        for loss in SelfTrainingLoss::ALL {
            for u in grid(-700.0, 700.0, 0.5) {
                assert!(loss.psi(u).is_finite() && loss.dpsi(u).is_finite() && loss.ddpsi(u).is_finite());
            }
        }
    }

    #[test]
    fn bounded_slope_for_tail_losses() {
        for loss in SelfTrainingLoss::CLUB {
            for u in grid(-50.0, 50.0, 0.003) {
                assert!(loss.dpsi(u).abs() <= 1.0, "{} at {u}", loss.name());
            }
        }
    }

    #[test]
    fn club_parameters_and_smoothness() {
        assert_eq!(make_loss(Hard, Exp).club(), Some(ClubParams { l: 1.0, a_min: 0.0 }));
        assert_eq!(
            make_loss(Hard, Logistic).club(),
            Some(ClubParams { l: 2.0, a_min: 0.0 })
        );
        assert_eq!(make_loss(Conj, Exp).club(), Some(ClubParams { l: 1.0, a_min: 0.75 }));
        assert_eq!(
            make_loss(Conj, Logistic).club(),
            Some(ClubParams { l: 2.0, a_min: 0.5 })
        );
        assert!(make_loss(Hard, Square).club().is_none());
        assert!(make_loss(Conj, Square).club().is_none());
        for loss in SelfTrainingLoss::ALL {
            assert_eq!(loss.smooth_second_derivative(), loss.rule == Conj);
        }
    }

    #[test]
    fn right_derivative_at_origin() {
        assert_eq!(make_loss(Hard, Exp).dpsi_right(0.0), -1.0);
        assert_eq!(make_loss(Hard, Logistic).dpsi_right(0.0), -1.0);
        assert_eq!(make_loss(Conj, Exp).dpsi_right(0.0), 0.0);
    }

    #[test]
    fn pseudo_labels() {
        for family in LossFamily::ALL {
            assert_eq!(make_loss(Hard, family).pseudo_label(-3.0), -1.0);
            assert_eq!(make_loss(Hard, family).pseudo_label(0.0), 0.0);
        }
        assert_eq!(make_loss(Conj, Square).pseudo_label(0.7), 0.7);
        assert_eq!(make_loss(Conj, Exp).pseudo_label(0.0), 0.0);
        assert_eq!(make_loss(Conj, Logistic).pseudo_label(0.5), 0.5f64.tanh());
    }

    #[test]
    fn gradients() {
        let x = [2.0, -1.0];
        // w^T x = 0.5
        let w = [0.5, 0.5];
        let g = make_loss(Hard, Square).gradient(&w, &x).unwrap();
        assert_abs_diff_eq!(g[0], -0.5 * x[0], epsilon = 1e-15);
        assert_abs_diff_eq!(g[1], -0.5 * x[1], epsilon = 1e-15);

        for loss in SelfTrainingLoss::ALL {
            assert_eq!(loss.gradient(&w, &[0.0, 0.0]).unwrap(), vec![0.0, 0.0]);
        }

        // w^T x = 1
        let w = [1.0, 1.0];
        let c = -(1.0f64.tanh()) / 1.0f64.cosh();
        assert_abs_diff_eq!(c, -0.49355, epsilon = 1e-5);
        let g = make_loss(Conj, Exp).gradient(&w, &x).unwrap();
        assert_abs_diff_eq!(g[0], c * x[0], epsilon = 1e-15);
        assert_abs_diff_eq!(g[1], c * x[1], epsilon = 1e-15);

        assert!(matches!(
            make_loss(Conj, Exp).gradient(&w, &[1.0]),
            Err(Error::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn parse_and_display() {
        let l: SelfTrainingLoss = "conj:square".parse().unwrap();
        assert_eq!(l, make_loss(Conj, Square));
        assert_eq!(l.to_string(), "conj:square");
        assert_eq!("hard+exp".parse::<SelfTrainingLoss>().unwrap(), make_loss(Hard, Exp));
        assert!("soft:exp".parse::<SelfTrainingLoss>().is_err());
        assert!("conj".parse::<SelfTrainingLoss>().is_err());
    }
}
