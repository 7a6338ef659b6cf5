//! Two-class Gaussian data model and the metrics used to score a linear
//! predictor against it.
//!
//! Samples are generated as `x = y (mu + sigma xi)` with `y` uniform on
//! `{-1, +1}` and `xi ~ N(0, I_d)`. The class mean `mu` does not have to be
//! axis aligned; every metric works through projections onto `mu`.

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::{Error, Result};

pub(crate) fn dot(u: &[f64], v: &[f64]) -> f64 {
    u.iter().zip(v).map(|(a, b)| a * b).sum()
}

pub(crate) fn norm(v: &[f64]) -> f64 {
    dot(v, v).sqrt()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GaussianModel {
    mu: Vec<f64>,
    sigma: f64,
}

impl GaussianModel {
    pub fn new(mu: Vec<f64>, sigma: f64) -> Result<Self> {
        if mu.is_empty() {
            return Err(Error::invalid("mu", "dimension must be at least 1"));
        }
        if mu.iter().any(|v| !v.is_finite()) {
            return Err(Error::invalid("mu", "entries must be finite"));
        }
        if norm(&mu) <= 0.0 {
            return Err(Error::invalid("mu", "class mean must be non-zero"));
        }
        if !(sigma >= 0.0 && sigma.is_finite()) {
            return Err(Error::invalid("sigma", "noise scale must be finite and non-negative"));
        }
        Ok(Self { mu, sigma })
    }

    /// `mu = mu_norm * e_1` in dimension `dim`.
    pub fn axis_aligned(dim: usize, mu_norm: f64, sigma: f64) -> Result<Self> {
        if dim == 0 {
            return Err(Error::invalid("dim", "dimension must be at least 1"));
        }
        let mut mu = vec![0.0; dim];
        mu[0] = mu_norm;
        Self::new(mu, sigma)
    }

    pub fn mu(&self) -> &[f64] {
        &self.mu
    }

    pub fn sigma(&self) -> f64 {
        self.sigma
    }

    pub fn dim(&self) -> usize {
        self.mu.len()
    }

    pub fn mu_norm(&self) -> f64 {
        norm(&self.mu)
    }

    /// Smallest achievable expected 0-1 loss, attained by any `w` aligned with `mu`.
    pub fn best_error(&self) -> f64 {
        loss_from_alignment(self, 1.0)
    }

    fn check_dim(&self, len: usize) -> Result<()> {
        if len != self.dim() {
            return Err(Error::DimensionMismatch {
                expected: self.dim(),
                found: len,
            });
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Sample {
    pub x: Vec<f64>,
    pub y: i8,
}

/// Draws `n` labelled samples. Labels are fair coin flips; the noise vector is
/// drawn even when `sigma = 0` so that the stream layout does not depend on it.
pub fn sample_batch<R: Rng + ?Sized>(model: &GaussianModel, rng: &mut R, n: usize) -> Vec<Sample> {
    (0..n)
        .map(|_| {
            let y: i8 = if rng.random::<bool>() { 1 } else { -1 };
            let yf = f64::from(y);
            let x = model
                .mu
                .iter()
                .map(|m| {
                    let xi: f64 = rng.sample(StandardNormal);
                    yf * (m + model.sigma * xi)
                })
                .collect();
            Sample { x, y }
        })
        .collect()
}

/// Upper tail `P(Z > u)` of a standard normal.
pub fn gauss_upper_tail(u: f64) -> f64 {
    0.5 * libm::erfc(u / std::f64::consts::SQRT_2)
}

/// Expected 0-1 loss `P(y w^T x < 0)` of the classifier `sign(w^T x)`.
///
/// With `sigma = 0` the loss is the pointwise limit: 0 when `mu^T w > 0`,
/// 1 when `mu^T w < 0` and 1/2 on the decision boundary.
pub fn zero_one_loss(model: &GaussianModel, w: &[f64]) -> Result<f64> {
    model.check_dim(w.len())?;
    let w_norm = norm(w);
    if w_norm == 0.0 {
        return Err(Error::ZeroVector);
    }
    let proj = dot(&model.mu, w);
    if model.sigma == 0.0 {
        return Ok(noiseless_loss(proj));
    }
    Ok(gauss_upper_tail(proj / (model.sigma * w_norm)))
}

/// Expected 0-1 loss of any predictor whose cosine with `mu` is `cos`.
pub fn loss_from_alignment(model: &GaussianModel, cos: f64) -> f64 {
    if model.sigma == 0.0 {
        return noiseless_loss(cos);
    }
    gauss_upper_tail(model.mu_norm() * cos / model.sigma)
}

fn noiseless_loss(proj: f64) -> f64 {
    if proj > 0.0 {
        0.0
    } else if proj < 0.0 {
        1.0
    } else {
        0.5
    }
}

/// Split of a weight vector into its component along `mu` and the size of the
/// orthogonal remainder.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PredictorDecomposition {
    /// `<w, mu>`.
    pub a: f64,
    /// `<w, mu / |mu|>`.
    pub a_bar: f64,
    /// Norm of the component of `w` orthogonal to `mu`.
    pub b: f64,
    /// `a / b`, signed infinity when `b = 0`.
    pub r: f64,
    pub cos: f64,
}

impl PredictorDecomposition {
    /// Rebuilds the decomposition from `(a, b)` alone, as the population
    /// recursion does.
    pub fn from_components(a: f64, b: f64, mu_norm: f64) -> Self {
        let a_bar = a / mu_norm;
        let r = ratio(a, b);
        let w_norm = a_bar.hypot(b);
        let cos = if w_norm == 0.0 {
            0.0
        } else {
            (a_bar / w_norm).clamp(-1.0, 1.0)
        };
        Self { a, a_bar, b, r, cos }
    }

    pub fn weight_norm(&self) -> f64 {
        self.a_bar.hypot(self.b)
    }
}

fn ratio(a: f64, b: f64) -> f64 {
    if b > 0.0 {
        a / b
    } else if a > 0.0 {
        f64::INFINITY
    } else if a < 0.0 {
        f64::NEG_INFINITY
    } else {
        0.0
    }
}

/// Cosine with `mu` written through the ratio `r = a / b`:
/// `sign(r) / sqrt(1 + |mu|^2 / r^2)`.
pub fn cos_from_ratio(r: f64, mu_norm: f64) -> f64 {
    if r.is_infinite() {
        return r.signum();
    }
    if r == 0.0 {
        return 0.0;
    }
    r.signum() / (1.0 + (mu_norm / r).powi(2)).sqrt()
}

pub fn decompose(w: &[f64], model: &GaussianModel) -> Result<PredictorDecomposition> {
    model.check_dim(w.len())?;
    let w_norm = norm(w);
    if w_norm == 0.0 {
        return Err(Error::ZeroVector);
    }
    let mu = &model.mu;
    let mu_norm = model.mu_norm();
    let a = dot(w, mu);
    let coef = a / (mu_norm * mu_norm);
    let b = w
        .iter()
        .zip(mu)
        .map(|(wi, mi)| (wi - coef * mi).powi(2))
        .sum::<f64>()
        .sqrt();
    Ok(PredictorDecomposition {
        a,
        a_bar: a / mu_norm,
        b,
        r: ratio(a, b),
        cos: (a / (w_norm * mu_norm)).clamp(-1.0, 1.0),
    })
}

/// `<w, mu> > 0` and `cos^2(w, mu) >= 1 - eps`.
pub fn is_epsilon_optimal(w: &[f64], model: &GaussianModel, eps: f64) -> Result<bool> {
    if !(eps > 0.0 && eps < 1.0) {
        return Err(Error::invalid("eps", "must lie in (0, 1)"));
    }
    let dec = decompose(w, model)?;
    Ok(dec.a > 0.0 && dec.cos * dec.cos >= 1.0 - eps)
}

/// Same test from a decomposition; used by the population recursion where no
/// weight vector is materialized.
pub fn decomposition_is_epsilon_optimal(dec: &PredictorDecomposition, eps: f64) -> bool {
    dec.a > 0.0 && dec.cos * dec.cos >= 1.0 - eps
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;
    use rand::SeedableRng;

    fn e1_model(sigma: f64) -> GaussianModel {
        GaussianModel::axis_aligned(2, 1.0, sigma).unwrap()
    }

    // Composite Simpson over [u, u + 40] of the standard normal density.
    fn tail_by_simpson(u: f64) -> f64 {
        let n = 400_000;
        let h = 40.0 / n as f64;
        let pdf = |z: f64| (-0.5 * z * z).exp() / (2.0 * std::f64::consts::PI).sqrt();
        let mut s = pdf(u) + pdf(u + 40.0);
        for i in 1..n {
            let z = u + i as f64 * h;
            s += if i % 2 == 1 { 4.0 } else { 2.0 } * pdf(z);
        }
        s * h / 3.0
    }

    #[test]
    fn rejects_bad_models() {
        assert!(GaussianModel::new(vec![], 1.0).is_err());
        assert!(GaussianModel::new(vec![0.0, 0.0], 1.0).is_err());
        assert!(GaussianModel::new(vec![1.0], -0.1).is_err());
        assert!(GaussianModel::new(vec![1.0], f64::NAN).is_err());
    }

    #[test]
    fn noiseless_samples_are_signed_means() {
        let model = e1_model(0.0);
        let mut rng = crate::rng::stream(1);
        for s in sample_batch(&model, &mut rng, 3) {
            let yf = f64::from(s.y);
            assert_eq!(s.x, vec![yf * 1.0, yf * 0.0]);
        }
    }

    #[test]
    fn label_weighted_mean_matches_class_mean() {
        let model = GaussianModel::new(vec![1.0, 0.0, 0.0], 1.0).unwrap();
        let n = 100_000;
        let mut rng = crate::rng::stream(42);
        let batch = sample_batch(&model, &mut rng, n);
        for j in 0..3 {
            let vals: Vec<f64> = batch.iter().map(|s| f64::from(s.y) * s.x[j]).collect();
            let mean = vals.iter().sum::<f64>() / n as f64;
            let var = vals.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
            let se = (var / n as f64).sqrt();
            assert!((mean - model.mu()[j]).abs() <= 4.0 * se, "coord {j}: {mean}");
        }
    }

    #[test]
    fn sampling_is_deterministic() {
        let model = e1_model(0.7);
        let a = sample_batch(&model, &mut rand_chacha::ChaCha20Rng::seed_from_u64(9), 16);
        let b = sample_batch(&model, &mut rand_chacha::ChaCha20Rng::seed_from_u64(9), 16);
        assert_eq!(a, b);
    }

    #[test]
    fn upper_tail_reference_points() {
        assert_eq!(gauss_upper_tail(0.0), 0.5);
        assert_abs_diff_eq!(gauss_upper_tail(0.8416), 0.2, epsilon = 5e-4);
        assert_abs_diff_eq!(gauss_upper_tail(1.2816), 0.1, epsilon = 5e-4);
        let oracle = tail_by_simpson(1.0);
        assert_abs_diff_eq!(oracle, 0.15866, epsilon = 1e-5);
        assert_abs_diff_eq!(gauss_upper_tail(1.0), oracle, epsilon = 1e-12);
    }

    #[test]
    fn upper_tail_symmetry_and_monotonicity() {
        let mut prev = f64::INFINITY;
        for i in -800..=800 {
            let u = i as f64 / 100.0;
            let p = gauss_upper_tail(u);
            assert!((p + gauss_upper_tail(-u) - 1.0).abs() <= 1e-14, "u = {u}");
            assert!(p <= prev);
            prev = p;
        }
    }

    #[test]
    fn zero_one_loss_cases() {
        let model = e1_model(1.0);
        assert_eq!(zero_one_loss(&model, &[0.0, 3.0]).unwrap(), 0.5);
        assert_abs_diff_eq!(zero_one_loss(&model, &[1.0, 0.0]).unwrap(), 0.15866, epsilon = 1e-5);
        assert!(matches!(zero_one_loss(&model, &[0.0, 0.0]), Err(Error::ZeroVector)));
        assert!(matches!(
            zero_one_loss(&model, &[1.0]),
            Err(Error::DimensionMismatch { .. })
        ));

        let tail = (1.0f64 - 0.6567 * 0.6567).sqrt();
        let target = GaussianModel::new(vec![0.6567, tail], 0.6567 / 0.8416).unwrap();
        assert_abs_diff_eq!(zero_one_loss(&target, &[1.0, 0.0]).unwrap(), 0.2, epsilon = 5e-4);
    }

    #[test]
    fn noiseless_zero_one_loss() {
        let model = e1_model(0.0);
        assert_eq!(zero_one_loss(&model, &[0.2, 5.0]).unwrap(), 0.0);
        assert_eq!(zero_one_loss(&model, &[-0.2, 5.0]).unwrap(), 1.0);
        assert_eq!(zero_one_loss(&model, &[0.0, 5.0]).unwrap(), 0.5);
    }

    #[test]
    fn decompose_examples() {
        let model = GaussianModel::new(vec![2.0, 0.0], 1.0).unwrap();
        let d = decompose(&[3.0, 4.0], &model).unwrap();
        assert_abs_diff_eq!(d.a, 6.0, epsilon = 1e-14);
        assert_abs_diff_eq!(d.a_bar, 3.0, epsilon = 1e-14);
        assert_abs_diff_eq!(d.b, 4.0, epsilon = 1e-14);
        assert_abs_diff_eq!(d.r, 1.5, epsilon = 1e-14);
        assert_abs_diff_eq!(d.cos, 0.6, epsilon = 1e-14);

        let aligned = decompose(&[5.0, 0.0], &model).unwrap();
        assert_eq!(aligned.b, 0.0);
        assert_eq!(aligned.r, f64::INFINITY);
        assert_eq!(aligned.cos, 1.0);
        assert!(matches!(decompose(&[0.0, 0.0], &model), Err(Error::ZeroVector)));
    }

    #[test]
    fn decompose_axis_aligned_matches_tail_norm() {
        let model = GaussianModel::axis_aligned(5, 2.5, 1.0).unwrap();
        let w = [0.3, -1.0, 2.0, 0.5, -0.25];
        let d = decompose(&w, &model).unwrap();
        let tail = norm(&w[1..]);
        assert!((d.b - tail).abs() <= 1e-14);
    }

    #[test]
    fn epsilon_optimality() {
        let model = e1_model(1.0);
        assert!(is_epsilon_optimal(&[1.0, 0.0], &model, 0.01).unwrap());
        // cos^2 = 0.95
        let w = [0.95f64.sqrt(), 0.05f64.sqrt()];
        assert!(is_epsilon_optimal(&w, &model, 0.1).unwrap());
        assert!(!is_epsilon_optimal(&w, &model, 0.01).unwrap());
        // opposite direction with cos^2 = 0.999
        let w = [-(0.999f64.sqrt()), 0.001f64.sqrt()];
        assert!(!is_epsilon_optimal(&w, &model, 0.01).unwrap());
        assert!(is_epsilon_optimal(&w, &model, 0.0).is_err());
        assert!(is_epsilon_optimal(&w, &model, 1.0).is_err());
    }

    fn vec_strategy(d: usize) -> impl Strategy<Value = Vec<f64>> {
        prop::collection::vec(-5.0f64..5.0, d)
    }

    proptest! {
        #[test]
        fn decomposition_identities(mu in vec_strategy(7), w in vec_strategy(7)) {
            prop_assume!(norm(&mu) > 1e-3 && norm(&w) > 1e-3);
            let model = GaussianModel::new(mu, 1.0).unwrap();
            let d = decompose(&w, &model).unwrap();
            prop_assume!(d.b > 1e-6);
            prop_assert!((d.cos - cos_from_ratio(d.r, model.mu_norm())).abs() <= 1e-12);
            prop_assert!((d.a - d.a_bar * model.mu_norm()).abs() <= 1e-12 * d.a.abs().max(1.0));
            let w2 = dot(&w, &w);
            prop_assert!((w2 - (d.a_bar * d.a_bar + d.b * d.b)).abs() <= 1e-12 * w2);
        }

        #[test]
        fn zero_one_loss_is_scale_invariant(w in vec_strategy(4), c in 1e-3f64..1e3, sigma in 0.1f64..3.0) {
            prop_assume!(norm(&w) > 1e-3);
            let model = GaussianModel::new(vec![0.3, -1.0, 0.2, 0.8], sigma).unwrap();
            let l1 = zero_one_loss(&model, &w).unwrap();
            let scaled: Vec<f64> = w.iter().map(|v| v * c).collect();
            let l2 = zero_one_loss(&model, &scaled).unwrap();
            prop_assert!((l1 - l2).abs() <= 1e-14);
        }

        #[test]
        fn epsilon_optimal_loss_bound(w in vec_strategy(3), eps in 0.001f64..0.999, sigma in 0.1f64..3.0) {
            prop_assume!(norm(&w) > 1e-3);
            let model = GaussianModel::new(vec![1.5, 0.0, 0.0], sigma).unwrap();
            if is_epsilon_optimal(&w, &model, eps).unwrap() {
                let d = decompose(&w, &model).unwrap();
                let loss = zero_one_loss(&model, &w).unwrap();
                let ratio = model.mu_norm() / sigma;
                prop_assert!((loss - gauss_upper_tail(ratio * d.cos)).abs() <= 1e-14);
                prop_assert!(loss <= gauss_upper_tail(ratio * (1.0 - eps).sqrt()) + 1e-15);
            }
        }
    }
}
