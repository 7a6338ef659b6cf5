//! Gauss-Hermite quadrature for expectations of functions of a Gaussian
//! variable.
//!
//! Nodes are the roots of the physicists' Hermite polynomial `H_n`, located by
//! Newton iteration on the orthonormal three-term recurrence, which stays in
//! floating-point range for the orders used here (up to a few hundred).

use std::f64::consts::{PI, SQRT_2};
use std::sync::OnceLock;

#[derive(Debug, Clone)]
pub struct GaussHermite {
    nodes: Vec<f64>,
    weights: Vec<f64>,
}

impl GaussHermite {
    pub fn new(order: usize) -> Self {
        assert!(order >= 1, "quadrature order must be positive");
        let n = order;
        let pim4 = PI.powf(-0.25);
        let mut nodes = vec![0.0; n];
        let mut weights = vec![0.0; n];
        let m = n.div_ceil(2);
        let nf = n as f64;
        let mut z = 0.0f64;
        for i in 0..m {
            z = match i {
                0 => (2.0 * nf + 1.0).sqrt() - 1.85575 * (2.0 * nf + 1.0).powf(-1.0 / 6.0),
                1 => z - 1.14 * nf.powf(0.426) / z,
                2 => 1.86 * z - 0.86 * nodes[0],
                3 => 1.91 * z - 0.91 * nodes[1],
                _ => 2.0 * z - nodes[i - 2],
            };
            for _ in 0..100 {
                let (p1, dp) = orthonormal_hermite(n, z, pim4);
                let z1 = z;
                z = z1 - p1 / dp;
                if (z - z1).abs() <= 1e-15 * z.abs().max(1.0) {
                    break;
                }
            }
            let pp = orthonormal_hermite(n, z, pim4).1;
            nodes[i] = z;
            nodes[n - 1 - i] = -z;
            let w = 2.0 / (pp * pp);
            weights[i] = w;
            weights[n - 1 - i] = w;
        }
        if n % 2 == 1 {
            nodes[n / 2] = 0.0;
        }
        Self { nodes, weights }
    }

    pub fn order(&self) -> usize {
        self.nodes.len()
    }

    pub fn nodes(&self) -> &[f64] {
        &self.nodes
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    /// `int exp(-x^2) f(x) dx` over the real line.
    pub fn integrate(&self, f: impl Fn(f64) -> f64) -> f64 {
        self.nodes.iter().zip(&self.weights).map(|(x, w)| w * f(*x)).sum()
    }

    /// `E[f(Z)]` for `Z ~ N(mean, sd^2)`.
    pub fn expect_normal(&self, mean: f64, sd: f64, f: impl Fn(f64) -> f64) -> f64 {
        self.integrate(|x| f(mean + SQRT_2 * sd * x)) / PI.sqrt()
    }
}

/// Value of the orthonormal Hermite function `p_n(z)` and its derivative.
fn orthonormal_hermite(n: usize, z: f64, pim4: f64) -> (f64, f64) {
    let mut p1 = pim4;
    let mut p2 = 0.0;
    for j in 1..=n {
        let p3 = p2;
        p2 = p1;
        let jf = j as f64;
        p1 = z * (2.0 / jf).sqrt() * p2 - ((jf - 1.0) / jf).sqrt() * p3;
    }
    let dp = (2.0 * n as f64).sqrt() * p2;
    (p1, dp)
}

/// Shared order-64 rule.
pub fn rule64() -> &'static GaussHermite {
    static RULE: OnceLock<GaussHermite> = OnceLock::new();
    RULE.get_or_init(|| GaussHermite::new(64))
}

/// Shared order-128 rule, used to cross-check [`rule64`].
pub fn rule128() -> &'static GaussHermite {
    static RULE: OnceLock<GaussHermite> = OnceLock::new();
    RULE.get_or_init(|| GaussHermite::new(128))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn weights_sum_to_sqrt_pi() {
        for n in [1, 2, 5, 20, 64, 65, 128] {
            let q = GaussHermite::new(n);
            assert_relative_eq!(q.weights().iter().sum::<f64>(), PI.sqrt(), max_relative = 1e-13);
        }
    }

    #[test]
    fn small_orders_match_known_nodes() {
        let q = GaussHermite::new(2);
        assert_relative_eq!(q.nodes()[0], 0.5f64.sqrt(), max_relative = 1e-14);
        let q = GaussHermite::new(3);
        assert_relative_eq!(q.nodes()[0], 1.5f64.sqrt(), max_relative = 1e-14);
        assert_eq!(q.nodes()[1], 0.0);
        assert_relative_eq!(q.weights()[1], 2.0 * PI.sqrt() / 3.0, max_relative = 1e-14);
    }

    #[test]
    fn gaussian_moments_are_exact() {
        let q = rule64();
        // E[Z^k] for Z ~ N(0,1): 1, 0, 1, 0, 3, 0, 15
        let moments = [1.0, 0.0, 1.0, 0.0, 3.0, 0.0, 15.0];
        for (k, m) in moments.iter().enumerate() {
            let got = q.expect_normal(0.0, 1.0, |z| z.powi(k as i32));
            assert!((got - m).abs() <= 1e-12, "moment {k}: {got}");
        }
        let mean = q.expect_normal(1.5, 2.0, |z| z);
        assert!((mean - 1.5).abs() <= 1e-13);
    }

    #[test]
    fn smooth_integrand() {
        // E[cos(Z)] = exp(-1/2)
        let got = rule64().expect_normal(0.0, 1.0, f64::cos);
        assert_relative_eq!(got, (-0.5f64).exp(), max_relative = 1e-13);
        let got = rule128().expect_normal(0.0, 1.0, f64::cos);
        assert_relative_eq!(got, (-0.5f64).exp(), max_relative = 1e-13);
    }
}
