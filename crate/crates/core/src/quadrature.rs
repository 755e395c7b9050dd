//! Expectations over standard normal variables by Gauss–Hermite quadrature.

use std::f64::consts::PI;
use std::num::NonZeroUsize;

use gauss_quad::hermite::GaussHermite;

/// Default number of nodes. Integrands here are polynomials (times a
/// Gaussian) of modest degree, so this rule is exact to rounding.
pub const DEFAULT_ORDER: usize = 40;

/// Nodes and weights for `E[f(X)]` with `X ~ N(0, 1)`.
#[derive(Clone, Debug)]
pub struct NormalRule {
    points: Vec<(f64, f64)>,
}

impl NormalRule {
    pub fn new(order: usize) -> Self {
        let order = NonZeroUsize::new(order).expect("quadrature order must be positive");
        // ∫ f(x) e^{-x²/2}/√(2π) dx = π^{-1/2} Σ w_k f(√2 u_k) for the e^{-u²} rule.
        let rule = GaussHermite::new(order);
        let s = 2f64.sqrt();
        let norm = 1.0 / PI.sqrt();
        let points = rule
            .as_node_weight_pairs()
            .iter()
            .map(|&(u, w)| (s * u, w * norm))
            .collect();
        Self { points }
    }

    pub fn order(&self) -> usize {
        self.points.len()
    }

    pub fn points(&self) -> &[(f64, f64)] {
        &self.points
    }

    pub fn expectation(&self, mut f: impl FnMut(f64) -> f64) -> f64 {
        self.points.iter().map(|&(x, w)| w * f(x)).sum()
    }
}

/// Standard normal density, the ostensible distribution of a binned record.
pub fn standard_normal_density(x: f64) -> f64 {
    (-0.5 * x * x).exp() / (2.0 * PI).sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn moments_of_standard_normal() {
        let rule = NormalRule::new(DEFAULT_ORDER);
        assert!((rule.expectation(|_| 1.0) - 1.0).abs() < 1e-12);
        assert!(rule.expectation(|x| x).abs() < 1e-12);
        assert!((rule.expectation(|x| x * x) - 1.0).abs() < 1e-12);
        assert!((rule.expectation(|x| x.powi(4)) - 3.0).abs() < 1e-11);
        assert!((rule.expectation(|x| x.powi(8)) - 105.0).abs() < 1e-9);
    }

    #[test]
    fn density_values() {
        assert!((standard_normal_density(0.0) - 0.398_942_280_401_432_7).abs() < 1e-15);
        let expected = (-0.5f64).exp() / (2.0 * PI).sqrt();
        assert!((standard_normal_density(1.0) - expected).abs() < 1e-16);
    }
}
