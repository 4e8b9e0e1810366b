//! Gaussian quadrature for expectations under a standard normal law.

use nalgebra::DMatrix;

use crate::error::{Error, Result};

/// Default node count; exact for polynomials up to degree 41.
pub const DEFAULT_QUADRATURE_POINTS: usize = 21;

/// Nodes and weights for approximating E[f(Z)], Z ~ N(0, 1).
#[derive(Debug, Clone, PartialEq)]
pub struct QuadratureRule {
    nodes: Vec<f64>,
    weights: Vec<f64>,
}

impl QuadratureRule {
    /// Gauss-Hermite rule rescaled to the standard normal weight, computed
    /// from the eigendecomposition of the Jacobi matrix of the monic
    /// Hermite recurrence (diagonal 0, off-diagonal sqrt(i)).
    ///
    /// Exact for polynomials up to degree 2n - 1; weights sum to 1 and
    /// nodes are symmetric about 0.
    pub fn standard_normal(n: usize) -> Result<Self> {
        if n == 0 {
            return Err(Error::invalid("quadrature_points", "must be >= 1"));
        }
        if n == 1 {
            return Ok(Self {
                nodes: vec![0.0],
                weights: vec![1.0],
            });
        }
        let mut jacobi = DMatrix::zeros(n, n);
        for i in 1..n {
            let b = (i as f64).sqrt();
            jacobi[(i, i - 1)] = b;
            jacobi[(i - 1, i)] = b;
        }
        let eig = jacobi.symmetric_eigen();
        let mut pairs: Vec<(f64, f64)> = (0..n)
            .map(|i| {
                let v0 = eig.eigenvectors[(0, i)];
                (eig.eigenvalues[i], v0 * v0)
            })
            .collect();
        pairs.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap());
        let mut nodes: Vec<f64> = pairs.iter().map(|p| p.0).collect();
        let mut weights: Vec<f64> = pairs.iter().map(|p| p.1).collect();
        // The exact rule is symmetric; average mirrored pairs to remove
        // eigensolver noise.
        for i in 0..n / 2 {
            let k = n - 1 - i;
            let magnitude = 0.5 * (nodes[k] - nodes[i]);
            nodes[i] = -magnitude;
            nodes[k] = magnitude;
            let w = 0.5 * (weights[i] + weights[k]);
            weights[i] = w;
            weights[k] = w;
        }
        if n % 2 == 1 {
            nodes[n / 2] = 0.0;
        }
        let total: f64 = weights.iter().sum();
        for w in weights.iter_mut() {
            *w /= total;
        }
        Ok(Self { nodes, weights })
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn nodes(&self) -> &[f64] {
        &self.nodes
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    /// Approximates E[f(Z)] for Z ~ N(0, 1).
    pub fn expectation<F: FnMut(f64) -> f64>(&self, mut f: F) -> f64 {
        self.nodes
            .iter()
            .zip(&self.weights)
            .map(|(z, w)| w * f(*z))
            .sum()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn weights_normalized_and_nodes_symmetric() {
        for n in 1..=25 {
            let rule = QuadratureRule::standard_normal(n).unwrap();
            let sum: f64 = rule.weights().iter().sum();
            assert_abs_diff_eq!(sum, 1.0, epsilon = 1e-12);
            for i in 0..n {
                assert_abs_diff_eq!(rule.nodes()[i], -rule.nodes()[n - 1 - i], epsilon = 1e-12);
                assert!(rule.weights()[i] > 0.0);
            }
        }
    }

    #[test]
    fn standard_normal_moments() {
        let rule = QuadratureRule::standard_normal(21).unwrap();
        assert_abs_diff_eq!(rule.expectation(|_| 1.0), 1.0, epsilon = 1e-14);
        assert_abs_diff_eq!(rule.expectation(|z| z), 0.0, epsilon = 1e-12);
        assert_abs_diff_eq!(rule.expectation(|z| z * z), 1.0, epsilon = 1e-9);
        assert_abs_diff_eq!(rule.expectation(|z| z.powi(4)), 3.0, epsilon = 1e-8);
        assert_abs_diff_eq!(rule.expectation(|z| z.powi(6)), 15.0, epsilon = 1e-7);
        assert_abs_diff_eq!(rule.expectation(|z| z.powi(8)), 105.0, epsilon = 1e-6);
    }

    #[test]
    fn low_order_rules() {
        let rule = QuadratureRule::standard_normal(1).unwrap();
        assert_eq!(rule.nodes(), &[0.0]);
        assert_eq!(rule.weights(), &[1.0]);

        // Two nodes integrate cubics exactly.
        let rule = QuadratureRule::standard_normal(2).unwrap();
        assert_abs_diff_eq!(rule.expectation(|z| z * z), 1.0, epsilon = 1e-12);
        assert_abs_diff_eq!(rule.expectation(|z| z.powi(3)), 0.0, epsilon = 1e-12);
    }

    #[test]
    fn zero_points_rejected() {
        assert!(QuadratureRule::standard_normal(0).is_err());
    }
}
