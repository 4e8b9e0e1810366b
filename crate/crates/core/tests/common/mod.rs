//! Shared fixtures and independent oracles for the integration suites.
//!
//! The oracles deliberately re-derive results through different arithmetic
//! than the library (Kalman-gain updates, explicit tree enumeration) so a
//! shared algebra mistake cannot cancel out.
#![allow(dead_code)]

use infofilter::dp::{QuadratureRule, SubproblemSpec};
use infofilter::model::{FeatureVector, GaussianBelief, ItemDistribution, ProblemInstance};

/// The headline experiment instance: 100 features, basis-vector items with
/// one dominant item (probability 100/199, the rest 1/199 each), iid
/// N(0.3, 1) prior, discount 0.9, noise 0.1, horizon 100.
pub fn dominant_feature_instance(cost: f64) -> ProblemInstance {
    let k = 100;
    let members: Vec<FeatureVector> = (0..k).map(|j| FeatureVector::basis(k, j)).collect();
    let mut probabilities = vec![1.0 / 199.0; k];
    probabilities[0] = 100.0 / 199.0;
    let items = ItemDistribution::catalog(members, probabilities).unwrap();
    let prior = GaussianBelief::iid(k, 0.3, 1.0).unwrap();
    ProblemInstance::new(cost, 0.9, 0.1, prior, items, 100).unwrap()
}

/// Small synthetic instance: three basis items with mildly skewed
/// frequencies and an iid prior.
pub fn small_basis_instance(cost: f64) -> ProblemInstance {
    let members: Vec<FeatureVector> = (0..3).map(|j| FeatureVector::basis(3, j)).collect();
    let items = ItemDistribution::catalog(members, vec![0.5, 0.3, 0.2]).unwrap();
    let prior = GaussianBelief::iid(3, 0.3, 1.0).unwrap();
    ProblemInstance::new(cost, 0.9, 0.1, prior, items, 100).unwrap()
}

/// Small synthetic instance with overlapping (non-basis) items and a
/// correlated prior, so item projections are nontrivial.
pub fn correlated_pair_instance(cost: f64) -> ProblemInstance {
    let members = vec![
        FeatureVector::new(vec![1.0, 0.0]).unwrap(),
        FeatureVector::new(vec![0.0, 1.0]).unwrap(),
        FeatureVector::new(vec![0.6, 0.4]).unwrap(),
    ];
    let items = ItemDistribution::catalog(members, vec![0.4, 0.3, 0.3]).unwrap();
    let prior = GaussianBelief::new(vec![0.4, 0.2], vec![vec![0.8, 0.3], vec![0.3, 0.6]]).unwrap();
    ProblemInstance::new(cost, 0.9, 0.1, prior, items, 100).unwrap()
}

/// Scalar conjugate update re-derived in Kalman-gain form. The library
/// computes the precision-weighted average; this computes
/// mean' = mean + K (z - mean) with K = v / (v + lambda^2 / x^2),
/// variance' = (1 - K) v, and returns (mean', precision').
pub fn kalman_scalar_update(
    mean: f64,
    variance: f64,
    x: f64,
    observation: f64,
    noise_scale: f64,
) -> (f64, f64) {
    if x == 0.0 || variance == 0.0 {
        let precision = if variance == 0.0 {
            f64::INFINITY
        } else {
            1.0 / variance
        };
        return (mean, precision);
    }
    let obs_var = noise_scale * noise_scale / (x * x);
    let gain = variance / (variance + obs_var);
    let post_mean = mean + gain * (observation - mean);
    let post_var = (1.0 - gain) * variance;
    (post_mean, 1.0 / post_var)
}

/// Exhaustive finite-horizon evaluation of the subproblem Bellman
/// recursion, sharing the solver's Gauss-Hermite observation set. No grid
/// is involved: beliefs are propagated exactly through the tree.
pub struct TreeOracle<'a> {
    spec: &'a SubproblemSpec,
    quadrature: QuadratureRule,
}

impl<'a> TreeOracle<'a> {
    pub fn new(spec: &'a SubproblemSpec, quadrature_points: usize) -> Self {
        TreeOracle {
            spec,
            quadrature: QuadratureRule::standard_normal(quadrature_points).unwrap(),
        }
    }

    /// Optimal value with `depth` decision stages remaining, holding an
    /// item of magnitude `x` under belief N(mu, 1/beta).
    pub fn value(&self, depth: usize, mu: f64, beta: f64, x: f64) -> f64 {
        if depth == 0 {
            return 0.0;
        }
        let gamma = self.spec.discount;
        let q0 = gamma * self.future(depth - 1, mu, beta);
        if x == 0.0 {
            return q0;
        }
        let reward = x * (mu - self.spec.cost);
        let q1 = if beta.is_infinite() {
            reward + gamma * self.future(depth - 1, mu, beta)
        } else {
            let l2 = self.spec.noise_scale * self.spec.noise_scale;
            let beta_next = beta + x * x / l2;
            let coef = (1.0 / beta - 1.0 / beta_next).max(0.0).sqrt();
            let mut cont = 0.0;
            for (z, w) in self
                .quadrature
                .nodes()
                .iter()
                .zip(self.quadrature.weights())
            {
                cont += w * self.future(depth - 1, mu + coef * z, beta_next);
            }
            reward + gamma * cont
        };
        q0.max(q1)
    }

    /// Expected value over the next arriving magnitude.
    fn future(&self, depth: usize, mu: f64, beta: f64) -> f64 {
        if depth == 0 {
            return 0.0;
        }
        self.spec
            .projection
            .support()
            .iter()
            .map(|&(x, p)| p * self.value(depth, mu, beta, x))
            .sum()
    }
}

/// Pooled standard error of a difference of independent estimates.
pub fn pooled_se(a: f64, b: f64) -> f64 {
    (a * a + b * b).sqrt()
}
