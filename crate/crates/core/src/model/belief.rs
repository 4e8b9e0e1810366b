//! Gaussian beliefs over the latent preference vector and their conjugate
//! updates.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::model::feature::FeatureVector;

/// Eigenvalue floor used when repairing empirical covariance matrices.
pub const COVARIANCE_REPAIR_EPS: f64 = 1e-8;

const SYMMETRY_TOL: f64 = 1e-10;
const PSD_TOL: f64 = 1e-10;

/// Multivariate normal posterior over the latent preference vector.
#[derive(Debug, Clone, PartialEq)]
pub struct GaussianBelief {
    mean: DVector<f64>,
    covariance: DMatrix<f64>,
}

impl GaussianBelief {
    /// Validates symmetry (within 1e-10) and positive semidefiniteness
    /// (smallest eigenvalue >= -1e-10).
    pub fn new(mean: Vec<f64>, covariance: Vec<Vec<f64>>) -> Result<Self> {
        let k = mean.len();
        if k == 0 {
            return Err(Error::invalid("belief", "dimension must be >= 1"));
        }
        if covariance.len() != k || covariance.iter().any(|row| row.len() != k) {
            return Err(Error::DimensionMismatch {
                expected: k,
                got: covariance.len(),
            });
        }
        let mean = DVector::from_vec(mean);
        let cov = DMatrix::from_fn(k, k, |i, j| covariance[i][j]);
        Self::from_matrix(mean, cov)
    }

    pub fn from_matrix(mean: DVector<f64>, covariance: DMatrix<f64>) -> Result<Self> {
        let k = mean.len();
        if covariance.nrows() != k || covariance.ncols() != k {
            return Err(Error::DimensionMismatch {
                expected: k,
                got: covariance.nrows(),
            });
        }
        if mean.iter().any(|v| !v.is_finite()) || covariance.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidCovariance {
                message: "non-finite entries".into(),
            });
        }
        let scale = covariance.diagonal().amax().max(1.0);
        for i in 0..k {
            for j in (i + 1)..k {
                if (covariance[(i, j)] - covariance[(j, i)]).abs() > SYMMETRY_TOL * scale {
                    return Err(Error::InvalidCovariance {
                        message: format!(
                            "asymmetry at ({i},{j}): {} vs {}",
                            covariance[(i, j)],
                            covariance[(j, i)]
                        ),
                    });
                }
            }
        }
        let min_eig = covariance.clone().symmetric_eigen().eigenvalues.min();
        if min_eig < -PSD_TOL * scale {
            return Err(Error::InvalidCovariance {
                message: format!("smallest eigenvalue {min_eig:.3e}"),
            });
        }
        Ok(Self { mean, covariance })
    }

    /// Independent coordinates with a shared marginal: N(mean, variance) iid.
    pub fn iid(k: usize, mean: f64, variance: f64) -> Result<Self> {
        if variance < 0.0 {
            return Err(Error::invalid("variance", "must be >= 0"));
        }
        Ok(Self {
            mean: DVector::from_element(k, mean),
            covariance: DMatrix::from_diagonal_element(k, k, variance),
        })
    }

    pub(crate) fn from_parts_unchecked(mean: DVector<f64>, covariance: DMatrix<f64>) -> Self {
        Self { mean, covariance }
    }

    /// In-place conjugate update for the simulation hot loop. Preconditions
    /// (matching dimensions, nonzero item, positive noise) are the caller's
    /// responsibility.
    pub(crate) fn update_in_place(&mut self, item: &FeatureVector, reward: f64, noise_scale: f64) {
        update_multivariate_in_place(
            &mut self.mean,
            &mut self.covariance,
            item,
            reward,
            noise_scale,
        );
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    pub fn mean(&self) -> &DVector<f64> {
        &self.mean
    }

    pub fn covariance(&self) -> &DMatrix<f64> {
        &self.covariance
    }

    /// Posterior mean of the reward for `item`: item . mean.
    pub fn predicted_reward(&self, item: &FeatureVector) -> f64 {
        item.dot(self.mean.as_slice())
    }

    /// Quadratic form X' Sigma X, clamped at zero; values below -1e-10
    /// (relative to the diagonal scale) are a numerical error.
    pub fn quadratic_form(&self, item: &FeatureVector) -> Result<f64> {
        let mut value = 0.0;
        for (i, xi) in item.nonzeros() {
            for (j, xj) in item.nonzeros() {
                value += xi * xj * self.covariance[(i, j)];
            }
        }
        let scale = self.covariance.diagonal().amax().max(1.0);
        if value < -1e-10 * scale {
            return Err(Error::NegativeVarianceForm { value });
        }
        Ok(value.max(0.0))
    }
}

/// One-dimensional belief in mean/precision form.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScalarBelief {
    pub mean: f64,
    /// Inverse variance; `f64::INFINITY` encodes a point mass.
    pub precision: f64,
}

impl ScalarBelief {
    pub fn new(mean: f64, precision: f64) -> Result<Self> {
        if !mean.is_finite() {
            return Err(Error::invalid("mean", "must be finite"));
        }
        if precision.is_nan() || precision <= 0.0 {
            return Err(Error::invalid("precision", "must be > 0"));
        }
        Ok(Self { mean, precision })
    }

    pub fn from_mean_variance(mean: f64, variance: f64) -> Result<Self> {
        if variance < 0.0 {
            return Err(Error::invalid("variance", "must be >= 0"));
        }
        let precision = if variance == 0.0 {
            f64::INFINITY
        } else {
            1.0 / variance
        };
        Self::new(mean, precision)
    }

    pub fn variance(&self) -> f64 {
        if self.precision.is_infinite() {
            0.0
        } else {
            1.0 / self.precision
        }
    }

    pub fn std_dev(&self) -> f64 {
        self.variance().sqrt()
    }
}

/// Conjugate update of a multivariate belief after forwarding `item` and
/// observing `reward`, with observation variance I(X) * noise_scale^2.
///
/// Computed in covariance form (rank-one downdate), which remains valid for
/// degenerate (singular) covariances: a point-mass prior is a fixed point.
pub fn update_multivariate(
    belief: &GaussianBelief,
    item: &FeatureVector,
    reward: f64,
    noise_scale: f64,
) -> Result<GaussianBelief> {
    if item.dim() != belief.dim() {
        return Err(Error::DimensionMismatch {
            expected: belief.dim(),
            got: item.dim(),
        });
    }
    if noise_scale <= 0.0 {
        return Err(Error::invalid("noise_scale", "must be > 0"));
    }
    let nonzero = item.nonzero_count();
    if nonzero == 0 {
        return Err(Error::ZeroVector {
            context: None,
            reason: "observation variance is undefined for an all-zero item",
        });
    }
    let mut mean = belief.mean.clone();
    let mut covariance = belief.covariance.clone();
    update_multivariate_in_place(&mut mean, &mut covariance, item, reward, noise_scale);
    Ok(GaussianBelief::from_parts_unchecked(mean, covariance))
}

/// In-place form of [`update_multivariate`] for the simulation hot loop.
/// Preconditions (dimensions, nonzero item, positive noise) are the
/// caller's responsibility.
pub(crate) fn update_multivariate_in_place(
    mean: &mut DVector<f64>,
    covariance: &mut DMatrix<f64>,
    item: &FeatureVector,
    reward: f64,
    noise_scale: f64,
) {
    let obs_var = item.nonzero_count() as f64 * noise_scale * noise_scale;
    let k = mean.len();
    // s = Sigma X
    let mut s = DVector::zeros(k);
    for (j, xj) in item.nonzeros() {
        for i in 0..k {
            s[i] += covariance[(i, j)] * xj;
        }
    }
    let denom = item.dot(s.as_slice()) + obs_var;
    let innovation = reward - item.dot(mean.as_slice());
    let gain = innovation / denom;
    for i in 0..k {
        mean[i] += s[i] * gain;
    }
    for i in 0..k {
        let si = s[i];
        for j in 0..k {
            covariance[(i, j)] -= si * s[j] / denom;
        }
    }
}

/// Conjugate update of a one-dimensional belief after forwarding with
/// projected magnitude `x` and observing `reward`:
///
/// mu' = (lambda^2 beta mu + Y x^2) / (lambda^2 beta + x^2)
/// beta' = beta + x^2 / lambda^2
///
/// An x = 0 observation carries no information: both formulas degenerate to
/// the identity. A point-mass belief (infinite precision) is unchanged.
pub fn update_scalar(belief: &ScalarBelief, x: f64, reward: f64, noise_scale: f64) -> ScalarBelief {
    if x == 0.0 || belief.precision.is_infinite() {
        return *belief;
    }
    let l2 = noise_scale * noise_scale;
    let x2 = x * x;
    ScalarBelief {
        mean: (l2 * belief.precision * belief.mean + reward * x2) / (l2 * belief.precision + x2),
        precision: belief.precision + x2 / l2,
    }
}

/// Symmetrize and lift eigenvalues below `eps` up to `eps`.
///
/// Empirical covariances from prior fitting are frequently rank-deficient;
/// the repaired matrix is strictly positive definite.
pub fn psd_repair(covariance: &DMatrix<f64>, eps: f64) -> DMatrix<f64> {
    let sym = (covariance + covariance.transpose()) * 0.5;
    let mut eig = sym.symmetric_eigen();
    for v in eig.eigenvalues.iter_mut() {
        if *v < eps {
            *v = eps;
        }
    }
    eig.recompose()
}

/// Precomputed Gaussian conditioning of one coordinate on the rest.
///
/// The solve against the (k-1)x(k-1) submatrix happens once; conditioning
/// on a concrete realization is then O(k). The conditional variance does
/// not depend on the realization.
pub struct ScalarConditioner {
    prior_mean_j: f64,
    prior_mean_rest: Vec<f64>,
    weights: Vec<f64>,
    variance: f64,
}

impl ScalarConditioner {
    pub fn new(prior: &GaussianBelief, j: usize) -> Result<Self> {
        let k = prior.dim();
        if j >= k {
            return Err(Error::invalid(
                "j",
                format!("index {j} out of range for k={k}"),
            ));
        }
        if k == 1 {
            return Ok(Self {
                prior_mean_j: prior.mean[0],
                prior_mean_rest: Vec::new(),
                weights: Vec::new(),
                variance: prior.covariance[(0, 0)].max(0.0),
            });
        }
        let repaired = psd_repair(&prior.covariance, COVARIANCE_REPAIR_EPS);
        let rest: Vec<usize> = (0..k).filter(|&i| i != j).collect();
        let sub = DMatrix::from_fn(k - 1, k - 1, |r, c| repaired[(rest[r], rest[c])]);
        let cross = DVector::from_fn(k - 1, |r, _| repaired[(rest[r], j)]);

        let chol = match sub.clone().cholesky() {
            Some(c) => c,
            None => {
                let eigs = sub.symmetric_eigen().eigenvalues;
                let cond = eigs.max() / eigs.min().max(f64::MIN_POSITIVE);
                return Err(Error::SingularConditioning {
                    condition_number: cond,
                });
            }
        };
        let weights = chol.solve(&cross);
        let variance = (repaired[(j, j)] - cross.dot(&weights)).max(0.0);
        Ok(Self {
            prior_mean_j: prior.mean[j],
            prior_mean_rest: rest.iter().map(|&i| prior.mean[i]).collect(),
            weights: weights.iter().copied().collect(),
            variance,
        })
    }

    /// Conditional variance; independent of the conditioned values.
    pub fn variance(&self) -> f64 {
        self.variance
    }

    /// Conditional belief given the remaining coordinates in index order
    /// (coordinate j removed).
    pub fn condition(&self, theta_rest: &[f64]) -> Result<ScalarBelief> {
        if theta_rest.len() != self.weights.len() {
            return Err(Error::DimensionMismatch {
                expected: self.weights.len(),
                got: theta_rest.len(),
            });
        }
        let mut mean = self.prior_mean_j;
        for ((w, t), m) in self
            .weights
            .iter()
            .zip(theta_rest)
            .zip(&self.prior_mean_rest)
        {
            mean += w * (t - m);
        }
        ScalarBelief::from_mean_variance(mean, self.variance)
    }
}

/// Conditional distribution of coordinate `j` given the remaining
/// coordinates of the latent vector: standard Gaussian conditioning on the
/// PSD-repaired covariance.
pub fn conditional_scalar_belief(
    prior: &GaussianBelief,
    j: usize,
    theta_rest: &[f64],
) -> Result<ScalarBelief> {
    ScalarConditioner::new(prior, j)?.condition(theta_rest)
}

/// Sampler for a multivariate normal belief; the square-root factor is
/// computed once so repeated draws are O(k^2).
///
/// Uses Cholesky when the covariance is positive definite and falls back to
/// a symmetric-eigenvalue square root with negative eigenvalues clamped to
/// zero, so degenerate beliefs sample exactly their mean directions.
pub struct MultivariateNormalSampler {
    mean: DVector<f64>,
    factor: DMatrix<f64>,
}

impl MultivariateNormalSampler {
    pub fn new(belief: &GaussianBelief) -> Result<Self> {
        let factor = match belief.covariance.clone().cholesky() {
            Some(c) => c.l(),
            None => {
                let scale = belief.covariance.diagonal().amax().max(1.0);
                let mut eig = belief.covariance.clone().symmetric_eigen();
                for v in eig.eigenvalues.iter_mut() {
                    if *v < -PSD_TOL * scale {
                        return Err(Error::InvalidCovariance {
                            message: format!("eigenvalue {v:.3e} in sampling factorization"),
                        });
                    }
                    *v = v.max(0.0).sqrt();
                }
                &eig.eigenvectors * DMatrix::from_diagonal(&eig.eigenvalues)
            }
        };
        Ok(Self {
            mean: belief.mean.clone(),
            factor,
        })
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> DVector<f64> {
        let k = self.mean.len();
        let z = DVector::from_fn(k, |_, _| rng.sample::<f64, _>(StandardNormal));
        &self.mean + &self.factor * z
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn identity_belief() -> GaussianBelief {
        GaussianBelief::new(vec![0.3, 0.3], vec![vec![1.0, 0.0], vec![0.0, 1.0]]).unwrap()
    }

    #[test]
    fn multivariate_update_basis_observation() {
        let belief = identity_belief();
        let item = FeatureVector::basis(2, 0);
        let updated = update_multivariate(&belief, &item, 0.5, 0.1).unwrap();
        assert_abs_diff_eq!(updated.mean()[0], 0.503 / 1.01, epsilon = 1e-12);
        assert_abs_diff_eq!(updated.mean()[1], 0.3, epsilon = 1e-15);
        assert_abs_diff_eq!(updated.covariance()[(0, 0)], 1.0 / 101.0, epsilon = 1e-12);
        assert_abs_diff_eq!(updated.covariance()[(1, 1)], 1.0, epsilon = 1e-15);
        assert_abs_diff_eq!(updated.covariance()[(0, 1)], 0.0, epsilon = 1e-15);
    }

    #[test]
    fn multivariate_update_uninformative_limit() {
        let belief = identity_belief();
        let item = FeatureVector::new(vec![0.5, 0.5]).unwrap();
        let reward = belief.predicted_reward(&item);
        let updated = update_multivariate(&belief, &item, reward, 1e6).unwrap();
        for i in 0..2 {
            assert_abs_diff_eq!(updated.mean()[i], belief.mean()[i], epsilon = 1e-6);
            for j in 0..2 {
                assert_abs_diff_eq!(
                    updated.covariance()[(i, j)],
                    belief.covariance()[(i, j)],
                    epsilon = 1e-6
                );
            }
        }
    }

    #[test]
    fn multivariate_update_point_mass_is_fixed() {
        let belief =
            GaussianBelief::new(vec![0.2, 0.4], vec![vec![0.0, 0.0], vec![0.0, 0.0]]).unwrap();
        let item = FeatureVector::new(vec![0.5, 0.5]).unwrap();
        let updated = update_multivariate(&belief, &item, 7.0, 0.1).unwrap();
        assert_eq!(updated.mean(), belief.mean());
        assert_eq!(updated.covariance(), belief.covariance());
    }

    #[test]
    fn multivariate_update_rejects_zero_item() {
        let belief = identity_belief();
        let item = FeatureVector::new(vec![0.0, 0.0]).unwrap();
        assert!(matches!(
            update_multivariate(&belief, &item, 0.5, 0.1),
            Err(Error::ZeroVector { .. })
        ));
    }

    #[test]
    fn scalar_update_direct_substitution() {
        let b = ScalarBelief::new(0.3, 1.0).unwrap();
        let u = update_scalar(&b, 1.0, 0.5, 0.1);
        assert_abs_diff_eq!(u.mean, 0.503 / 1.01, epsilon = 1e-12);
        assert_abs_diff_eq!(u.precision, 101.0, epsilon = 1e-12);
    }

    #[test]
    fn scalar_update_zero_magnitude_is_identity() {
        let b = ScalarBelief::new(0.3, 1.0).unwrap();
        let u = update_scalar(&b, 0.0, 123.0, 0.1);
        assert_eq!(u, b);
    }

    #[test]
    fn scalar_update_precision_arithmetic() {
        let b = ScalarBelief::new(0.0, 4.0).unwrap();
        let u = update_scalar(&b, 0.5, 0.0, 0.1);
        assert_abs_diff_eq!(u.mean, 0.0, epsilon = 1e-15);
        assert_abs_diff_eq!(u.precision, 29.0, epsilon = 1e-12);
    }

    #[test]
    fn conjugate_consistency_on_basis_items() {
        // Multivariate update on e_j with diagonal covariance must agree
        // with the scalar update at x = 1 on coordinate j.
        let belief = GaussianBelief::new(
            vec![0.1, -0.4, 0.7],
            vec![
                vec![0.5, 0.0, 0.0],
                vec![0.0, 2.0, 0.0],
                vec![0.0, 0.0, 0.25],
            ],
        )
        .unwrap();
        for j in 0..3 {
            let item = FeatureVector::basis(3, j);
            let y = 0.2 + j as f64 * 0.11;
            let multi = update_multivariate(&belief, &item, y, 0.3).unwrap();
            let scalar = update_scalar(
                &ScalarBelief::from_mean_variance(belief.mean()[j], belief.covariance()[(j, j)])
                    .unwrap(),
                1.0,
                y,
                0.3,
            );
            assert_abs_diff_eq!(multi.mean()[j], scalar.mean, epsilon = 1e-10);
            assert_abs_diff_eq!(
                multi.covariance()[(j, j)],
                scalar.variance(),
                epsilon = 1e-10
            );
        }
    }

    #[test]
    fn precision_monotonicity() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let mut scalar = ScalarBelief::new(0.0, 0.5).unwrap();
        let mut belief = identity_belief();
        let item = FeatureVector::new(vec![0.6, 0.4]).unwrap();
        for step in 0..50 {
            let x = (step % 5) as f64 / 4.0;
            let y: f64 = rng.sample(StandardNormal);
            let next = update_scalar(&scalar, x, y, 0.2);
            assert!(next.precision >= scalar.precision);
            scalar = next;

            let updated = update_multivariate(&belief, &item, y, 0.2).unwrap();
            for i in 0..2 {
                assert!(updated.covariance()[(i, i)] <= belief.covariance()[(i, i)] + 1e-10);
            }
            belief = updated;
        }
    }

    #[test]
    fn posterior_mean_is_martingale_under_model() {
        // One forwarding update with rewards drawn from the model keeps the
        // expected posterior mean at the prior mean.
        let prior = identity_belief();
        let item = FeatureVector::new(vec![0.5, 0.5]).unwrap();
        let noise = 0.4;
        let mut rng = ChaCha8Rng::seed_from_u64(99);
        let sampler = MultivariateNormalSampler::new(&prior).unwrap();
        let n = 10_000;
        let mut sums = [0.0f64; 2];
        let mut sumsq = [0.0f64; 2];
        for _ in 0..n {
            let theta = sampler.sample(&mut rng);
            let eps: f64 = rng.sample(StandardNormal);
            let y = item.dot(theta.as_slice()) + eps * noise * (item.nonzero_count() as f64).sqrt();
            let post = update_multivariate(&prior, &item, y, noise).unwrap();
            for i in 0..2 {
                sums[i] += post.mean()[i];
                sumsq[i] += post.mean()[i] * post.mean()[i];
            }
        }
        for i in 0..2 {
            let mean = sums[i] / n as f64;
            let var = sumsq[i] / n as f64 - mean * mean;
            let se = (var / n as f64).sqrt();
            assert!(
                (mean - prior.mean()[i]).abs() <= 3.0 * se,
                "coordinate {i}: {mean} vs {} (3se = {})",
                prior.mean()[i],
                3.0 * se
            );
        }
    }

    #[test]
    fn conditioning_bivariate() {
        let prior =
            GaussianBelief::new(vec![0.0, 0.0], vec![vec![1.0, 0.5], vec![0.5, 1.0]]).unwrap();
        let cond = conditional_scalar_belief(&prior, 0, &[1.0]).unwrap();
        assert_abs_diff_eq!(cond.mean, 0.5, epsilon = 1e-9);
        assert_abs_diff_eq!(cond.variance(), 0.75, epsilon = 1e-7);
    }

    #[test]
    fn conditioning_diagonal_reduces_to_marginal() {
        let prior = GaussianBelief::new(
            vec![0.1, 0.2, 0.3],
            vec![
                vec![0.5, 0.0, 0.0],
                vec![0.0, 1.5, 0.0],
                vec![0.0, 0.0, 2.5],
            ],
        )
        .unwrap();
        let cond = conditional_scalar_belief(&prior, 1, &[5.0, -3.0]).unwrap();
        assert_abs_diff_eq!(cond.mean, 0.2, epsilon = 1e-9);
        assert_abs_diff_eq!(cond.variance(), 1.5, epsilon = 1e-7);
    }

    #[test]
    fn conditioning_perfectly_correlated() {
        let prior =
            GaussianBelief::new(vec![0.4, 0.1], vec![vec![1.0, 1.0], vec![1.0, 1.0]]).unwrap();
        let cond = conditional_scalar_belief(&prior, 0, &[1.1]).unwrap();
        assert_abs_diff_eq!(cond.mean, 1.4, epsilon = 1e-6);
        assert!(cond.variance() <= 1e-6);
    }

    #[test]
    fn single_feature_conditioning_is_marginal() {
        let prior = GaussianBelief::new(vec![0.7], vec![vec![0.3]]).unwrap();
        let cond = conditional_scalar_belief(&prior, 0, &[]).unwrap();
        assert_abs_diff_eq!(cond.mean, 0.7, epsilon = 1e-15);
        assert_abs_diff_eq!(cond.variance(), 0.3, epsilon = 1e-15);
    }

    #[test]
    fn sampler_degenerate_belief_returns_mean() {
        let belief =
            GaussianBelief::new(vec![0.2, -0.1], vec![vec![0.0, 0.0], vec![0.0, 0.0]]).unwrap();
        let sampler = MultivariateNormalSampler::new(&belief).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let draw = sampler.sample(&mut rng);
        assert_eq!(draw[0], 0.2);
        assert_eq!(draw[1], -0.1);
    }

    #[test]
    fn belief_validation_rejects_asymmetry_and_negative_eigen() {
        assert!(GaussianBelief::new(vec![0.0, 0.0], vec![vec![1.0, 0.2], vec![0.4, 1.0]]).is_err());
        assert!(GaussianBelief::new(vec![0.0, 0.0], vec![vec![1.0, 2.0], vec![2.0, 1.0]]).is_err());
    }
}
