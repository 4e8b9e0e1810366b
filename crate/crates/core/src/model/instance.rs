//! Fully specified filtering problem: prior, item law, economics.

use crate::error::{Error, Result};
use crate::model::belief::GaussianBelief;
use crate::model::items::ItemDistribution;

/// All parameters needed to simulate or bound one filtering problem.
#[derive(Debug, Clone)]
pub struct ProblemInstance {
    /// Feature dimension.
    pub k: usize,
    /// Cost charged per forwarded item.
    pub cost: f64,
    /// Discount factor, strictly inside (0, 1). Also the per-step survival
    /// probability of the user.
    pub discount: f64,
    /// Noise scale lambda; observation variance for item X is
    /// I(X) * lambda^2 with I(X) the nonzero count.
    pub noise_scale: f64,
    /// Prior belief over the latent preference vector.
    pub prior: GaussianBelief,
    /// Arrival law of items.
    pub items: ItemDistribution,
    /// Cap on the number of simulated steps per episode; the geometric
    /// lifetime is truncated here.
    pub horizon_truncation: usize,
}

impl ProblemInstance {
    pub fn new(
        cost: f64,
        discount: f64,
        noise_scale: f64,
        prior: GaussianBelief,
        items: ItemDistribution,
        horizon_truncation: usize,
    ) -> Result<Self> {
        if !(cost >= 0.0 && cost.is_finite()) {
            return Err(Error::invalid("cost", "must be finite and >= 0"));
        }
        if !(discount > 0.0 && discount < 1.0) {
            return Err(Error::invalid("discount", "must lie in (0, 1)"));
        }
        if !(noise_scale > 0.0 && noise_scale.is_finite()) {
            return Err(Error::invalid("noise_scale", "must be finite and > 0"));
        }
        if horizon_truncation == 0 {
            return Err(Error::invalid("horizon_truncation", "must be >= 1"));
        }
        let k = prior.dim();
        if items.dim() != k {
            return Err(Error::DimensionMismatch {
                expected: k,
                got: items.dim(),
            });
        }
        Ok(Self {
            k,
            cost,
            discount,
            noise_scale,
            prior,
            items,
            horizon_truncation,
        })
    }

    /// Builds the discount factor from arrival and abandonment rates of the
    /// underlying continuous-time story: items arrive at rate `arrival_rate`
    /// and the user abandons at rate `abandonment_rate`, giving
    /// discount = arrival / (arrival + abandonment).
    pub fn from_rates(
        cost: f64,
        arrival_rate: f64,
        abandonment_rate: f64,
        noise_scale: f64,
        prior: GaussianBelief,
        items: ItemDistribution,
        horizon_truncation: usize,
    ) -> Result<Self> {
        if !(arrival_rate > 0.0 && arrival_rate.is_finite()) {
            return Err(Error::invalid("arrival_rate", "must be finite and > 0"));
        }
        if !(abandonment_rate > 0.0 && abandonment_rate.is_finite()) {
            return Err(Error::invalid("abandonment_rate", "must be finite and > 0"));
        }
        let discount = arrival_rate / (arrival_rate + abandonment_rate);
        Self::new(
            cost,
            discount,
            noise_scale,
            prior,
            items,
            horizon_truncation,
        )
    }

    /// Same instance at a different forwarding cost, for cost sweeps.
    pub fn with_cost(&self, cost: f64) -> Result<Self> {
        Self::new(
            cost,
            self.discount,
            self.noise_scale,
            self.prior.clone(),
            self.items.clone(),
            self.horizon_truncation,
        )
    }

    /// Expected number of items seen in a full (untruncated) lifetime:
    /// discount / (1 - discount).
    pub fn expected_lifetime(&self) -> f64 {
        self.discount / (1.0 - self.discount)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::feature::FeatureVector;
    use approx::assert_abs_diff_eq;

    fn tiny_items(k: usize) -> ItemDistribution {
        let items: Vec<FeatureVector> = (0..k).map(|j| FeatureVector::basis(k, j)).collect();
        let probs = vec![1.0 / k as f64; k];
        ItemDistribution::catalog(items, probs).unwrap()
    }

    #[test]
    fn rate_form_matches_direct_discount() {
        let prior = GaussianBelief::iid(2, 0.3, 1.0).unwrap();
        let inst =
            ProblemInstance::from_rates(0.1, 9.0, 1.0, 0.1, prior.clone(), tiny_items(2), 100)
                .unwrap();
        assert_abs_diff_eq!(inst.discount, 0.9, epsilon = 1e-15);
        let direct = ProblemInstance::new(0.1, 0.9, 0.1, prior, tiny_items(2), 100).unwrap();
        assert_abs_diff_eq!(
            inst.expected_lifetime(),
            direct.expected_lifetime(),
            epsilon = 1e-12
        );
        assert_abs_diff_eq!(direct.expected_lifetime(), 9.0, epsilon = 1e-12);
    }

    #[test]
    fn validation_rejects_bad_parameters() {
        let prior = GaussianBelief::iid(2, 0.0, 1.0).unwrap();
        assert!(ProblemInstance::new(-0.1, 0.9, 0.1, prior.clone(), tiny_items(2), 100).is_err());
        assert!(ProblemInstance::new(0.1, 1.0, 0.1, prior.clone(), tiny_items(2), 100).is_err());
        assert!(ProblemInstance::new(0.1, 0.9, 0.0, prior.clone(), tiny_items(2), 100).is_err());
        assert!(ProblemInstance::new(0.1, 0.9, 0.1, prior.clone(), tiny_items(2), 0).is_err());
        assert!(ProblemInstance::new(0.1, 0.9, 0.1, prior, tiny_items(3), 100).is_err());
    }
}
