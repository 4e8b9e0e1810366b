//! Statistical primitives: feature vectors, item distributions, Gaussian
//! beliefs with conjugate updates, and projection geometry.
//!
//! All types are immutable values and all operations are pure functions of
//! their inputs plus an explicit RNG, so everything here is safe to share
//! across threads.

mod belief;
mod feature;
mod instance;
mod items;

pub use belief::{
    conditional_scalar_belief, psd_repair, update_multivariate, update_scalar, GaussianBelief,
    MultivariateNormalSampler, ScalarBelief, ScalarConditioner, COVARIANCE_REPAIR_EPS,
};
pub use feature::{l1_normalize, nonzero_count, FeatureVector};
pub use instance::ProblemInstance;
pub use items::{
    mean_projection, projection_distribution, sample_item, ItemDistribution,
    ProjectionDistribution, DEFAULT_PROJECTION_BINS,
};
