//! Item distributions and projection geometry.

use rand::Rng;

use crate::error::{Error, Result};
use crate::model::feature::FeatureVector;

/// Default histogram resolution for projection distributions of empirical
/// item populations. Bounds the DP state-space size for continuous
/// populations.
pub const DEFAULT_PROJECTION_BINS: usize = 20;

const PROB_SUM_TOL: f64 = 1e-12;

/// Distribution of arriving items' feature vectors.
///
/// Either a finite catalog with explicit probabilities or an empirical
/// population sampled uniformly. Duplicate vectors are allowed in a catalog;
/// their probabilities simply add. All-zero vectors are rejected at
/// construction.
#[derive(Debug, Clone)]
pub enum ItemDistribution {
    Catalog {
        items: Vec<FeatureVector>,
        probabilities: Vec<f64>,
        /// Cumulative probabilities for inverse-CDF sampling.
        cumulative: Vec<f64>,
    },
    Empirical {
        items: Vec<FeatureVector>,
    },
}

impl ItemDistribution {
    /// Finite catalog with assigned probabilities.
    pub fn catalog(items: Vec<FeatureVector>, probabilities: Vec<f64>) -> Result<Self> {
        if items.is_empty() {
            return Err(Error::EmptyDistribution);
        }
        if items.len() != probabilities.len() {
            return Err(Error::DimensionMismatch {
                expected: items.len(),
                got: probabilities.len(),
            });
        }
        Self::check_members(&items)?;
        if probabilities.iter().any(|&p| !p.is_finite() || p < 0.0) {
            return Err(Error::InvalidProbabilities {
                sum: probabilities.iter().sum(),
            });
        }
        let sum: f64 = probabilities.iter().sum();
        if (sum - 1.0).abs() > PROB_SUM_TOL {
            return Err(Error::InvalidProbabilities { sum });
        }
        let mut cumulative = Vec::with_capacity(probabilities.len());
        let mut acc = 0.0;
        for &p in &probabilities {
            acc += p;
            cumulative.push(acc);
        }
        // Guard against the final cumulative falling a ulp short.
        *cumulative.last_mut().unwrap() = f64::INFINITY;
        Ok(ItemDistribution::Catalog {
            items,
            probabilities,
            cumulative,
        })
    }

    /// Empirical population sampled uniformly.
    pub fn empirical(items: Vec<FeatureVector>) -> Result<Self> {
        if items.is_empty() {
            return Err(Error::EmptyDistribution);
        }
        Self::check_members(&items)?;
        Ok(ItemDistribution::Empirical { items })
    }

    fn check_members(items: &[FeatureVector]) -> Result<()> {
        let k = items[0].dim();
        for (i, item) in items.iter().enumerate() {
            if item.dim() != k {
                return Err(Error::DimensionMismatch {
                    expected: k,
                    got: item.dim(),
                });
            }
            if item.nonzero_count() == 0 {
                return Err(Error::ZeroVector {
                    context: Some(format!("item {i}")),
                    reason: "all-zero feature vectors are rejected at ingestion",
                });
            }
        }
        Ok(())
    }

    pub fn dim(&self) -> usize {
        self.members()[0].dim()
    }

    pub fn len(&self) -> usize {
        self.members().len()
    }

    pub fn is_empty(&self) -> bool {
        false // construction rejects empty distributions
    }

    pub fn members(&self) -> &[FeatureVector] {
        match self {
            ItemDistribution::Catalog { items, .. } => items,
            ItemDistribution::Empirical { items } => items,
        }
    }

    /// Member weights: assigned probabilities for a catalog, uniform for an
    /// empirical population.
    pub fn weights(&self) -> Vec<f64> {
        match self {
            ItemDistribution::Catalog { probabilities, .. } => probabilities.clone(),
            ItemDistribution::Empirical { items } => {
                vec![1.0 / items.len() as f64; items.len()]
            }
        }
    }

    /// True when every member has L1 norm 1 within `tol`.
    pub fn is_l1_normalized(&self, tol: f64) -> bool {
        self.members().iter().all(|m| m.is_l1_normalized(tol))
    }

    /// Index of one drawn member. Deterministic given the RNG state.
    pub fn sample_index<R: Rng + ?Sized>(&self, rng: &mut R) -> usize {
        match self {
            ItemDistribution::Catalog {
                items, cumulative, ..
            } => {
                let u: f64 = rng.gen();
                let idx = cumulative.partition_point(|&c| c <= u);
                idx.min(items.len() - 1)
            }
            ItemDistribution::Empirical { items } => rng.gen_range(0..items.len()),
        }
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> &FeatureVector {
        &self.members()[self.sample_index(rng)]
    }
}

/// Draw one item from the distribution. Deterministic given the RNG state.
pub fn sample_item<'a, R: Rng + ?Sized>(
    dist: &'a ItemDistribution,
    rng: &mut R,
) -> &'a FeatureVector {
    dist.sample(rng)
}

/// Discrete law of the projection magnitude of future items along a
/// direction: support points with probabilities, sorted by magnitude.
#[derive(Debug, Clone, PartialEq)]
pub struct ProjectionDistribution {
    support: Vec<(f64, f64)>,
}

impl ProjectionDistribution {
    pub fn new(mut support: Vec<(f64, f64)>) -> Result<Self> {
        if support.is_empty() {
            return Err(Error::EmptyDistribution);
        }
        for &(x, p) in &support {
            if !x.is_finite() || x < 0.0 {
                return Err(Error::NegativeMagnitude { value: x });
            }
            if !p.is_finite() || p < 0.0 {
                return Err(Error::InvalidProbabilities {
                    sum: support.iter().map(|&(_, p)| p).sum(),
                });
            }
        }
        let sum: f64 = support.iter().map(|&(_, p)| p).sum();
        if (sum - 1.0).abs() > PROB_SUM_TOL {
            return Err(Error::InvalidProbabilities { sum });
        }
        support.sort_by(|a, b| a.0.total_cmp(&b.0));
        // Merge exactly equal magnitudes (duplicate catalog entries).
        let mut merged: Vec<(f64, f64)> = Vec::with_capacity(support.len());
        for (x, p) in support {
            match merged.last_mut() {
                Some(last) if last.0 == x => last.1 += p,
                _ => merged.push((x, p)),
            }
        }
        Ok(Self { support: merged })
    }

    /// `(magnitude, probability)` pairs in increasing magnitude order.
    pub fn support(&self) -> &[(f64, f64)] {
        &self.support
    }

    pub fn mean(&self) -> f64 {
        self.support.iter().map(|&(x, p)| x * p).sum()
    }

    pub fn max_magnitude(&self) -> f64 {
        self.support.last().map(|&(x, _)| x).unwrap_or(0.0)
    }
}

/// Law of the magnitude x = (d . X) / (d . d) of the projection of future
/// items X along `direction`.
///
/// Finite catalogs yield the exact discrete law; empirical populations are
/// binned into a `bins`-bucket histogram over [0, max magnitude] with bucket
/// midpoints as support.
pub fn projection_distribution(
    direction: &FeatureVector,
    items: &ItemDistribution,
    bins: usize,
) -> Result<ProjectionDistribution> {
    let dd = direction.dot(direction.values());
    if dd <= 0.0 {
        return Err(Error::ZeroVector {
            context: None,
            reason: "projection direction must be nonzero",
        });
    }
    if bins == 0 {
        return Err(Error::invalid("bins", "must be >= 1"));
    }
    if direction.dim() != items.dim() {
        return Err(Error::DimensionMismatch {
            expected: direction.dim(),
            got: items.dim(),
        });
    }
    let magnitudes: Vec<f64> = items
        .members()
        .iter()
        .map(|x| direction.dot(x.values()) / dd)
        .collect();
    match items {
        ItemDistribution::Catalog { probabilities, .. } => {
            let support = magnitudes
                .iter()
                .zip(probabilities.iter())
                .map(|(&x, &p)| (x, p))
                .collect();
            ProjectionDistribution::new(support)
        }
        ItemDistribution::Empirical { items } => {
            let n = items.len() as f64;
            let x_max = magnitudes.iter().cloned().fold(0.0, f64::max);
            if x_max == 0.0 {
                return ProjectionDistribution::new(vec![(0.0, 1.0)]);
            }
            let width = x_max / bins as f64;
            let mut counts = vec![0usize; bins];
            for &x in &magnitudes {
                let b = ((x / width) as usize).min(bins - 1);
                counts[b] += 1;
            }
            let support = counts
                .iter()
                .enumerate()
                .filter(|&(_, &c)| c > 0)
                .map(|(b, &c)| ((b as f64 + 0.5) * width, c as f64 / n))
                .collect();
            ProjectionDistribution::new(support)
        }
    }
}

/// Mean of a projection distribution.
pub fn mean_projection(g: &ProjectionDistribution) -> f64 {
    g.mean()
}
