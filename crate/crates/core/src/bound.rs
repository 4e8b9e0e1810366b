//! Instance-specific upper bounds on achievable discounted value.
//!
//! Two bounds and their minimum: a decomposition bound that relaxes the
//! problem into per-feature single-direction subproblems, each solved by
//! value iteration and averaged by Monte Carlo over prior draws, and a
//! hindsight bound that lets a clairvoyant with the true preference vector
//! forward exactly the items whose reward beats the cost.

use std::sync::Arc;

use rayon::prelude::*;
use serde::Serialize;

use crate::dp::{GridConfig, SubproblemSpec, ValueGrid, BETA_FINITE_CAP};
use crate::error::{Error, Result};
use crate::model::{FeatureVector, MultivariateNormalSampler, ProblemInstance, ScalarConditioner};
use crate::policy::{DpCache, SolverSettings};
use crate::rng::{substream, tag};

pub const DEFAULT_DECOMPOSITION_SAMPLES: usize = 1000;
pub const DEFAULT_HINDSIGHT_SAMPLES: usize = 100_000;
/// Below this many Monte Carlo samples the reported intervals are too wide
/// to act on; reports carry a warning flag.
pub const LOW_SAMPLE_THRESHOLD: usize = 30;

/// Sample counts and solver discretization for bound computation.
#[derive(Debug, Clone)]
pub struct BoundConfig {
    pub decomposition_samples: usize,
    pub hindsight_samples: usize,
    pub solver: SolverSettings,
}

impl Default for BoundConfig {
    fn default() -> Self {
        Self {
            decomposition_samples: DEFAULT_DECOMPOSITION_SAMPLES,
            hindsight_samples: DEFAULT_HINDSIGHT_SAMPLES,
            solver: SolverSettings::default(),
        }
    }
}

/// Per-feature decomposition estimate before the hindsight comparison.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DecompositionEstimate {
    pub per_feature_values: Vec<f64>,
    pub per_feature_stderrs: Vec<f64>,
    /// Sum of `per_feature_values`.
    pub value: f64,
    /// Per-feature errors aggregated in quadrature; the feature streams are
    /// independent.
    pub stderr: f64,
}

/// Both bounds, their Monte Carlo errors, and the minimum.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BoundReport {
    pub per_feature_values: Vec<f64>,
    pub per_feature_stderrs: Vec<f64>,
    pub decomposition_bound: f64,
    pub decomposition_stderr: f64,
    pub hindsight_bound: f64,
    pub hindsight_stderr: f64,
    /// min(decomposition_bound, hindsight_bound).
    pub combined_bound: f64,
    /// Standard error of whichever bound achieved the minimum.
    pub combined_stderr: f64,
    pub sample_count: usize,
    pub hindsight_sample_count: usize,
    pub low_sample_warning: bool,
}

pub(crate) fn mean_and_stderr(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    if values.len() < 2 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, (var / n).sqrt())
}

/// Solved subproblem pieces for one feature direction, reusable across
/// Monte Carlo samples: the conditional variance does not depend on the
/// conditioning draw, so a single grid covers every sample.
struct FeatureSubproblem {
    grid: Arc<ValueGrid>,
    conditioner: ScalarConditioner,
}

fn feature_subproblem(
    instance: &ProblemInstance,
    j: usize,
    settings: &SolverSettings,
    cache: &DpCache,
) -> Result<FeatureSubproblem> {
    if j >= instance.k {
        return Err(Error::invalid("feature_index", "out of range"));
    }
    let direction = FeatureVector::basis(instance.k, j);
    let g = cache.projection_for(&direction, &instance.items, settings.projection_bins)?;
    let spec = SubproblemSpec::new(
        instance.cost,
        instance.discount,
        instance.noise_scale,
        (*g).clone(),
    )?;
    // Grid mean range follows the marginal of coordinate j (it contains
    // every conditional mean's typical range); base precision follows the
    // conditional variance, which is where evaluation happens.
    let marginal_mean = instance.prior.mean()[j];
    let marginal_var = instance.prior.covariance()[(j, j)];
    let conditioner = ScalarConditioner::new(&instance.prior, j)?;
    let mut config = GridConfig::for_prior(marginal_mean, marginal_var)?;
    if conditioner.variance() > 0.0 {
        config.beta0 = (1.0 / conditioner.variance()).min(BETA_FINITE_CAP);
    }
    config.mu_points = settings.mu_points;
    config.beta_points = settings.beta_points;
    config.tolerance = settings.tolerance;
    config.max_iterations = settings.max_iterations;
    config.quadrature_points = settings.quadrature_points;
    let grid = cache.grid_for(&spec, &config)?;
    Ok(FeatureSubproblem { grid, conditioner })
}

fn mc_average(
    instance: &ProblemInstance,
    j: usize,
    sub: &FeatureSubproblem,
    sampler: &MultivariateNormalSampler,
    samples: usize,
    master_seed: u64,
) -> Result<(f64, f64)> {
    let mut rng_theta = substream(master_seed, &[tag::BOUND_THETA, j as u64]);
    let mut rng_items = substream(master_seed, &[tag::BOUND_ITEMS, j as u64]);
    let gamma = instance.discount;
    let mut rest = vec![0.0; instance.k - 1];
    let mut draws = Vec::with_capacity(samples);
    for _ in 0..samples {
        let theta = sampler.sample(&mut rng_theta);
        let mut t = 0;
        for i in 0..instance.k {
            if i != j {
                rest[t] = theta[i];
                t += 1;
            }
        }
        let cond = sub.conditioner.condition(&rest)?;
        let item = instance.items.sample(&mut rng_items);
        let x = item.values()[j];
        draws.push(gamma * sub.grid.evaluate(cond.mean, cond.std_dev(), x)?);
    }
    Ok(mean_and_stderr(&draws))
}

/// Monte Carlo estimate of one feature's subproblem value: average over
/// prior draws of the solved subproblem evaluated at the conditional belief
/// and the first arriving coordinate, scaled by the leading discount.
pub fn subproblem_value_mc(
    instance: &ProblemInstance,
    j: usize,
    samples: usize,
    settings: &SolverSettings,
    cache: &DpCache,
    master_seed: u64,
) -> Result<(f64, f64)> {
    if samples == 0 {
        return Err(Error::invalid("samples", "must be >= 1"));
    }
    let sub = feature_subproblem(instance, j, settings, cache)?;
    let sampler = MultivariateNormalSampler::new(&instance.prior)?;
    mc_average(instance, j, &sub, &sampler, samples, master_seed)
}

/// Sum of per-feature subproblem values: an upper bound on the full
/// problem's value because each feature's subproblem relaxes the others
/// away.
pub fn decomposition_bound(
    instance: &ProblemInstance,
    samples: usize,
    settings: &SolverSettings,
    cache: &DpCache,
    master_seed: u64,
) -> Result<DecompositionEstimate> {
    if samples == 0 {
        return Err(Error::invalid("samples", "must be >= 1"));
    }
    // Sequential warm phase: distinct grids are solved once, then the
    // per-feature Monte Carlo loops run in parallel against the cache.
    let subproblems: Vec<FeatureSubproblem> = (0..instance.k)
        .map(|j| feature_subproblem(instance, j, settings, cache))
        .collect::<Result<_>>()?;
    let sampler = MultivariateNormalSampler::new(&instance.prior)?;
    let per_feature: Vec<(f64, f64)> = subproblems
        .par_iter()
        .enumerate()
        .map(|(j, sub)| mc_average(instance, j, sub, &sampler, samples, master_seed))
        .collect::<Result<_>>()?;
    let per_feature_values: Vec<f64> = per_feature.iter().map(|&(v, _)| v).collect();
    let per_feature_stderrs: Vec<f64> = per_feature.iter().map(|&(_, s)| s).collect();
    let value = per_feature_values.iter().sum();
    let stderr = per_feature_stderrs
        .iter()
        .map(|s| s * s)
        .sum::<f64>()
        .sqrt();
    Ok(DecompositionEstimate {
        per_feature_values,
        per_feature_stderrs,
        value,
        stderr,
    })
}

/// Clairvoyant bound: gamma / (1 - gamma) times the expected positive part
/// of the net reward under independent prior and item draws.
pub fn hindsight_bound(
    instance: &ProblemInstance,
    samples: usize,
    master_seed: u64,
) -> Result<(f64, f64)> {
    if samples == 0 {
        return Err(Error::invalid("samples", "must be >= 1"));
    }
    let sampler = MultivariateNormalSampler::new(&instance.prior)?;
    let mut rng = substream(master_seed, &[tag::HINDSIGHT]);
    let scale = instance.discount / (1.0 - instance.discount);
    let mut draws = Vec::with_capacity(samples);
    for _ in 0..samples {
        let theta = sampler.sample(&mut rng);
        let item = instance.items.sample(&mut rng);
        let net = item.dot(theta.as_slice()) - instance.cost;
        draws.push(scale * net.max(0.0));
    }
    Ok(mean_and_stderr(&draws))
}

/// Computes both bounds and reports their minimum.
pub fn combined_bound(
    instance: &ProblemInstance,
    config: &BoundConfig,
    cache: &DpCache,
    master_seed: u64,
) -> Result<BoundReport> {
    let decomposition = decomposition_bound(
        instance,
        config.decomposition_samples,
        &config.solver,
        cache,
        master_seed,
    )?;
    let (hindsight, hindsight_stderr) =
        hindsight_bound(instance, config.hindsight_samples, master_seed)?;
    let (combined, combined_stderr) = if decomposition.value <= hindsight {
        (decomposition.value, decomposition.stderr)
    } else {
        (hindsight, hindsight_stderr)
    };
    Ok(BoundReport {
        per_feature_values: decomposition.per_feature_values,
        per_feature_stderrs: decomposition.per_feature_stderrs,
        decomposition_bound: decomposition.value,
        decomposition_stderr: decomposition.stderr,
        hindsight_bound: hindsight,
        hindsight_stderr,
        combined_bound: combined,
        combined_stderr,
        sample_count: config.decomposition_samples,
        hindsight_sample_count: config.hindsight_samples,
        low_sample_warning: config.decomposition_samples < LOW_SAMPLE_THRESHOLD
            || config.hindsight_samples < LOW_SAMPLE_THRESHOLD,
    })
}
