//! Forwarding decision rules behind a single interface.
//!
//! Five rules consume the current belief and an arriving item and return
//! forward or discard: myopic exploitation, a UCB rule, linear Thompson
//! sampling, and two decompose-then-decide rules that price exploration
//! either by the single-direction subproblem DP (DTDDP) or by scaling the
//! confidence bonus with the mean projection of future items onto the
//! current one (DTD-UCB).

use std::collections::HashMap;
use std::sync::{Arc, RwLock};

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::dp::{
    exploration_benefit, fingerprint, solve_subproblem, Fingerprint, GridConfig, SubproblemSpec,
    ValueGrid, DEFAULT_BETA_POINTS, DEFAULT_MAX_ITERATIONS, DEFAULT_MU_POINTS,
    DEFAULT_QUADRATURE_POINTS, DEFAULT_TOLERANCE,
};
use crate::error::{Error, Result};
use crate::model::{
    projection_distribution, FeatureVector, GaussianBelief, ItemDistribution, ProblemInstance,
    ProjectionDistribution, DEFAULT_PROJECTION_BINS,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Decision {
    Forward,
    Discard,
}

impl Decision {
    pub fn is_forward(self) -> bool {
        self == Decision::Forward
    }
}

fn decision(forward: bool) -> Decision {
    if forward {
        Decision::Forward
    } else {
        Decision::Discard
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PolicyKind {
    PureExploit,
    Ucb,
    Lts,
    Dtddp,
    DtdUcb,
}

impl PolicyKind {
    pub const ALL: [PolicyKind; 5] = [
        PolicyKind::PureExploit,
        PolicyKind::Ucb,
        PolicyKind::Lts,
        PolicyKind::Dtddp,
        PolicyKind::DtdUcb,
    ];

    /// Whether the rule consumes the tuning parameter alpha.
    pub fn uses_alpha(self) -> bool {
        matches!(
            self,
            PolicyKind::Ucb | PolicyKind::Dtddp | PolicyKind::DtdUcb
        )
    }

    pub fn label(self) -> &'static str {
        match self {
            PolicyKind::PureExploit => "pure_exploit",
            PolicyKind::Ucb => "ucb",
            PolicyKind::Lts => "lts",
            PolicyKind::Dtddp => "dtddp",
            PolicyKind::DtdUcb => "dtd_ucb",
        }
    }
}

/// Discretization and binning settings for the per-item subproblem DP.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SolverSettings {
    pub mu_points: usize,
    pub beta_points: usize,
    pub tolerance: f64,
    pub max_iterations: usize,
    pub quadrature_points: usize,
    /// Histogram bins for projection distributions of empirical item
    /// populations; exact laws of finite catalogs ignore this.
    pub projection_bins: usize,
}

impl Default for SolverSettings {
    fn default() -> Self {
        Self {
            mu_points: DEFAULT_MU_POINTS,
            beta_points: DEFAULT_BETA_POINTS,
            tolerance: DEFAULT_TOLERANCE,
            max_iterations: DEFAULT_MAX_ITERATIONS,
            quadrature_points: DEFAULT_QUADRATURE_POINTS,
            projection_bins: DEFAULT_PROJECTION_BINS,
        }
    }
}

/// One configured decision rule.
#[derive(Debug, Clone)]
pub struct PolicyConfig {
    pub kind: PolicyKind,
    /// Tuning parameter; ignored by pure exploitation and LTS.
    pub alpha: f64,
    pub solver: SolverSettings,
}

impl PolicyConfig {
    pub fn new(kind: PolicyKind) -> Self {
        Self {
            kind,
            alpha: 1.0,
            solver: SolverSettings::default(),
        }
    }

    pub fn with_alpha(kind: PolicyKind, alpha: f64) -> Result<Self> {
        let config = Self {
            kind,
            alpha,
            solver: SolverSettings::default(),
        };
        config.validate()?;
        Ok(config)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.alpha >= 0.0 && self.alpha.is_finite()) {
            return Err(Error::invalid("alpha", "must be finite and >= 0"));
        }
        Ok(())
    }
}

/// Key for memoized per-item projection data: exact bit pattern plus bin
/// count.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
struct ItemKey {
    bits: Vec<u64>,
    bins: usize,
}

impl ItemKey {
    fn new(item: &FeatureVector, bins: usize) -> Self {
        Self {
            bits: item.values().iter().map(|v| v.to_bits()).collect(),
            bins,
        }
    }
}

/// Shared cache of solved subproblem grids and per-item projection laws.
///
/// Lookups are exact-match, so cached and uncached runs make identical
/// decisions. Concurrent readers share entries; a miss solves outside the
/// lock and the first insert wins.
#[derive(Default)]
pub struct DpCache {
    grids: RwLock<HashMap<Fingerprint, Arc<ValueGrid>>>,
    projections: RwLock<HashMap<ItemKey, Arc<ProjectionDistribution>>>,
}

impl DpCache {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn grid_count(&self) -> usize {
        self.grids.read().expect("cache lock poisoned").len()
    }

    /// Returns the solved grid for (spec, config), solving on first use.
    pub fn grid_for(&self, spec: &SubproblemSpec, config: &GridConfig) -> Result<Arc<ValueGrid>> {
        let key = fingerprint(spec, config);
        if let Some(grid) = self.grids.read().expect("cache lock poisoned").get(&key) {
            return Ok(Arc::clone(grid));
        }
        let solved = Arc::new(solve_subproblem(spec, config)?);
        let mut grids = self.grids.write().expect("cache lock poisoned");
        Ok(Arc::clone(grids.entry(key).or_insert(solved)))
    }

    /// Projection law of future items onto `item`, memoized per item.
    pub fn projection_for(
        &self,
        item: &FeatureVector,
        items: &ItemDistribution,
        bins: usize,
    ) -> Result<Arc<ProjectionDistribution>> {
        let key = ItemKey::new(item, bins);
        if let Some(g) = self
            .projections
            .read()
            .expect("cache lock poisoned")
            .get(&key)
        {
            return Ok(Arc::clone(g));
        }
        let g = Arc::new(projection_distribution(item, items, bins)?);
        let mut projections = self.projections.write().expect("cache lock poisoned");
        Ok(Arc::clone(projections.entry(key).or_insert(g)))
    }
}

/// Everything a decision rule may consult besides the evolving belief.
pub struct PolicyContext<'a> {
    pub instance: &'a ProblemInstance,
    pub cache: &'a DpCache,
}

fn check_dims(belief: &GaussianBelief, item: &FeatureVector) -> Result<()> {
    if belief.dim() != item.dim() {
        return Err(Error::DimensionMismatch {
            expected: belief.dim(),
            got: item.dim(),
        });
    }
    Ok(())
}

/// Forward iff the posterior mean reward covers the cost (inclusive).
pub fn decide_pure_exploit(
    belief: &GaussianBelief,
    item: &FeatureVector,
    cost: f64,
) -> Result<Decision> {
    check_dims(belief, item)?;
    Ok(decision(belief.predicted_reward(item) >= cost))
}

/// Forward iff mean reward plus alpha posterior standard deviations covers
/// the cost (inclusive).
pub fn decide_ucb(
    belief: &GaussianBelief,
    item: &FeatureVector,
    cost: f64,
    alpha: f64,
) -> Result<Decision> {
    check_dims(belief, item)?;
    let bonus = alpha * belief.quadratic_form(item)?.sqrt();
    Ok(decision(belief.predicted_reward(item) + bonus >= cost))
}

/// Thompson sampling: forward iff a posterior draw of the reward strictly
/// exceeds the cost.
///
/// The reward projection of a posterior draw is N(X mu, X Sigma X'), so a
/// single scalar draw is sampled; the decision law is identical to drawing
/// a full preference vector and projecting it.
pub fn decide_lts<R: Rng + ?Sized>(
    belief: &GaussianBelief,
    item: &FeatureVector,
    cost: f64,
    rng: &mut R,
) -> Result<Decision> {
    check_dims(belief, item)?;
    let sd = belief.quadratic_form(item)?.sqrt();
    let z: f64 = rng.sample(StandardNormal);
    let draw = belief.predicted_reward(item) + sd * z;
    Ok(decision(draw > cost))
}

/// Grid configuration for the subproblem along `item`: mean range and base
/// precision come from the instance prior projected onto the item, so one
/// grid per item direction serves a whole episode.
fn subproblem_grid_config(
    instance: &ProblemInstance,
    item: &FeatureVector,
    settings: &SolverSettings,
) -> Result<GridConfig> {
    let mean = instance.prior.predicted_reward(item);
    let variance = instance.prior.quadratic_form(item)?;
    let mut config = GridConfig::for_prior(mean, variance)?;
    config.mu_points = settings.mu_points;
    config.beta_points = settings.beta_points;
    config.tolerance = settings.tolerance;
    config.max_iterations = settings.max_iterations;
    config.quadrature_points = settings.quadrature_points;
    Ok(config)
}

/// Decompose-then-decide with DP pricing: forward iff the projected mean
/// plus alpha times the exploration benefit strictly exceeds the cost.
pub fn decide_dtddp(
    belief: &GaussianBelief,
    item: &FeatureVector,
    instance: &ProblemInstance,
    alpha: f64,
    settings: &SolverSettings,
    cache: &DpCache,
) -> Result<Decision> {
    check_dims(belief, item)?;
    if item.nonzero_count() == 0 {
        return Err(Error::ZeroVector {
            context: None,
            reason: "cannot project onto an all-zero item",
        });
    }
    let mu = belief.predicted_reward(item);
    let sigma = belief.quadratic_form(item)?.sqrt();
    let g = cache.projection_for(item, &instance.items, settings.projection_bins)?;
    let spec = SubproblemSpec::new(
        instance.cost,
        instance.discount,
        instance.noise_scale,
        (*g).clone(),
    )?;
    let config = subproblem_grid_config(instance, item, settings)?;
    let grid = cache.grid_for(&spec, &config)?;
    let benefit = exploration_benefit(&grid, &spec, mu, sigma)?;
    Ok(decision(mu + alpha * benefit > instance.cost))
}

/// Decompose-then-decide UCB: forward iff mean reward plus the
/// mean-projection-scaled confidence bonus strictly exceeds the cost.
pub fn decide_dtducb(
    belief: &GaussianBelief,
    item: &FeatureVector,
    cost: f64,
    alpha: f64,
    items: &ItemDistribution,
    bins: usize,
) -> Result<Decision> {
    check_dims(belief, item)?;
    if item.nonzero_count() == 0 {
        return Err(Error::ZeroVector {
            context: None,
            reason: "cannot project onto an all-zero item",
        });
    }
    let mean_projection = projection_distribution(item, items, bins)?.mean();
    dtducb_with_mean(belief, item, cost, alpha, mean_projection)
}

fn dtducb_with_mean(
    belief: &GaussianBelief,
    item: &FeatureVector,
    cost: f64,
    alpha: f64,
    mean_projection: f64,
) -> Result<Decision> {
    let bonus = alpha * mean_projection * belief.quadratic_form(item)?.sqrt();
    Ok(decision(belief.predicted_reward(item) + bonus > cost))
}

/// Dispatches to the configured rule. Only LTS consumes randomness, so a
/// shared per-episode stream yields coupled comparisons across policies.
pub fn decide<R: Rng + ?Sized>(
    config: &PolicyConfig,
    ctx: &PolicyContext<'_>,
    belief: &GaussianBelief,
    item: &FeatureVector,
    rng: &mut R,
) -> Result<Decision> {
    config.validate()?;
    let cost = ctx.instance.cost;
    match config.kind {
        PolicyKind::PureExploit => decide_pure_exploit(belief, item, cost),
        PolicyKind::Ucb => decide_ucb(belief, item, cost, config.alpha),
        PolicyKind::Lts => decide_lts(belief, item, cost, rng),
        PolicyKind::Dtddp => decide_dtddp(
            belief,
            item,
            ctx.instance,
            config.alpha,
            &config.solver,
            ctx.cache,
        ),
        PolicyKind::DtdUcb => {
            check_dims(belief, item)?;
            if item.nonzero_count() == 0 {
                return Err(Error::ZeroVector {
                    context: None,
                    reason: "cannot project onto an all-zero item",
                });
            }
            let g = ctx.cache.projection_for(
                item,
                &ctx.instance.items,
                config.solver.projection_bins,
            )?;
            dtducb_with_mean(belief, item, cost, config.alpha, g.mean())
        }
    }
}
