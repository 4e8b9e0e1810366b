//! Experiment definitions: a strict TOML schema plus construction of the
//! runtime objects (instance, policies, bound settings) it describes.
//!
//! Unknown keys are rejected everywhere so a typo fails the run instead of
//! silently reverting to a default. The master seed is required; nothing
//! in an experiment may depend on wall-clock state.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::bound::{BoundConfig, DEFAULT_DECOMPOSITION_SAMPLES, DEFAULT_HINDSIGHT_SAMPLES};
use crate::error::{Error, Result};
use crate::model::{
    FeatureVector, GaussianBelief, ItemDistribution, ProblemInstance, COVARIANCE_REPAIR_EPS,
};
use crate::policy::{PolicyConfig, PolicyKind, SolverSettings};
use crate::prior_fit::{build_prior, fit_user_preferences, load_items, load_ratings};

/// Top-level experiment file.
#[derive(Debug, Clone, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub instance: InstanceConfig,
    #[serde(default)]
    pub policies: Vec<PolicyEntry>,
    pub execution: ExecutionConfig,
}

#[derive(Debug, Clone, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct InstanceConfig {
    /// Single forwarding cost; exclusive with `costs`.
    pub cost: Option<f64>,
    /// Cost list for sweeps; exclusive with `cost`.
    pub costs: Option<Vec<f64>>,
    /// Discount factor in (0, 1); exclusive with the rate pair.
    pub discount: Option<f64>,
    /// Item arrival rate; with `abandonment_rate` gives
    /// discount = arrival / (arrival + abandonment).
    pub arrival_rate: Option<f64>,
    pub abandonment_rate: Option<f64>,
    pub noise_scale: f64,
    #[serde(default = "default_horizon")]
    pub horizon: usize,
    pub prior: PriorConfig,
    pub items: ItemsConfig,
}

fn default_horizon() -> usize {
    100
}

/// Exactly one source must be set.
#[derive(Debug, Clone, Default, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct PriorConfig {
    pub iid: Option<IidPrior>,
    pub inline: Option<InlinePrior>,
    pub fit: Option<FitPrior>,
}

#[derive(Debug, Clone, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct IidPrior {
    pub k: usize,
    pub mean: f64,
    pub variance: f64,
}

#[derive(Debug, Clone, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct InlinePrior {
    pub mean: Vec<f64>,
    pub covariance: Vec<Vec<f64>>,
}

#[derive(Debug, Clone, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct FitPrior {
    pub items_csv: PathBuf,
    pub ratings_csv: PathBuf,
    #[serde(default)]
    pub ridge: f64,
    pub repair_eps: Option<f64>,
}

/// Exactly one source must be set.
#[derive(Debug, Clone, Default, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct ItemsConfig {
    pub catalog: Option<CatalogItems>,
    pub basis: Option<BasisItems>,
    pub csv: Option<CsvItems>,
}

#[derive(Debug, Clone, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct CatalogItems {
    pub members: Vec<Vec<f64>>,
    /// Uniform when omitted.
    pub probabilities: Option<Vec<f64>>,
}

/// The k basis vectors as the catalog; a compact spelling for
/// one-feature-per-item populations.
#[derive(Debug, Clone, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct BasisItems {
    pub k: usize,
    /// Uniform when omitted.
    pub probabilities: Option<Vec<f64>>,
}

/// Empirical population from an `item_id,f1,...,fk` CSV, uniform over rows.
#[derive(Debug, Clone, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct CsvItems {
    pub path: PathBuf,
}

#[derive(Debug, Clone, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct PolicyEntry {
    pub kind: PolicyKind,
    #[serde(default = "default_alpha")]
    pub alpha: f64,
}

fn default_alpha() -> f64 {
    1.0
}

#[derive(Debug, Clone, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct ExecutionConfig {
    /// Master seed; required so reruns are reproducible by construction.
    pub seed: u64,
    #[serde(default = "default_episodes")]
    pub episodes: usize,
    #[serde(default = "default_decomposition_samples")]
    pub decomposition_samples: usize,
    #[serde(default = "default_hindsight_samples")]
    pub hindsight_samples: usize,
    /// Replaces the default 10-point log-spaced tuning grid when set.
    pub alpha_grid: Option<Vec<f64>>,
    pub output: Option<PathBuf>,
    /// Worker thread count; the INFOFILTER_THREADS environment variable
    /// takes precedence.
    pub parallelism: Option<usize>,
    #[serde(default)]
    pub solver: SolverSettings,
}

fn default_episodes() -> usize {
    1000
}

fn default_decomposition_samples() -> usize {
    DEFAULT_DECOMPOSITION_SAMPLES
}

fn default_hindsight_samples() -> usize {
    DEFAULT_HINDSIGHT_SAMPLES
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<()> {
        let inst = &self.instance;
        match (&inst.cost, &inst.costs) {
            (Some(_), Some(_)) => {
                return Err(Error::config(
                    "instance: set exactly one of cost and costs, not both",
                ))
            }
            (None, None) => {
                return Err(Error::config("instance: one of cost or costs is required"))
            }
            (None, Some(costs)) if costs.is_empty() => {
                return Err(Error::config("instance.costs: must be nonempty"))
            }
            _ => {}
        }
        for &c in self.costs() {
            if !(c >= 0.0 && c.is_finite()) {
                return Err(Error::config(format!(
                    "instance.costs: {c} is not a finite nonnegative cost"
                )));
            }
        }
        match (inst.discount, inst.arrival_rate, inst.abandonment_rate) {
            (Some(d), None, None) => {
                if !(d > 0.0 && d < 1.0) {
                    return Err(Error::config(format!(
                        "instance.discount: {d} must lie strictly inside (0, 1)"
                    )));
                }
            }
            (None, Some(a), Some(r)) => {
                if !(a > 0.0 && a.is_finite() && r > 0.0 && r.is_finite()) {
                    return Err(Error::config(
                        "instance.arrival_rate and abandonment_rate must be finite and > 0",
                    ));
                }
            }
            _ => {
                return Err(Error::config(
                    "instance: set either discount or both arrival_rate and abandonment_rate",
                ))
            }
        }
        let prior_sources = [
            inst.prior.iid.is_some(),
            inst.prior.inline.is_some(),
            inst.prior.fit.is_some(),
        ]
        .iter()
        .filter(|&&s| s)
        .count();
        if prior_sources != 1 {
            return Err(Error::config(
                "instance.prior: exactly one of iid, inline, fit must be set",
            ));
        }
        let item_sources = [
            inst.items.catalog.is_some(),
            inst.items.basis.is_some(),
            inst.items.csv.is_some(),
        ]
        .iter()
        .filter(|&&s| s)
        .count();
        if item_sources != 1 {
            return Err(Error::config(
                "instance.items: exactly one of catalog, basis, csv must be set",
            ));
        }
        for entry in &self.policies {
            if !(entry.alpha >= 0.0 && entry.alpha.is_finite()) {
                return Err(Error::config(format!(
                    "policies: alpha {} must be finite and >= 0",
                    entry.alpha
                )));
            }
        }
        let exec = &self.execution;
        if exec.episodes < 2 {
            return Err(Error::config("execution.episodes: must be >= 2"));
        }
        if exec.decomposition_samples == 0 || exec.hindsight_samples == 0 {
            return Err(Error::config("execution sample counts must be >= 1"));
        }
        if let Some(grid) = &exec.alpha_grid {
            if grid.is_empty() {
                return Err(Error::config("execution.alpha_grid: must be nonempty"));
            }
            if grid.iter().any(|a| !(*a >= 0.0 && a.is_finite())) {
                return Err(Error::config(
                    "execution.alpha_grid: entries must be finite and >= 0",
                ));
            }
        }
        if let Some(p) = exec.parallelism {
            if p == 0 {
                return Err(Error::config("execution.parallelism: must be >= 1"));
            }
        }
        Ok(())
    }

    /// All configured costs, regardless of which spelling was used.
    pub fn costs(&self) -> &[f64] {
        match (&self.instance.cost, &self.instance.costs) {
            (Some(c), _) => std::slice::from_ref(c),
            (None, Some(cs)) => cs,
            (None, None) => &[],
        }
    }

    /// The single configured cost; errors when a sweep list was given.
    pub fn single_cost(&self) -> Result<f64> {
        match self.costs() {
            [c] => Ok(*c),
            _ => Err(Error::config(
                "this subcommand needs a single cost; got a cost list",
            )),
        }
    }

    pub fn discount(&self) -> f64 {
        match self.instance.discount {
            Some(d) => d,
            None => {
                let a = self.instance.arrival_rate.expect("validated");
                let r = self.instance.abandonment_rate.expect("validated");
                a / (a + r)
            }
        }
    }
}

/// Parses and validates an experiment file. TOML errors already carry
/// field paths; validation errors name the offending block.
pub fn parse_config(path: &Path) -> Result<ExperimentConfig> {
    let raw = std::fs::read_to_string(path)?;
    let config: ExperimentConfig =
        toml::from_str(&raw).map_err(|e| Error::config(format!("{}: {e}", path.display())))?;
    config.validate()?;
    Ok(config)
}

/// Runtime objects built from a validated config.
pub struct BuiltExperiment {
    /// Instance at the first configured cost; sweeps rebuild per cost.
    pub instance: ProblemInstance,
    pub costs: Vec<f64>,
    pub policies: Vec<PolicyConfig>,
    /// Fitted ground-truth preference vectors when the prior came from
    /// ratings data; episodes then cycle these instead of sampling the
    /// prior.
    pub fitted_thetas: Option<Vec<Vec<f64>>>,
    pub bound: BoundConfig,
    pub episodes: usize,
    pub seed: u64,
    pub alpha_grid: Option<Vec<f64>>,
}

fn build_prior_source(prior: &PriorConfig) -> Result<(GaussianBelief, Option<Vec<Vec<f64>>>)> {
    if let Some(iid) = &prior.iid {
        return Ok((GaussianBelief::iid(iid.k, iid.mean, iid.variance)?, None));
    }
    if let Some(inline) = &prior.inline {
        return Ok((
            GaussianBelief::new(inline.mean.clone(), inline.covariance.clone())?,
            None,
        ));
    }
    let fit = prior.fit.as_ref().expect("validated: one source set");
    let data = load_ratings(&fit.items_csv, &fit.ratings_csv)?;
    let fitted = fit_user_preferences(&data, fit.ridge)?;
    let prior = build_prior(&fitted, fit.repair_eps.unwrap_or(COVARIANCE_REPAIR_EPS))?;
    Ok((prior, Some(fitted.thetas())))
}

fn build_items(items: &ItemsConfig) -> Result<ItemDistribution> {
    if let Some(catalog) = &items.catalog {
        let members: Vec<FeatureVector> = catalog
            .members
            .iter()
            .map(|m| FeatureVector::new(m.clone()))
            .collect::<Result<_>>()?;
        let probabilities = match &catalog.probabilities {
            Some(p) => p.clone(),
            None => vec![1.0 / members.len().max(1) as f64; members.len()],
        };
        return ItemDistribution::catalog(members, probabilities);
    }
    if let Some(basis) = &items.basis {
        let members: Vec<FeatureVector> = (0..basis.k)
            .map(|j| FeatureVector::basis(basis.k, j))
            .collect();
        let probabilities = match &basis.probabilities {
            Some(p) => p.clone(),
            None => vec![1.0 / basis.k.max(1) as f64; basis.k],
        };
        return ItemDistribution::catalog(members, probabilities);
    }
    let csv = items.csv.as_ref().expect("validated: one source set");
    let (map, _k) = load_items(&csv.path)?;
    ItemDistribution::empirical(map.into_values().collect())
}

/// Builds the instance, policies, and bound settings a subcommand needs.
pub fn build_experiment(config: &ExperimentConfig) -> Result<BuiltExperiment> {
    config.validate()?;
    let (prior, fitted_thetas) = build_prior_source(&config.instance.prior)?;
    let items = build_items(&config.instance.items)?;
    let costs: Vec<f64> = config.costs().to_vec();
    let instance = ProblemInstance::new(
        costs[0],
        config.discount(),
        config.instance.noise_scale,
        prior,
        items,
        config.instance.horizon,
    )?;
    let solver = config.execution.solver.clone();
    let policies = config
        .policies
        .iter()
        .map(|entry| {
            let policy = PolicyConfig {
                kind: entry.kind,
                alpha: entry.alpha,
                solver: solver.clone(),
            };
            policy.validate().map(|()| policy)
        })
        .collect::<Result<_>>()?;
    Ok(BuiltExperiment {
        instance,
        costs,
        policies,
        fitted_thetas,
        bound: BoundConfig {
            decomposition_samples: config.execution.decomposition_samples,
            hindsight_samples: config.execution.hindsight_samples,
            solver,
        },
        episodes: config.execution.episodes,
        seed: config.execution.seed,
        alpha_grid: config.execution.alpha_grid.clone(),
    })
}
