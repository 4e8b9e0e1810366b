//! Episode simulation, value estimation, alpha tuning, and cost sweeps.
//!
//! An episode presents a stream of sampled items to a policy that starts
//! from the instance prior and learns only from forwarded items. Two
//! horizon conventions are provided: the discounted infinite-horizon form
//! (truncated at the instance horizon) and the random geometric-lifetime
//! form; their value estimates agree in expectation. All randomness flows
//! through named substreams of one master seed, so runs are reproducible
//! and policies compared at the same seed face identical item and noise
//! sequences.

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Geometric, StandardNormal};
use rayon::prelude::*;
use serde::Serialize;

use crate::bound::{combined_bound, mean_and_stderr, BoundConfig};
use crate::error::{Error, Result};
use crate::model::{MultivariateNormalSampler, ProblemInstance};
use crate::policy::{
    decide, Decision, DpCache, PolicyConfig, PolicyContext, PolicyKind, SolverSettings,
};
use crate::rng::{substream, tag};

/// Number of points in the tuning grid for alpha.
pub const ALPHA_GRID_SIZE: usize = 10;
/// Means closer than this tie in `tune_alpha`; the smaller alpha wins.
pub const ALPHA_TIE_TOLERANCE: f64 = 1e-12;

/// One simulated step, recorded when tracing is enabled.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TraceStep {
    /// Index into the item distribution's member list.
    pub item_index: usize,
    pub decision: Decision,
    /// Observed reward; `None` when the item was discarded.
    pub reward: Option<f64>,
}

/// Outcome of one simulated episode.
#[derive(Debug, Clone, PartialEq)]
pub struct EpisodeResult {
    /// Total accrued net reward. Discounted episodes weight step n by
    /// gamma^n; geometric episodes sum undiscounted over the random
    /// lifetime, which has the same expectation.
    pub discounted_reward: f64,
    pub forward_count: usize,
    pub trace: Option<Vec<TraceStep>>,
}

/// Named RNG substreams for one episode. Items and noise are policy
/// independent, so different policies replayed at the same master seed see
/// the same stream of items and the same noise realizations.
pub struct EpisodeStreams {
    pub items: ChaCha8Rng,
    pub noise: ChaCha8Rng,
    pub policy: ChaCha8Rng,
    pub horizon: ChaCha8Rng,
}

impl EpisodeStreams {
    pub fn for_episode(master_seed: u64, episode: u64) -> Self {
        Self {
            items: substream(master_seed, &[tag::ITEMS, episode]),
            noise: substream(master_seed, &[tag::NOISE, episode]),
            policy: substream(master_seed, &[tag::POLICY, episode]),
            horizon: substream(master_seed, &[tag::HORIZON, episode]),
        }
    }
}

fn check_theta(instance: &ProblemInstance, theta: &[f64]) -> Result<()> {
    if theta.len() != instance.k {
        return Err(Error::DimensionMismatch {
            expected: instance.k,
            got: theta.len(),
        });
    }
    Ok(())
}

/// Core step loop shared by both horizon conventions: geometric discounting
/// when `discounted`, unit weights otherwise (the caller then stops after a
/// sampled lifetime instead of the full horizon).
#[allow(clippy::too_many_arguments)]
fn run_steps(
    instance: &ProblemInstance,
    policy: &PolicyConfig,
    cache: &DpCache,
    theta: &[f64],
    streams: &mut EpisodeStreams,
    steps: usize,
    discounted: bool,
    record_trace: bool,
) -> Result<EpisodeResult> {
    check_theta(instance, theta)?;
    let ctx = PolicyContext { instance, cache };
    let mut belief = instance.prior.clone();
    let mut weight = if discounted { instance.discount } else { 1.0 };
    let mut total = 0.0;
    let mut forward_count = 0;
    let mut trace = record_trace.then(|| Vec::with_capacity(steps));
    for _ in 0..steps {
        let idx = instance.items.sample_index(&mut streams.items);
        let item = &instance.items.members()[idx];
        // Noise is drawn every step, forwarded or not, so coupled policies
        // facing the same streams see identical futures regardless of
        // their past decisions.
        let z: f64 = streams.noise.sample(StandardNormal);
        let decision = decide(policy, &ctx, &belief, item, &mut streams.policy)?;
        let mut reward = None;
        if decision.is_forward() {
            let sd = instance.noise_scale * (item.nonzero_count() as f64).sqrt();
            let y = item.dot(theta) + sd * z;
            total += weight * (y - instance.cost);
            forward_count += 1;
            belief.update_in_place(item, y, instance.noise_scale);
            reward = Some(y);
        }
        if discounted {
            weight *= instance.discount;
        }
        if let Some(t) = trace.as_mut() {
            t.push(TraceStep {
                item_index: idx,
                decision,
                reward,
            });
        }
    }
    Ok(EpisodeResult {
        discounted_reward: total,
        forward_count,
        trace,
    })
}

/// Discounted episode: runs `horizon_truncation` steps, accruing
/// gamma^n (Y_n - c) for each forwarded item (n starts at 1).
pub fn run_episode(
    instance: &ProblemInstance,
    policy: &PolicyConfig,
    cache: &DpCache,
    theta: &[f64],
    streams: &mut EpisodeStreams,
    record_trace: bool,
) -> Result<EpisodeResult> {
    run_steps(
        instance,
        policy,
        cache,
        theta,
        streams,
        instance.horizon_truncation,
        true,
        record_trace,
    )
}

/// Draws the random lifetime N with survival P(N >= n) = gamma^n
/// (support {0, 1, 2, ...}, mean gamma / (1 - gamma)).
pub fn sample_geometric_horizon<R: Rng + ?Sized>(discount: f64, rng: &mut R) -> Result<u64> {
    let geometric = Geometric::new(1.0 - discount)
        .map_err(|_| Error::invalid("discount", "must lie in (0, 1)"))?;
    Ok(geometric.sample(rng))
}

/// Geometric-lifetime episode: draws N, runs N undiscounted steps (capped
/// at `horizon_truncation`), and sums net rewards. The expectation over N
/// equals the discounted objective.
pub fn run_geometric_episode(
    instance: &ProblemInstance,
    policy: &PolicyConfig,
    cache: &DpCache,
    theta: &[f64],
    streams: &mut EpisodeStreams,
    record_trace: bool,
) -> Result<EpisodeResult> {
    let lifetime = sample_geometric_horizon(instance.discount, &mut streams.horizon)?;
    let steps = (lifetime.min(instance.horizon_truncation as u64)) as usize;
    run_steps(
        instance,
        policy,
        cache,
        theta,
        streams,
        steps,
        false,
        record_trace,
    )
}

/// Where episode ground-truth preference vectors come from.
#[derive(Clone, Copy)]
pub enum ThetaSource<'a> {
    /// Independent draw from the instance prior per episode.
    Prior,
    /// Fitted preference vectors, cycled in order across episodes.
    List(&'a [Vec<f64>]),
}

/// Sample mean with a normal-approximation 95% confidence interval.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ValueEstimate {
    pub mean: f64,
    pub stderr: f64,
    pub ci95_low: f64,
    pub ci95_high: f64,
    pub episodes: usize,
}

impl ValueEstimate {
    pub fn from_samples(values: &[f64]) -> Self {
        let (mean, stderr) = mean_and_stderr(values);
        Self {
            mean,
            stderr,
            ci95_low: mean - 1.96 * stderr,
            ci95_high: mean + 1.96 * stderr,
            episodes: values.len(),
        }
    }
}

fn episode_values(
    instance: &ProblemInstance,
    policy: &PolicyConfig,
    cache: &DpCache,
    episodes: usize,
    source: ThetaSource<'_>,
    master_seed: u64,
    geometric: bool,
) -> Result<Vec<f64>> {
    if episodes < 2 {
        return Err(Error::invalid("episodes", "must be >= 2"));
    }
    policy.validate()?;
    let sampler = match source {
        ThetaSource::Prior => Some(MultivariateNormalSampler::new(&instance.prior)?),
        ThetaSource::List(list) => {
            if list.is_empty() {
                return Err(Error::invalid("theta_list", "must be nonempty"));
            }
            for theta in list {
                check_theta(instance, theta)?;
            }
            None
        }
    };
    (0..episodes)
        .into_par_iter()
        .map(|e| {
            let theta: Vec<f64> = match source {
                ThetaSource::Prior => {
                    let mut rng = substream(master_seed, &[tag::THETA, e as u64]);
                    sampler
                        .as_ref()
                        .expect("sampler present for prior source")
                        .sample(&mut rng)
                        .as_slice()
                        .to_vec()
                }
                ThetaSource::List(list) => list[e % list.len()].clone(),
            };
            let mut streams = EpisodeStreams::for_episode(master_seed, e as u64);
            let result = if geometric {
                run_geometric_episode(instance, policy, cache, &theta, &mut streams, false)?
            } else {
                run_episode(instance, policy, cache, &theta, &mut streams, false)?
            };
            Ok(result.discounted_reward)
        })
        .collect()
}

/// Estimates a policy's discounted value by averaging independent episodes.
pub fn estimate_policy_value(
    instance: &ProblemInstance,
    policy: &PolicyConfig,
    cache: &DpCache,
    episodes: usize,
    source: ThetaSource<'_>,
    master_seed: u64,
) -> Result<ValueEstimate> {
    let values = episode_values(
        instance,
        policy,
        cache,
        episodes,
        source,
        master_seed,
        false,
    )?;
    Ok(ValueEstimate::from_samples(&values))
}

/// Estimates the same quantity through geometric-lifetime episodes; used to
/// validate the discounted transform.
pub fn estimate_policy_value_geometric(
    instance: &ProblemInstance,
    policy: &PolicyConfig,
    cache: &DpCache,
    episodes: usize,
    source: ThetaSource<'_>,
    master_seed: u64,
) -> Result<ValueEstimate> {
    let values = episode_values(instance, policy, cache, episodes, source, master_seed, true)?;
    Ok(ValueEstimate::from_samples(&values))
}

/// The tuning grid: 10 log-spaced values from 0.1 to 10.
pub fn alpha_grid() -> Vec<f64> {
    (1..=ALPHA_GRID_SIZE)
        .map(|i| 10f64.powf(-1.0 + 2.0 * (i as f64 - 1.0) / 9.0))
        .collect()
}

/// Evaluates every alpha in `grid` with common random numbers and returns
/// the argmax by mean together with the full table. Ties within
/// `ALPHA_TIE_TOLERANCE` resolve to the smallest alpha.
#[allow(clippy::too_many_arguments)]
pub fn tune_alpha_over(
    instance: &ProblemInstance,
    kind: PolicyKind,
    solver: &SolverSettings,
    cache: &DpCache,
    episodes_per_alpha: usize,
    source: ThetaSource<'_>,
    grid: &[f64],
    master_seed: u64,
) -> Result<(f64, Vec<(f64, ValueEstimate)>)> {
    if !kind.uses_alpha() {
        return Err(Error::invalid("policy_kind", "has no tuning parameter"));
    }
    if grid.is_empty() {
        return Err(Error::invalid("alpha_grid", "must be nonempty"));
    }
    let mut table = Vec::with_capacity(grid.len());
    for &alpha in grid {
        let policy = PolicyConfig {
            kind,
            alpha,
            solver: solver.clone(),
        };
        policy.validate()?;
        let est = estimate_policy_value(
            instance,
            &policy,
            cache,
            episodes_per_alpha,
            source,
            master_seed,
        )?;
        table.push((alpha, est));
    }
    let mut best = table[0];
    for &(alpha, est) in &table[1..] {
        if est.mean > best.1.mean + ALPHA_TIE_TOLERANCE {
            best = (alpha, est);
        }
    }
    Ok((best.0, table))
}

/// [`tune_alpha_over`] on the default log-spaced grid.
pub fn tune_alpha(
    instance: &ProblemInstance,
    kind: PolicyKind,
    solver: &SolverSettings,
    cache: &DpCache,
    episodes_per_alpha: usize,
    source: ThetaSource<'_>,
    master_seed: u64,
) -> Result<(f64, Vec<(f64, ValueEstimate)>)> {
    tune_alpha_over(
        instance,
        kind,
        solver,
        cache,
        episodes_per_alpha,
        source,
        &alpha_grid(),
        master_seed,
    )
}

/// One row of the flat results table written by experiment runs.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepRow {
    pub experiment: String,
    pub cost: f64,
    pub policy: String,
    /// Tuned or configured alpha; empty for rules without one and for
    /// bound rows.
    pub alpha: Option<f64>,
    pub mean: f64,
    pub stderr: f64,
    pub ci_low: f64,
    pub ci_high: f64,
    /// Row kind: "policy", "decomposition_bound", "hindsight_bound", or
    /// "combined_bound".
    pub kind: String,
}

/// Everything a cost sweep needs besides the instance and the cache.
pub struct SweepConfig<'a> {
    pub experiment: &'a str,
    pub kinds: &'a [PolicyKind],
    pub costs: &'a [f64],
    /// Episodes per (policy, alpha, cost) estimate.
    pub episodes: usize,
    pub solver: SolverSettings,
    pub bound: BoundConfig,
    pub source: ThetaSource<'a>,
    /// Replaces the default tuning grid when set.
    pub alpha_grid: Option<Vec<f64>>,
}

/// Runs the full experiment: at each cost, tunes alpha where applicable,
/// estimates every policy with common random numbers, and appends the
/// combined upper bound. Row order is cost-major with the bound row last.
pub fn run_cost_sweep(
    instance: &ProblemInstance,
    sweep: &SweepConfig<'_>,
    cache: &DpCache,
    master_seed: u64,
) -> Result<Vec<SweepRow>> {
    if sweep.kinds.is_empty() {
        return Err(Error::invalid("policies", "must be nonempty"));
    }
    if sweep.costs.is_empty() {
        return Err(Error::invalid("costs", "must be nonempty"));
    }
    let grid = sweep.alpha_grid.clone().unwrap_or_else(alpha_grid);
    let mut rows = Vec::with_capacity(sweep.costs.len() * (sweep.kinds.len() + 1));
    for &cost in sweep.costs {
        let at_cost = instance.with_cost(cost)?;
        for &kind in sweep.kinds {
            let (alpha, est) = if kind.uses_alpha() {
                let (best, table) = tune_alpha_over(
                    &at_cost,
                    kind,
                    &sweep.solver,
                    cache,
                    sweep.episodes,
                    sweep.source,
                    &grid,
                    master_seed,
                )?;
                let est = table
                    .iter()
                    .find(|(a, _)| *a == best)
                    .expect("tuned alpha comes from the table")
                    .1;
                (Some(best), est)
            } else {
                let policy = PolicyConfig {
                    kind,
                    alpha: 1.0,
                    solver: sweep.solver.clone(),
                };
                let est = estimate_policy_value(
                    &at_cost,
                    &policy,
                    cache,
                    sweep.episodes,
                    sweep.source,
                    master_seed,
                )?;
                (None, est)
            };
            rows.push(SweepRow {
                experiment: sweep.experiment.to_string(),
                cost,
                policy: kind.label().to_string(),
                alpha,
                mean: est.mean,
                stderr: est.stderr,
                ci_low: est.ci95_low,
                ci_high: est.ci95_high,
                kind: "policy".to_string(),
            });
        }
        let report = combined_bound(&at_cost, &sweep.bound, cache, master_seed)?;
        rows.push(SweepRow {
            experiment: sweep.experiment.to_string(),
            cost,
            policy: "bound".to_string(),
            alpha: None,
            mean: report.combined_bound,
            stderr: report.combined_stderr,
            ci_low: report.combined_bound - 1.96 * report.combined_stderr,
            ci_high: report.combined_bound + 1.96 * report.combined_stderr,
            kind: "combined_bound".to_string(),
        });
    }
    Ok(rows)
}

/// Value contributed by steps beyond the truncation horizon, bounded by
/// gamma^T / (1 - gamma) times a second-moment bound on E|Y - c|.
pub fn truncation_tail_bound(instance: &ProblemInstance) -> Result<f64> {
    let mut moment = 0.0;
    for (item, p) in instance
        .items
        .members()
        .iter()
        .zip(instance.items.weights())
    {
        let m = instance.prior.predicted_reward(item) - instance.cost;
        let v = instance.prior.quadratic_form(item)?
            + item.nonzero_count() as f64 * instance.noise_scale * instance.noise_scale;
        moment += p * (m * m + v).sqrt();
    }
    let gamma = instance.discount;
    Ok(gamma.powi(instance.horizon_truncation as i32) / (1.0 - gamma) * moment)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{FeatureVector, GaussianBelief, ItemDistribution};
    use approx::assert_abs_diff_eq;

    fn point_mass_instance(cost: f64, mean: f64, variance: f64, noise: f64) -> ProblemInstance {
        ProblemInstance::new(
            cost,
            0.9,
            noise,
            GaussianBelief::iid(1, mean, variance).unwrap(),
            ItemDistribution::catalog(vec![FeatureVector::basis(1, 0)], vec![1.0]).unwrap(),
            100,
        )
        .unwrap()
    }

    fn exploit() -> PolicyConfig {
        PolicyConfig::new(PolicyKind::PureExploit)
    }

    #[test]
    fn unreachable_cost_episode_is_empty() {
        let instance = point_mass_instance(1e9, 0.5, 1.0, 0.1);
        let cache = DpCache::new();
        let mut streams = EpisodeStreams::for_episode(1, 0);
        let result =
            run_episode(&instance, &exploit(), &cache, &[0.5], &mut streams, true).unwrap();
        assert_eq!(result.discounted_reward, 0.0);
        assert_eq!(result.forward_count, 0);
        let trace = result.trace.unwrap();
        assert_eq!(trace.len(), 100);
        assert!(trace
            .iter()
            .all(|s| s.decision == Decision::Discard && s.reward.is_none()));
    }

    #[test]
    fn known_preference_episode_matches_geometric_series() {
        // Point-mass prior equal to theta, near-noiseless observation:
        // every step forwards at net 0.2, so the discounted total is
        // 0.9 * 0.2 * (1 - 0.9^100) / 0.1.
        let instance = point_mass_instance(0.3, 0.5, 0.0, 1e-6);
        let cache = DpCache::new();
        let mut streams = EpisodeStreams::for_episode(5, 0);
        let result =
            run_episode(&instance, &exploit(), &cache, &[0.5], &mut streams, false).unwrap();
        let expected = 1.8 * (1.0 - 0.9f64.powi(100));
        assert_abs_diff_eq!(result.discounted_reward, expected, epsilon = 1e-3);
        assert_eq!(result.forward_count, 100);
    }

    #[test]
    fn episodes_replay_identically() {
        let instance = point_mass_instance(0.3, 0.3, 1.0, 0.1);
        let cache = DpCache::new();
        let run = || {
            let mut streams = EpisodeStreams::for_episode(42, 7);
            run_episode(&instance, &exploit(), &cache, &[0.4], &mut streams, true).unwrap()
        };
        assert_eq!(run(), run());
    }

    #[test]
    fn item_streams_are_policy_independent() {
        let instance = ProblemInstance::new(
            0.3,
            0.9,
            0.1,
            GaussianBelief::iid(2, 0.3, 1.0).unwrap(),
            ItemDistribution::catalog(
                vec![FeatureVector::basis(2, 0), FeatureVector::basis(2, 1)],
                vec![0.5, 0.5],
            )
            .unwrap(),
            50,
        )
        .unwrap();
        let cache = DpCache::new();
        let trace_of = |policy: &PolicyConfig| {
            let mut streams = EpisodeStreams::for_episode(9, 3);
            run_episode(&instance, policy, &cache, &[0.6, 0.1], &mut streams, true)
                .unwrap()
                .trace
                .unwrap()
        };
        let a = trace_of(&exploit());
        let b = trace_of(&PolicyConfig::new(PolicyKind::Lts));
        let items_a: Vec<usize> = a.iter().map(|s| s.item_index).collect();
        let items_b: Vec<usize> = b.iter().map(|s| s.item_index).collect();
        assert_eq!(items_a, items_b);
        // Coupled noise: whenever both forwarded, the observed reward is
        // identical.
        for (sa, sb) in a.iter().zip(&b) {
            if let (Some(ra), Some(rb)) = (sa.reward, sb.reward) {
                assert_eq!(ra, rb);
            }
        }
    }

    #[test]
    fn geometric_horizon_mean_matches_convention() {
        // Survival P(N >= n) = 0.9^n gives mean 9 and variance 90.
        let mut rng = substream(11, &[tag::HORIZON]);
        let n = 100_000;
        let mean = (0..n)
            .map(|_| sample_geometric_horizon(0.9, &mut rng).unwrap() as f64)
            .sum::<f64>()
            / n as f64;
        let three_sigma = 3.0 * 90f64.sqrt() / (n as f64).sqrt();
        assert!((mean - 9.0).abs() < three_sigma, "mean {mean}");
    }

    #[test]
    fn geometric_episode_with_unreachable_cost_is_zero() {
        let instance = point_mass_instance(1e9, 0.5, 1.0, 0.1);
        let cache = DpCache::new();
        for e in 0..20 {
            let mut streams = EpisodeStreams::for_episode(3, e);
            let result =
                run_geometric_episode(&instance, &exploit(), &cache, &[0.5], &mut streams, false)
                    .unwrap();
            assert_eq!(result.discounted_reward, 0.0);
        }
    }

    #[test]
    fn geometric_and_discounted_estimates_agree() {
        let instance = ProblemInstance::new(
            0.2,
            0.8,
            0.1,
            GaussianBelief::iid(1, 0.3, 1.0).unwrap(),
            ItemDistribution::catalog(vec![FeatureVector::basis(1, 0)], vec![1.0]).unwrap(),
            200,
        )
        .unwrap();
        let cache = DpCache::new();
        let policy = exploit();
        let episodes = 4000;
        let d = estimate_policy_value(&instance, &policy, &cache, episodes, ThetaSource::Prior, 21)
            .unwrap();
        let g = estimate_policy_value_geometric(
            &instance,
            &policy,
            &cache,
            episodes,
            ThetaSource::Prior,
            21,
        )
        .unwrap();
        let pooled = (d.stderr.powi(2) + g.stderr.powi(2)).sqrt();
        assert!(
            (d.mean - g.mean).abs() <= 3.0 * pooled,
            "discounted {} geometric {} pooled {pooled}",
            d.mean,
            g.mean
        );
    }

    #[test]
    fn estimates_are_deterministic_under_parallelism() {
        let instance = point_mass_instance(0.3, 0.3, 1.0, 0.1);
        let cache = DpCache::new();
        let policy = PolicyConfig::new(PolicyKind::Lts);
        let run = || {
            estimate_policy_value(&instance, &policy, &cache, 500, ThetaSource::Prior, 77).unwrap()
        };
        assert_eq!(run(), run());
    }

    #[test]
    fn fixed_theta_list_cycles_and_matches_closed_form() {
        let instance = point_mass_instance(0.3, 0.5, 0.0, 1e-6);
        let cache = DpCache::new();
        let thetas = vec![vec![0.5]];
        let est = estimate_policy_value(
            &instance,
            &exploit(),
            &cache,
            10,
            ThetaSource::List(&thetas),
            1,
        )
        .unwrap();
        assert_abs_diff_eq!(est.mean, 1.8 * (1.0 - 0.9f64.powi(100)), epsilon = 1e-3);
        assert!(est.stderr < 1e-4);
        assert_eq!(est.episodes, 10);
    }

    #[test]
    fn stderr_shrinks_with_episode_count() {
        let instance = point_mass_instance(0.2, 0.3, 1.0, 0.1);
        let cache = DpCache::new();
        let at = |episodes| {
            estimate_policy_value(
                &instance,
                &exploit(),
                &cache,
                episodes,
                ThetaSource::Prior,
                5,
            )
            .unwrap()
            .stderr
        };
        let ratio = at(2000) / at(1000);
        let expected = 1.0 / 2f64.sqrt();
        assert!(
            (ratio - expected).abs() < 0.2 * expected,
            "ratio {ratio} expected {expected}"
        );
    }

    #[test]
    fn ci_is_mean_plus_minus_1_96_stderr() {
        let est = ValueEstimate::from_samples(&[1.0, 2.0, 3.0, 4.0]);
        assert_abs_diff_eq!(est.ci95_low, est.mean - 1.96 * est.stderr, epsilon = 1e-15);
        assert_abs_diff_eq!(est.ci95_high, est.mean + 1.96 * est.stderr, epsilon = 1e-15);
        assert_eq!(est.episodes, 4);
    }

    #[test]
    fn alpha_grid_spans_a_decade_each_way() {
        let grid = alpha_grid();
        assert_eq!(grid.len(), 10);
        assert_abs_diff_eq!(grid[0], 0.1, epsilon = 1e-12);
        assert_abs_diff_eq!(grid[9], 10.0, epsilon = 1e-12);
        assert_abs_diff_eq!(grid[4], 10f64.powf(-1.0 + 8.0 / 9.0), epsilon = 1e-12);
        assert_abs_diff_eq!(grid[4], 0.7743, epsilon = 1e-4);
        assert!(grid.windows(2).all(|w| w[0] < w[1]));
    }

    #[test]
    fn tune_alpha_breaks_ties_toward_smallest() {
        // Point-mass prior: the UCB bonus is zero at every alpha, so all
        // grid points tie and the smallest must win.
        let instance = point_mass_instance(0.3, 0.5, 0.0, 0.1);
        let cache = DpCache::new();
        let (best, table) = tune_alpha(
            &instance,
            PolicyKind::Ucb,
            &SolverSettings::default(),
            &cache,
            50,
            ThetaSource::Prior,
            13,
        )
        .unwrap();
        assert_eq!(best, table[0].0);
        assert_abs_diff_eq!(best, 0.1, epsilon = 1e-12);
        for (_, est) in &table {
            assert_eq!(est.mean, table[0].1.mean);
        }
        assert!(tune_alpha(
            &instance,
            PolicyKind::PureExploit,
            &SolverSettings::default(),
            &cache,
            50,
            ThetaSource::Prior,
            13,
        )
        .is_err());
    }

    #[test]
    fn sweep_shape_and_order() {
        let instance = point_mass_instance(0.3, 0.3, 1.0, 0.1);
        let cache = DpCache::new();
        let sweep = SweepConfig {
            experiment: "shape",
            kinds: &[PolicyKind::PureExploit, PolicyKind::Lts],
            costs: &[0.2, 0.4],
            episodes: 50,
            solver: SolverSettings::default(),
            bound: BoundConfig {
                decomposition_samples: 50,
                hindsight_samples: 200,
                solver: SolverSettings {
                    mu_points: 51,
                    beta_points: 8,
                    ..SolverSettings::default()
                },
            },
            source: ThetaSource::Prior,
            alpha_grid: None,
        };
        let rows = run_cost_sweep(&instance, &sweep, &cache, 3).unwrap();
        assert_eq!(rows.len(), 6);
        let summary: Vec<(f64, &str, &str)> = rows
            .iter()
            .map(|r| (r.cost, r.policy.as_str(), r.kind.as_str()))
            .collect();
        assert_eq!(
            summary,
            vec![
                (0.2, "pure_exploit", "policy"),
                (0.2, "lts", "policy"),
                (0.2, "bound", "combined_bound"),
                (0.4, "pure_exploit", "policy"),
                (0.4, "lts", "policy"),
                (0.4, "bound", "combined_bound"),
            ]
        );
        assert!(rows.iter().all(|r| r.experiment == "shape"));
        assert!(rows.iter().all(|r| r.alpha.is_none()));
    }

    #[test]
    fn sweep_with_unreachable_cost_is_all_zero_values() {
        let instance = point_mass_instance(0.3, 0.3, 1.0, 0.1);
        let cache = DpCache::new();
        let sweep = SweepConfig {
            experiment: "zero",
            kinds: &[PolicyKind::PureExploit],
            costs: &[1e9],
            episodes: 20,
            solver: SolverSettings::default(),
            bound: BoundConfig {
                decomposition_samples: 30,
                hindsight_samples: 100,
                solver: SolverSettings {
                    mu_points: 51,
                    beta_points: 8,
                    ..SolverSettings::default()
                },
            },
            source: ThetaSource::Prior,
            alpha_grid: None,
        };
        let rows = run_cost_sweep(&instance, &sweep, &cache, 3).unwrap();
        assert_eq!(rows.len(), 2);
        assert_eq!(rows[0].mean, 0.0);
        assert!(rows[1].mean >= 0.0);
    }

    #[test]
    fn truncation_tail_is_negligible_at_default_horizon() {
        let instance = point_mass_instance(0.3, 0.5, 0.0, 0.1);
        let tail = truncation_tail_bound(&instance).unwrap();
        assert!(tail > 0.0);
        // gamma^100 / (1 - gamma) is about 2.7e-4; the moment factor is
        // order one.
        assert!(tail < 1e-3, "tail {tail}");
    }
}
