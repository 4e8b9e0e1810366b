//! Command-line experiment runner.
//!
//! Every subcommand reads one TOML experiment file and writes its artifacts
//! into an output directory: a flat results CSV (schema
//! `experiment,cost,policy,alpha,mean,stderr,ci_low,ci_high,kind`) plus a
//! `manifest.json` echoing the effective config, seed, and tool version.
//! Outputs are pure functions of (config bytes, master seed), so a rerun
//! reproduces every file byte for byte.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use serde::Serialize;

use infofilter::bound::combined_bound;
use infofilter::config::{build_experiment, parse_config, ExperimentConfig};
use infofilter::model::ProblemInstance;
use infofilter::policy::{DpCache, PolicyKind};
use infofilter::prior_fit::{build_prior, fit_user_preferences, load_ratings, FittedUser};
use infofilter::sim::{
    alpha_grid, estimate_policy_value, run_cost_sweep, truncation_tail_bound, tune_alpha_over,
    SweepConfig, SweepRow, ThetaSource,
};

/// Environment override for the worker thread count; takes precedence over
/// `execution.parallelism` in the config file.
const THREADS_ENV: &str = "INFOFILTER_THREADS";

#[derive(Parser)]
#[command(
    name = "infofilter",
    version,
    about = "Simulation laboratory for Bayesian linear information filtering"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Estimate one policy's discounted value at a single cost.
    Simulate(RunArgs),
    /// Compute the decomposition, hindsight, and combined upper bounds.
    Bound(RunArgs),
    /// Evaluate the alpha tuning grid for every tunable configured policy.
    Tune(RunArgs),
    /// Tune and evaluate every policy across the cost list, with bounds.
    Sweep(RunArgs),
    /// Fit per-user preferences and the population prior from ratings data.
    FitPrior(RunArgs),
}

#[derive(Args)]
struct RunArgs {
    /// Experiment definition (TOML).
    #[arg(long)]
    config: PathBuf,
    /// Overrides the master seed from the config file.
    #[arg(long)]
    seed: Option<u64>,
    /// Overrides the output directory from the config file.
    #[arg(long)]
    output: Option<PathBuf>,
}

/// Run record written next to the results; together with the input data
/// files it regenerates every number in the CSV.
#[derive(Serialize)]
struct Manifest {
    tool: &'static str,
    version: &'static str,
    subcommand: &'static str,
    master_seed: u64,
    /// Effective config: file contents with CLI overrides applied.
    config: ExperimentConfig,
    #[serde(skip_serializing_if = "Option::is_none")]
    costs: Option<Vec<f64>>,
    /// Upper bound on discounted value ignored by truncating episodes at
    /// the configured horizon, one entry per cost.
    #[serde(skip_serializing_if = "Option::is_none")]
    truncation_tail_bounds: Option<Vec<f64>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    tuned_alphas: Option<BTreeMap<String, f64>>,
    /// Bound runs only: true when a sample count was below the reliability
    /// threshold, one entry per cost.
    #[serde(skip_serializing_if = "Option::is_none")]
    low_sample_warnings: Option<Vec<bool>>,
    outputs: Vec<String>,
}

impl Manifest {
    fn new(subcommand: &'static str, config: &ExperimentConfig) -> Self {
        Manifest {
            tool: "infofilter",
            version: env!("CARGO_PKG_VERSION"),
            subcommand,
            master_seed: config.execution.seed,
            config: config.clone(),
            costs: None,
            truncation_tail_bounds: None,
            tuned_alphas: None,
            low_sample_warnings: None,
            outputs: vec!["results.csv".to_string(), "manifest.json".to_string()],
        }
    }
}

fn main() {
    if let Err(e) = run() {
        eprintln!("error: {e:#}");
        std::process::exit(1);
    }
}

fn run() -> Result<()> {
    let cli = Cli::parse();
    let (subcommand, args): (&'static str, &RunArgs) = match &cli.command {
        Command::Simulate(a) => ("simulate", a),
        Command::Bound(a) => ("bound", a),
        Command::Tune(a) => ("tune", a),
        Command::Sweep(a) => ("sweep", a),
        Command::FitPrior(a) => ("fit-prior", a),
    };

    let mut config =
        parse_config(&args.config).with_context(|| format!("loading {}", args.config.display()))?;
    if let Some(seed) = args.seed {
        config.execution.seed = seed;
    }
    if let Some(output) = &args.output {
        config.execution.output = Some(output.clone());
    }
    let out_dir = config
        .execution
        .output
        .clone()
        .context("no output directory: set execution.output in the config or pass --output")?;
    std::fs::create_dir_all(&out_dir).with_context(|| format!("creating {}", out_dir.display()))?;
    init_thread_pool(&config)?;

    let mut manifest = Manifest::new(subcommand, &config);
    match subcommand {
        "simulate" => cmd_simulate(&config, &mut manifest)?,
        "bound" => cmd_bound(&config, &mut manifest)?,
        "tune" => cmd_tune(&config, &mut manifest)?,
        "sweep" => cmd_sweep(&config, &mut manifest)?,
        "fit-prior" => return cmd_fit_prior(&config, manifest, &out_dir),
        _ => unreachable!(),
    }
    write_manifest(&out_dir, &manifest)
}

/// Applies the env override, then the config setting; leaves the default
/// pool untouched when neither is present.
fn init_thread_pool(config: &ExperimentConfig) -> Result<()> {
    let threads = match std::env::var(THREADS_ENV) {
        Ok(raw) => Some(
            raw.parse::<usize>()
                .ok()
                .filter(|&n| n > 0)
                .with_context(|| {
                    format!("{THREADS_ENV} must be a positive integer, got {raw:?}")
                })?,
        ),
        Err(_) => config.execution.parallelism,
    };
    if let Some(n) = threads {
        // Already-built pools (e.g. under a test harness) keep their size.
        let _ = rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global();
    }
    Ok(())
}

fn theta_source(fitted: &Option<Vec<Vec<f64>>>) -> ThetaSource<'_> {
    match fitted {
        Some(thetas) => ThetaSource::List(thetas),
        None => ThetaSource::Prior,
    }
}

/// Deduplicated policy kinds in config order.
fn configured_kinds(config: &ExperimentConfig) -> Vec<PolicyKind> {
    let mut kinds = Vec::new();
    for entry in &config.policies {
        if !kinds.contains(&entry.kind) {
            kinds.push(entry.kind);
        }
    }
    kinds
}

fn tail_bounds(instance: &ProblemInstance, costs: &[f64]) -> Result<Vec<f64>> {
    costs
        .iter()
        .map(|&c| Ok(truncation_tail_bound(&instance.with_cost(c)?)?))
        .collect()
}

fn cmd_simulate(config: &ExperimentConfig, manifest: &mut Manifest) -> Result<()> {
    if config.policies.len() != 1 {
        bail!(
            "simulate runs exactly one policy; config lists {}",
            config.policies.len()
        );
    }
    let cost = config.single_cost()?;
    let built = build_experiment(config)?;
    let policy = built.policies[0].clone();
    let cache = DpCache::new();
    let est = estimate_policy_value(
        &built.instance,
        &policy,
        &cache,
        built.episodes,
        theta_source(&built.fitted_thetas),
        built.seed,
    )?;
    let rows = vec![SweepRow {
        experiment: "simulate".to_string(),
        cost,
        policy: policy.kind.label().to_string(),
        alpha: policy.kind.uses_alpha().then_some(policy.alpha),
        mean: est.mean,
        stderr: est.stderr,
        ci_low: est.ci95_low,
        ci_high: est.ci95_high,
        kind: "policy".to_string(),
    }];
    write_results(config, &rows)?;
    manifest.costs = Some(vec![cost]);
    manifest.truncation_tail_bounds = Some(tail_bounds(&built.instance, &[cost])?);
    Ok(())
}

fn cmd_bound(config: &ExperimentConfig, manifest: &mut Manifest) -> Result<()> {
    let built = build_experiment(config)?;
    let cache = DpCache::new();
    let mut rows = Vec::new();
    let mut warnings = Vec::new();
    for &cost in &built.costs {
        let at_cost = built.instance.with_cost(cost)?;
        let report = combined_bound(&at_cost, &built.bound, &cache, built.seed)?;
        if report.low_sample_warning {
            eprintln!(
                "warning: cost {cost}: bound estimated from fewer than 30 samples; \
                 intervals are unreliable"
            );
        }
        warnings.push(report.low_sample_warning);
        for (j, (&value, &stderr)) in report
            .per_feature_values
            .iter()
            .zip(&report.per_feature_stderrs)
            .enumerate()
        {
            rows.push(bound_row(
                cost,
                format!("feature_{j:03}"),
                value,
                stderr,
                "decomposition_bound",
            ));
        }
        rows.push(bound_row(
            cost,
            "all".to_string(),
            report.decomposition_bound,
            report.decomposition_stderr,
            "decomposition_bound",
        ));
        rows.push(bound_row(
            cost,
            "all".to_string(),
            report.hindsight_bound,
            report.hindsight_stderr,
            "hindsight_bound",
        ));
        rows.push(bound_row(
            cost,
            "all".to_string(),
            report.combined_bound,
            report.combined_stderr,
            "combined_bound",
        ));
    }
    write_results(config, &rows)?;
    manifest.costs = Some(built.costs);
    manifest.low_sample_warnings = Some(warnings);
    Ok(())
}

fn bound_row(cost: f64, policy: String, mean: f64, stderr: f64, kind: &str) -> SweepRow {
    SweepRow {
        experiment: "bound".to_string(),
        cost,
        policy,
        alpha: None,
        mean,
        stderr,
        ci_low: mean - 1.96 * stderr,
        ci_high: mean + 1.96 * stderr,
        kind: kind.to_string(),
    }
}

fn cmd_tune(config: &ExperimentConfig, manifest: &mut Manifest) -> Result<()> {
    let cost = config.single_cost()?;
    let kinds: Vec<PolicyKind> = configured_kinds(config)
        .into_iter()
        .filter(|k| k.uses_alpha())
        .collect();
    if kinds.is_empty() {
        bail!("tune requires at least one policy with a tuning parameter (ucb, dtddp, dtd_ucb)");
    }
    let built = build_experiment(config)?;
    let grid = built.alpha_grid.clone().unwrap_or_else(alpha_grid);
    let cache = DpCache::new();
    let source = theta_source(&built.fitted_thetas);
    let mut rows = Vec::new();
    let mut tuned = BTreeMap::new();
    for &kind in &kinds {
        let (best, table) = tune_alpha_over(
            &built.instance,
            kind,
            &config.execution.solver,
            &cache,
            built.episodes,
            source,
            &grid,
            built.seed,
        )?;
        tuned.insert(kind.label().to_string(), best);
        for (alpha, est) in table {
            rows.push(SweepRow {
                experiment: "tune".to_string(),
                cost,
                policy: kind.label().to_string(),
                alpha: Some(alpha),
                mean: est.mean,
                stderr: est.stderr,
                ci_low: est.ci95_low,
                ci_high: est.ci95_high,
                kind: "policy".to_string(),
            });
        }
    }
    write_results(config, &rows)?;
    manifest.costs = Some(vec![cost]);
    manifest.truncation_tail_bounds = Some(tail_bounds(&built.instance, &[cost])?);
    manifest.tuned_alphas = Some(tuned);
    Ok(())
}

fn cmd_sweep(config: &ExperimentConfig, manifest: &mut Manifest) -> Result<()> {
    let kinds = configured_kinds(config);
    let built = build_experiment(config)?;
    let cache = DpCache::new();
    let sweep = SweepConfig {
        experiment: "sweep",
        kinds: &kinds,
        costs: &built.costs,
        episodes: built.episodes,
        solver: config.execution.solver.clone(),
        bound: built.bound.clone(),
        source: theta_source(&built.fitted_thetas),
        alpha_grid: built.alpha_grid.clone(),
    };
    let rows = run_cost_sweep(&built.instance, &sweep, &cache, built.seed)?;
    write_results(config, &rows)?;
    manifest.truncation_tail_bounds = Some(tail_bounds(&built.instance, &built.costs)?);
    manifest.costs = Some(built.costs);
    Ok(())
}

/// Fitted prior artifact: the population normal plus every per-user fit.
#[derive(Serialize)]
struct PriorArtifact {
    mean: Vec<f64>,
    covariance: Vec<Vec<f64>>,
    users: BTreeMap<String, FittedUser>,
}

fn cmd_fit_prior(config: &ExperimentConfig, mut manifest: Manifest, out_dir: &Path) -> Result<()> {
    let fit = config
        .instance
        .prior
        .fit
        .as_ref()
        .context("fit-prior requires the [instance.prior.fit] block")?;
    let data = load_ratings(&fit.items_csv, &fit.ratings_csv)?;
    let fitted = fit_user_preferences(&data, fit.ridge)?;
    let deficient = fitted.users.values().filter(|u| u.rank_deficient).count();
    if deficient > 0 {
        eprintln!(
            "warning: {deficient} of {} users were rank-deficient and used the ridge fallback",
            fitted.len()
        );
    }
    let repair_eps = fit
        .repair_eps
        .unwrap_or(infofilter::model::COVARIANCE_REPAIR_EPS);
    let prior = build_prior(&fitted, repair_eps)?;
    let k = prior.dim();
    let artifact = PriorArtifact {
        mean: prior.mean().iter().copied().collect(),
        covariance: (0..k)
            .map(|i| (0..k).map(|j| prior.covariance()[(i, j)]).collect())
            .collect(),
        users: fitted.users,
    };
    let path = out_dir.join("prior.json");
    let json = serde_json::to_string_pretty(&artifact).context("serializing prior")?;
    std::fs::write(&path, json + "\n").with_context(|| format!("writing {}", path.display()))?;
    manifest.outputs = vec!["prior.json".to_string(), "manifest.json".to_string()];
    write_manifest(out_dir, &manifest)
}

/// Writes `results.csv`. Floats serialize in shortest round-trip form, so
/// identical numbers always produce identical bytes.
fn write_results(config: &ExperimentConfig, rows: &[SweepRow]) -> Result<()> {
    let out_dir = config.execution.output.as_ref().expect("resolved in run()");
    let path = out_dir.join("results.csv");
    let mut writer =
        csv::Writer::from_path(&path).with_context(|| format!("creating {}", path.display()))?;
    for row in rows {
        writer.serialize(row)?;
    }
    writer.flush()?;
    Ok(())
}

fn write_manifest(out_dir: &Path, manifest: &Manifest) -> Result<()> {
    let path = out_dir.join("manifest.json");
    let json = serde_json::to_string_pretty(manifest).context("serializing manifest")?;
    std::fs::write(&path, json + "\n").with_context(|| format!("writing {}", path.display()))
}
