//! Value iteration for the single-direction forwarding subproblem and
//! interpolated Q-factor queries against a solved grid.

use crate::error::{Error, Result};
use crate::model::ProjectionDistribution;

use super::grid::{
    bracket_for, resolve_support, row_lerp_clamped, BetaBracket, GridConfig, ValueGrid,
};
use super::quadrature::QuadratureRule;

/// Mass left outside the effective horizon when sizing the precision axis.
const HORIZON_TAIL_MASS: f64 = 1e-3;
/// Tolerance for deciding that a grid and a spec describe the same
/// subproblem (cache keys round to this resolution).
const SPEC_MATCH_TOL: f64 = 1e-9;

/// One single-direction forwarding subproblem: forward an item of projected
/// magnitude x for immediate reward x(mu - c), learning at noise
/// lambda^2 / x^2, with future magnitudes drawn from `projection`.
#[derive(Debug, Clone, PartialEq)]
pub struct SubproblemSpec {
    pub cost: f64,
    pub discount: f64,
    pub noise_scale: f64,
    pub projection: ProjectionDistribution,
}

impl SubproblemSpec {
    pub fn new(
        cost: f64,
        discount: f64,
        noise_scale: f64,
        projection: ProjectionDistribution,
    ) -> Result<Self> {
        if !cost.is_finite() {
            return Err(Error::invalid("cost", "must be finite"));
        }
        if !(discount > 0.0 && discount < 1.0) {
            return Err(Error::invalid("discount", "must lie in (0, 1)"));
        }
        if !(noise_scale > 0.0 && noise_scale.is_finite()) {
            return Err(Error::invalid("noise_scale", "must be finite and > 0"));
        }
        Ok(Self {
            cost,
            discount,
            noise_scale,
            projection,
        })
    }
}

/// Precomputed backup data for one (finite precision row, magnitude) pair:
/// where the posterior precision lands and how far each quadrature node
/// moves the posterior mean.
struct Plan {
    bracket: BetaBracket,
    offsets: Vec<f64>,
}

/// Solves the Bellman equation
///
/// V(mu, sigma, x) = max(Q0, Q1),
/// Q0 = gamma * E_{x'~G}[V(mu, sigma, x')],
/// Q1 = x(mu - c) + gamma * E_Y E_{x'~G}[V(mu', sigma', x')]   (x > 0),
/// Q1 = Q0                                                     (x = 0),
///
/// by value iteration on the discretized state space, where Y follows the
/// predictive law N(mu, sigma^2 + lambda^2 / x^2) and (mu', sigma') is the
/// conjugate posterior. Iteration stops once the sup-norm residual falls
/// below min(tolerance, tolerance * (1 - gamma) / (2 gamma)).
pub fn solve_subproblem(spec: &SubproblemSpec, config: &GridConfig) -> Result<ValueGrid> {
    config.validate()?;
    let quadrature = QuadratureRule::standard_normal(config.quadrature_points)?;
    let gamma = spec.discount;
    let l2 = spec.noise_scale * spec.noise_scale;

    let mn = config.mu_points;
    let dmu = (config.mu_max - config.mu_min) / (mn - 1) as f64;
    let mu_grid: Vec<f64> = (0..mn).map(|i| config.mu_min + dmu * i as f64).collect();

    // Precision axis: log-spaced from the prior precision up to the
    // precision reachable within the effective horizon.
    let x_max = spec.projection.max_magnitude();
    let t_eff = (HORIZON_TAIL_MASS.ln() / gamma.ln()).ceil();
    let mut beta_max = config.beta0 + t_eff * x_max * x_max / l2;
    if beta_max <= config.beta0 * (1.0 + 1e-9) {
        beta_max = config.beta0 * 2.0;
    }
    let bn = config.beta_points;
    let lb0 = config.beta0.ln();
    let lstep = (beta_max.ln() - lb0) / (bn - 1) as f64;
    let mut beta_grid: Vec<f64> = (0..bn).map(|i| (lb0 + lstep * i as f64).exp()).collect();
    beta_grid[0] = config.beta0;
    beta_grid[bn - 1] = beta_max;

    // Magnitude axis: projection support plus the unit self-projection
    // column queried by the decision rules.
    let mut x_support: Vec<f64> = spec.projection.support().iter().map(|&(x, _)| x).collect();
    x_support.push(1.0);
    x_support.sort_by(|a, b| a.partial_cmp(b).unwrap());
    x_support.dedup();
    let xn = x_support.len();
    let g_pairs = resolve_support(&spec.projection, &x_support)
        .expect("projection support is a subset of the x axis by construction");

    let mut plans: Vec<Option<Plan>> = Vec::with_capacity(bn * xn);
    for &beta in &beta_grid {
        for &x in &x_support {
            if x == 0.0 {
                plans.push(None);
                continue;
            }
            let beta_next = beta + x * x / l2;
            let coef = (1.0 / beta - 1.0 / beta_next).max(0.0).sqrt();
            plans.push(Some(Plan {
                bracket: bracket_for(&beta_grid, beta_next),
                offsets: quadrature.nodes().iter().map(|z| coef * z).collect(),
            }));
        }
    }

    let rows = bn + 1; // final row: zero-variance (no-learning) limit
    let cells = rows * xn * mn;
    let mut values = vec![0.0f64; cells];
    let mut next = vec![0.0f64; cells];
    let mut w = vec![0.0f64; rows * mn];
    let weights = quadrature.weights();
    let threshold = config
        .tolerance
        .min(config.tolerance * (1.0 - gamma) / (2.0 * gamma));

    let mut residual_history = Vec::new();
    let mut converged = false;
    let mut iterations = 0;
    while iterations < config.max_iterations {
        iterations += 1;
        // w[row][m] = E_{x'~G} V(row, mu_m, x') under the current iterate.
        for row in 0..rows {
            let wrow = &mut w[row * mn..(row + 1) * mn];
            wrow.fill(0.0);
            for &(xi, p) in &g_pairs {
                let col = &values[(row * xn + xi) * mn..][..mn];
                for m in 0..mn {
                    wrow[m] += p * col[m];
                }
            }
        }
        for row in 0..rows {
            let wrow = &w[row * mn..(row + 1) * mn];
            for xi in 0..xn {
                let x = x_support[xi];
                let out_start = (row * xn + xi) * mn;
                if x == 0.0 {
                    for m in 0..mn {
                        next[out_start + m] = gamma * wrow[m];
                    }
                } else if row == bn {
                    // Zero variance: the belief never moves.
                    for m in 0..mn {
                        let q0 = gamma * wrow[m];
                        let q1 = x * (mu_grid[m] - spec.cost) + gamma * wrow[m];
                        next[out_start + m] = q0.max(q1);
                    }
                } else {
                    let plan = plans[row * xn + xi].as_ref().unwrap();
                    for m in 0..mn {
                        let mu = mu_grid[m];
                        let mut cont = 0.0;
                        for (off, wt) in plan.offsets.iter().zip(weights) {
                            let mq = mu + off;
                            let v = match plan.bracket {
                                BetaBracket::Finite { lo, t } => {
                                    let a = row_lerp_clamped(
                                        &w[lo * mn..(lo + 1) * mn],
                                        config.mu_min,
                                        dmu,
                                        mq,
                                    );
                                    if t == 0.0 {
                                        a
                                    } else {
                                        let b = row_lerp_clamped(
                                            &w[(lo + 1) * mn..(lo + 2) * mn],
                                            config.mu_min,
                                            dmu,
                                            mq,
                                        );
                                        a + t * (b - a)
                                    }
                                }
                                BetaBracket::Tail { t } => {
                                    let inf = row_lerp_clamped(
                                        &w[bn * mn..(bn + 1) * mn],
                                        config.mu_min,
                                        dmu,
                                        mq,
                                    );
                                    if t == 0.0 {
                                        inf
                                    } else {
                                        let lastrow = row_lerp_clamped(
                                            &w[(bn - 1) * mn..bn * mn],
                                            config.mu_min,
                                            dmu,
                                            mq,
                                        );
                                        inf + t * (lastrow - inf)
                                    }
                                }
                            };
                            cont += wt * v;
                        }
                        let q0 = gamma * wrow[m];
                        let q1 = x * (mu - spec.cost) + gamma * cont;
                        next[out_start + m] = q0.max(q1);
                    }
                }
            }
        }
        let mut residual = 0.0f64;
        for (a, b) in next.iter().zip(values.iter()) {
            residual = residual.max((a - b).abs());
        }
        std::mem::swap(&mut values, &mut next);
        residual_history.push(residual);
        if residual <= threshold {
            converged = true;
            break;
        }
    }
    let last_residual = *residual_history.last().unwrap();
    if !converged {
        return Err(Error::NonConvergence {
            iterations,
            residual: last_residual,
            threshold,
        });
    }
    Ok(ValueGrid {
        spec: spec.clone(),
        mu_min: config.mu_min,
        dmu,
        mu_grid,
        beta_grid,
        x_support,
        values,
        g_pairs,
        quadrature,
        mean_projection: spec.projection.mean(),
        convergence_gap: last_residual,
        iterations,
        residual_history,
    })
}

impl ValueGrid {
    /// Interpolated value V(mu, sigma, x) for any magnitude x >= 0,
    /// computed as one Bellman backup against the stored grid.
    pub fn evaluate(&self, mu: f64, sigma: f64, x: f64) -> Result<f64> {
        let (q0, q1) = self.q_pair(mu, sigma, x)?;
        Ok(q0.max(q1))
    }

    fn q_pair(&self, mu: f64, sigma: f64, x: f64) -> Result<(f64, f64)> {
        if !mu.is_finite() {
            return Err(Error::invalid("mu", "must be finite"));
        }
        if !sigma.is_finite() || sigma < 0.0 {
            return Err(Error::invalid("sigma", "must be finite and >= 0"));
        }
        if !x.is_finite() || x < 0.0 {
            return Err(Error::invalid("x", "must be finite and >= 0"));
        }
        let gamma = self.spec.discount;
        let beta = if sigma == 0.0 {
            f64::INFINITY
        } else {
            1.0 / (sigma * sigma)
        };
        let here = self.beta_bracket(beta);
        let mut q0 = 0.0;
        for &(xi, p) in &self.g_pairs {
            q0 += p * self.bracket_value(here, xi, mu, true);
        }
        q0 *= gamma;
        if x == 0.0 {
            return Ok((q0, q0));
        }
        let (bracket, coef) = if beta.is_infinite() {
            (BetaBracket::Tail { t: 0.0 }, 0.0)
        } else {
            let l2 = self.spec.noise_scale * self.spec.noise_scale;
            let beta_next = beta + x * x / l2;
            let coef = (1.0 / beta - 1.0 / beta_next).max(0.0).sqrt();
            (self.beta_bracket(beta_next), coef)
        };
        let mut cont = 0.0;
        for (z, wt) in self
            .quadrature
            .nodes()
            .iter()
            .zip(self.quadrature.weights())
        {
            let mq = mu + coef * z;
            let mut ev = 0.0;
            for &(xi, p) in &self.g_pairs {
                ev += p * self.bracket_value(bracket, xi, mq, true);
            }
            cont += wt * ev;
        }
        let q1 = x * (mu - self.spec.cost) + gamma * cont;
        Ok((q0, q1))
    }

    fn check_compatible(&self, spec: &SubproblemSpec) -> Result<()> {
        let close = |a: f64, b: f64| (a - b).abs() <= SPEC_MATCH_TOL;
        let stored = self.spec.projection.support();
        let queried = spec.projection.support();
        let ok = close(self.spec.cost, spec.cost)
            && close(self.spec.discount, spec.discount)
            && close(self.spec.noise_scale, spec.noise_scale)
            && stored.len() == queried.len()
            && stored
                .iter()
                .zip(queried)
                .all(|(&(xa, pa), &(xb, pb))| close(xa, xb) && close(pa, pb));
        if ok {
            Ok(())
        } else {
            Err(Error::invalid(
                "spec",
                "grid was solved for a different subproblem",
            ))
        }
    }
}

/// Q-factors (discard, forward) at an arbitrary query state, by one Bellman
/// backup against the interpolated grid. `spec` must match the spec the
/// grid was solved for.
pub fn q_factors(
    grid: &ValueGrid,
    spec: &SubproblemSpec,
    mu: f64,
    sigma: f64,
    x: f64,
) -> Result<(f64, f64)> {
    grid.check_compatible(spec)?;
    grid.q_pair(mu, sigma, x)
}

/// Non-myopic value of the information gained by forwarding at unit
/// magnitude: Q(mu, sigma, 1, forward) - Q(mu, sigma, 1, discard) - mu + c.
pub fn exploration_benefit(
    grid: &ValueGrid,
    spec: &SubproblemSpec,
    mu: f64,
    sigma: f64,
) -> Result<f64> {
    let (q0, q1) = q_factors(grid, spec, mu, sigma, 1.0)?;
    Ok(q1 - q0 - (mu - spec.cost))
}
