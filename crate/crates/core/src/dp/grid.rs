//! Discretized value function of a forwarding subproblem: grid layout,
//! interpolation, and a versioned binary dump format.

use std::io::{Read, Write};

use crate::error::{Error, Result};
use crate::model::ProjectionDistribution;

use super::quadrature::QuadratureRule;
use super::solver::SubproblemSpec;

pub const DEFAULT_MU_POINTS: usize = 201;
pub const DEFAULT_BETA_POINTS: usize = 64;
pub const DEFAULT_TOLERANCE: f64 = 1e-6;
pub const DEFAULT_MAX_ITERATIONS: usize = 10_000;
/// Finite stand-in for infinite precision when a grid is derived from a
/// degenerate (zero-variance) prior.
pub const BETA_FINITE_CAP: f64 = 1e12;

const DUMP_MAGIC: &[u8; 4] = b"VGRD";
const DUMP_VERSION: u32 = 1;

/// Discretization settings for [`super::solve_subproblem`].
#[derive(Debug, Clone, PartialEq)]
pub struct GridConfig {
    pub mu_min: f64,
    pub mu_max: f64,
    pub mu_points: usize,
    /// Smallest finite precision row; typically the prior precision.
    pub beta0: f64,
    pub beta_points: usize,
    pub tolerance: f64,
    pub max_iterations: usize,
    pub quadrature_points: usize,
}

impl GridConfig {
    /// Default grid for a subproblem whose prior belief is
    /// N(mean, variance): mean range +/- 6 standard deviations, first
    /// precision row at the prior precision. A zero variance is replaced by
    /// [`BETA_FINITE_CAP`]; exact zero-variance queries are served by the
    /// dedicated no-learning row.
    pub fn for_prior(mean: f64, variance: f64) -> Result<Self> {
        if !mean.is_finite() {
            return Err(Error::invalid("mean", "must be finite"));
        }
        if !variance.is_finite() || variance < 0.0 {
            return Err(Error::invalid("variance", "must be finite and >= 0"));
        }
        let half_width = (6.0 * variance.sqrt()).max(1e-6);
        let beta0 = if variance > 0.0 {
            (1.0 / variance).min(BETA_FINITE_CAP)
        } else {
            BETA_FINITE_CAP
        };
        Ok(Self {
            mu_min: mean - half_width,
            mu_max: mean + half_width,
            mu_points: DEFAULT_MU_POINTS,
            beta0,
            beta_points: DEFAULT_BETA_POINTS,
            tolerance: DEFAULT_TOLERANCE,
            max_iterations: DEFAULT_MAX_ITERATIONS,
            quadrature_points: super::quadrature::DEFAULT_QUADRATURE_POINTS,
        })
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.mu_min.is_finite() && self.mu_max.is_finite() && self.mu_min < self.mu_max) {
            return Err(Error::InvalidGrid {
                message: format!("mean range [{}, {}] is empty", self.mu_min, self.mu_max),
            });
        }
        if self.mu_points < 3 {
            return Err(Error::InvalidGrid {
                message: format!("mu_points = {} (need >= 3)", self.mu_points),
            });
        }
        if self.beta_points < 2 {
            return Err(Error::InvalidGrid {
                message: format!("beta_points = {} (need >= 2)", self.beta_points),
            });
        }
        if !(self.beta0 > 0.0 && self.beta0.is_finite()) {
            return Err(Error::InvalidGrid {
                message: format!("beta0 = {} (need finite > 0)", self.beta0),
            });
        }
        if self.tolerance.is_nan() || self.tolerance <= 0.0 {
            return Err(Error::InvalidGrid {
                message: format!("tolerance = {} (need > 0)", self.tolerance),
            });
        }
        if self.max_iterations == 0 {
            return Err(Error::InvalidGrid {
                message: "max_iterations = 0".into(),
            });
        }
        if self.quadrature_points == 0 {
            return Err(Error::InvalidGrid {
                message: "quadrature_points = 0".into(),
            });
        }
        Ok(())
    }
}

/// Position of a precision query relative to the grid rows.
#[derive(Debug, Clone, Copy, PartialEq)]
pub(super) enum BetaBracket {
    /// Between finite rows `lo` and `lo + 1`, weight `t` on the upper row,
    /// linear in log precision.
    Finite { lo: usize, t: f64 },
    /// Beyond the last finite row: weight `t` on that row, `1 - t` on the
    /// zero-variance row, linear in variance (t = beta_max / beta).
    Tail { t: f64 },
}

pub(super) fn bracket_for(beta_grid: &[f64], beta: f64) -> BetaBracket {
    let last = beta_grid[beta_grid.len() - 1];
    if beta.is_infinite() {
        return BetaBracket::Tail { t: 0.0 };
    }
    if beta >= last {
        return BetaBracket::Tail { t: last / beta };
    }
    if beta <= beta_grid[0] {
        return BetaBracket::Finite { lo: 0, t: 0.0 };
    }
    let hi = beta_grid.partition_point(|b| *b <= beta);
    let lo = hi - 1;
    let t = (beta.ln() - beta_grid[lo].ln()) / (beta_grid[hi].ln() - beta_grid[lo].ln());
    BetaBracket::Finite { lo, t }
}

/// Linear interpolation on a uniformly spaced row, clamped at both ends.
#[inline]
pub(super) fn row_lerp_clamped(row: &[f64], mu_min: f64, dmu: f64, mu: f64) -> f64 {
    let pos = (mu - mu_min) / dmu;
    if pos <= 0.0 {
        return row[0];
    }
    let top = (row.len() - 1) as f64;
    if pos >= top {
        return row[row.len() - 1];
    }
    let i = pos as usize;
    let f = pos - i as f64;
    row[i] + f * (row[i + 1] - row[i])
}

/// Solved value function V(mu, sigma, x) of one forwarding subproblem.
///
/// Rows 0..beta_grid.len() hold finite precisions; one extra row holds the
/// zero-variance (no-learning) limit. Values are stored mu-contiguous per
/// (row, x) column.
#[derive(Debug, Clone)]
pub struct ValueGrid {
    pub(super) spec: SubproblemSpec,
    pub(super) mu_min: f64,
    pub(super) dmu: f64,
    pub(super) mu_grid: Vec<f64>,
    pub(super) beta_grid: Vec<f64>,
    pub(super) x_support: Vec<f64>,
    pub(super) values: Vec<f64>,
    /// Projection support resolved to x_support indices, with probabilities.
    pub(super) g_pairs: Vec<(usize, f64)>,
    pub(super) quadrature: QuadratureRule,
    pub(super) mean_projection: f64,
    pub(super) convergence_gap: f64,
    pub(super) iterations: usize,
    /// Sup-norm Bellman residual per iteration; empty for loaded grids.
    pub(super) residual_history: Vec<f64>,
}

impl ValueGrid {
    pub fn spec(&self) -> &SubproblemSpec {
        &self.spec
    }

    pub fn mu_grid(&self) -> &[f64] {
        &self.mu_grid
    }

    pub fn beta_grid(&self) -> &[f64] {
        &self.beta_grid
    }

    pub fn x_support(&self) -> &[f64] {
        &self.x_support
    }

    pub fn convergence_gap(&self) -> f64 {
        self.convergence_gap
    }

    pub fn iterations(&self) -> usize {
        self.iterations
    }

    pub fn residual_history(&self) -> &[f64] {
        &self.residual_history
    }

    /// Value at a finite-precision grid node.
    pub fn stored_value(&self, beta_index: usize, mu_index: usize, x_index: usize) -> f64 {
        assert!(beta_index < self.beta_grid.len());
        self.values[self.cell(beta_index, x_index, mu_index)]
    }

    /// Value at a node of the zero-variance row.
    pub fn no_learning_value(&self, mu_index: usize, x_index: usize) -> f64 {
        self.values[self.cell(self.beta_grid.len(), x_index, mu_index)]
    }

    #[inline]
    fn cell(&self, row: usize, x_index: usize, mu_index: usize) -> usize {
        (row * self.x_support.len() + x_index) * self.mu_grid.len() + mu_index
    }

    #[inline]
    pub(super) fn column(&self, row: usize, x_index: usize) -> &[f64] {
        let start = (row * self.x_support.len() + x_index) * self.mu_grid.len();
        &self.values[start..start + self.mu_grid.len()]
    }

    pub(super) fn beta_bracket(&self, beta: f64) -> BetaBracket {
        bracket_for(&self.beta_grid, beta)
    }

    /// Interpolated value on one x column. Out-of-range mu clamps; with
    /// `extrapolate` it additionally continues the myopic linear growth
    /// above the grid (below the grid the value function is flat at ~0).
    ///
    /// The high-side slope is the top-cell finite difference, capped by the
    /// forward-always asymptote x + gamma * Mbar / (1 - gamma): both are
    /// exact where V has gone linear, and the finite difference correctly
    /// yields zero when forwarding is never worthwhile on the grid.
    pub(super) fn col_value(&self, row: usize, x_index: usize, mu: f64, extrapolate: bool) -> f64 {
        let col = self.column(row, x_index);
        if extrapolate {
            let mu_max = self.mu_grid[self.mu_grid.len() - 1];
            if mu > mu_max {
                let n = col.len();
                let fd = (col[n - 1] - col[n - 2]) / self.dmu;
                let asymptote = self.x_support[x_index]
                    + self.spec.discount * self.mean_projection / (1.0 - self.spec.discount);
                let slope = fd.max(0.0).min(asymptote);
                return col[n - 1] + (mu - mu_max) * slope;
            }
        }
        row_lerp_clamped(col, self.mu_min, self.dmu, mu)
    }

    pub(super) fn bracket_value(
        &self,
        bracket: BetaBracket,
        x_index: usize,
        mu: f64,
        extrapolate: bool,
    ) -> f64 {
        match bracket {
            BetaBracket::Finite { lo, t } => {
                let a = self.col_value(lo, x_index, mu, extrapolate);
                if t == 0.0 {
                    a
                } else {
                    a + t * (self.col_value(lo + 1, x_index, mu, extrapolate) - a)
                }
            }
            BetaBracket::Tail { t } => {
                let inf = self.col_value(self.beta_grid.len(), x_index, mu, extrapolate);
                if t == 0.0 {
                    inf
                } else {
                    let last = self.col_value(self.beta_grid.len() - 1, x_index, mu, extrapolate);
                    inf + t * (last - inf)
                }
            }
        }
    }

    /// Writes the grid in the versioned binary format: magic, version, spec
    /// hash, sizes, spec, axes, row-major values.
    pub fn dump<W: Write>(&self, mut w: W) -> Result<()> {
        w.write_all(DUMP_MAGIC)?;
        write_u32(&mut w, DUMP_VERSION)?;
        write_u64(&mut w, spec_hash(&self.spec))?;
        write_u32(&mut w, self.mu_grid.len() as u32)?;
        write_u32(&mut w, self.beta_grid.len() as u32)?;
        write_u32(&mut w, self.x_support.len() as u32)?;
        write_u32(&mut w, self.quadrature.len() as u32)?;
        write_f64(&mut w, self.spec.cost)?;
        write_f64(&mut w, self.spec.discount)?;
        write_f64(&mut w, self.spec.noise_scale)?;
        let support = self.spec.projection.support();
        write_u32(&mut w, support.len() as u32)?;
        for &(x, p) in support {
            write_f64(&mut w, x)?;
            write_f64(&mut w, p)?;
        }
        for &v in self
            .mu_grid
            .iter()
            .chain(&self.beta_grid)
            .chain(&self.x_support)
        {
            write_f64(&mut w, v)?;
        }
        for &v in &self.values {
            write_f64(&mut w, v)?;
        }
        write_f64(&mut w, self.convergence_gap)?;
        write_u64(&mut w, self.iterations as u64)?;
        Ok(())
    }

    /// Reads a grid written by [`ValueGrid::dump`]. The residual history is
    /// not persisted.
    pub fn load<R: Read>(mut r: R) -> Result<Self> {
        let mut magic = [0u8; 4];
        r.read_exact(&mut magic)?;
        if &magic != DUMP_MAGIC {
            return Err(Error::GridFormat {
                message: "bad magic bytes".into(),
            });
        }
        let version = read_u32(&mut r)?;
        if version != DUMP_VERSION {
            return Err(Error::GridFormat {
                message: format!("unsupported version {version}"),
            });
        }
        let stored_hash = read_u64(&mut r)?;
        let mu_len = read_u32(&mut r)? as usize;
        let beta_len = read_u32(&mut r)? as usize;
        let x_len = read_u32(&mut r)? as usize;
        let quad_points = read_u32(&mut r)? as usize;
        if mu_len < 2 || beta_len < 1 || x_len < 1 || quad_points < 1 {
            return Err(Error::GridFormat {
                message: format!("implausible sizes mu={mu_len} beta={beta_len} x={x_len}"),
            });
        }
        let cost = read_f64(&mut r)?;
        let discount = read_f64(&mut r)?;
        let noise_scale = read_f64(&mut r)?;
        let support_len = read_u32(&mut r)? as usize;
        let mut support = Vec::with_capacity(support_len);
        for _ in 0..support_len {
            let x = read_f64(&mut r)?;
            let p = read_f64(&mut r)?;
            support.push((x, p));
        }
        let projection = ProjectionDistribution::new(support).map_err(|e| Error::GridFormat {
            message: format!("invalid stored projection: {e}"),
        })?;
        let spec = SubproblemSpec::new(cost, discount, noise_scale, projection).map_err(|e| {
            Error::GridFormat {
                message: format!("invalid stored spec: {e}"),
            }
        })?;
        if spec_hash(&spec) != stored_hash {
            return Err(Error::GridFormat {
                message: "spec hash mismatch".into(),
            });
        }
        let read_vec = |r: &mut R, n: usize| -> Result<Vec<f64>> {
            let mut v = Vec::with_capacity(n);
            for _ in 0..n {
                v.push(read_f64(r)?);
            }
            Ok(v)
        };
        let mu_grid = read_vec(&mut r, mu_len)?;
        let beta_grid = read_vec(&mut r, beta_len)?;
        let x_support = read_vec(&mut r, x_len)?;
        let values = read_vec(&mut r, (beta_len + 1) * mu_len * x_len)?;
        let convergence_gap = read_f64(&mut r)?;
        let iterations = read_u64(&mut r)? as usize;

        let g_pairs =
            resolve_support(&spec.projection, &x_support).ok_or_else(|| Error::GridFormat {
                message: "projection support missing from x axis".into(),
            })?;
        let mean_projection = spec.projection.mean();
        let quadrature = QuadratureRule::standard_normal(quad_points)?;
        let mu_min = mu_grid[0];
        let dmu = (mu_grid[mu_len - 1] - mu_min) / (mu_len - 1) as f64;
        if dmu.is_nan() || dmu <= 0.0 {
            return Err(Error::GridFormat {
                message: "mu axis not increasing".into(),
            });
        }
        Ok(Self {
            spec,
            mu_min,
            dmu,
            mu_grid,
            beta_grid,
            x_support,
            values,
            g_pairs,
            quadrature,
            mean_projection,
            convergence_gap,
            iterations,
            residual_history: Vec::new(),
        })
    }
}

/// Maps projection support magnitudes to x-axis indices; None if any
/// magnitude is absent.
pub(super) fn resolve_support(
    projection: &ProjectionDistribution,
    x_support: &[f64],
) -> Option<Vec<(usize, f64)>> {
    projection
        .support()
        .iter()
        .map(|&(x, p)| {
            x_support
                .binary_search_by(|v| v.partial_cmp(&x).unwrap())
                .ok()
                .map(|i| (i, p))
        })
        .collect()
}

/// Exact-match cache key for a solved grid: subproblem parameters bitwise,
/// projection support rounded to 1e-9, and the full grid configuration.
/// Bit-level noise in support probabilities therefore shares one solve; the
/// rounding matches the compatibility tolerance of Q-factor queries.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct Fingerprint(Vec<u64>);

pub fn fingerprint(spec: &SubproblemSpec, config: &GridConfig) -> Fingerprint {
    fn round9(v: f64) -> u64 {
        (v * 1e9).round() as i64 as u64
    }
    let mut words = vec![
        spec.cost.to_bits(),
        spec.discount.to_bits(),
        spec.noise_scale.to_bits(),
        config.mu_min.to_bits(),
        config.mu_max.to_bits(),
        config.mu_points as u64,
        config.beta0.to_bits(),
        config.beta_points as u64,
        config.tolerance.to_bits(),
        config.max_iterations as u64,
        config.quadrature_points as u64,
    ];
    for &(x, p) in spec.projection.support() {
        words.push(round9(x));
        words.push(round9(p));
    }
    Fingerprint(words)
}

/// FNV-1a over the canonical bit pattern of a spec; identifies the spec a
/// dumped grid was solved for.
pub(super) fn spec_hash(spec: &SubproblemSpec) -> u64 {
    let mut words = vec![
        spec.cost.to_bits(),
        spec.discount.to_bits(),
        spec.noise_scale.to_bits(),
    ];
    for &(x, p) in spec.projection.support() {
        words.push(x.to_bits());
        words.push(p.to_bits());
    }
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for word in words {
        for b in word.to_le_bytes() {
            h ^= b as u64;
            h = h.wrapping_mul(0x0000_0100_0000_01b3);
        }
    }
    h
}

fn write_u32<W: Write>(w: &mut W, v: u32) -> Result<()> {
    w.write_all(&v.to_le_bytes())?;
    Ok(())
}

fn write_u64<W: Write>(w: &mut W, v: u64) -> Result<()> {
    w.write_all(&v.to_le_bytes())?;
    Ok(())
}

fn write_f64<W: Write>(w: &mut W, v: f64) -> Result<()> {
    w.write_all(&v.to_le_bytes())?;
    Ok(())
}

fn read_u32<R: Read>(r: &mut R) -> Result<u32> {
    let mut buf = [0u8; 4];
    r.read_exact(&mut buf)?;
    Ok(u32::from_le_bytes(buf))
}

fn read_u64<R: Read>(r: &mut R) -> Result<u64> {
    let mut buf = [0u8; 8];
    r.read_exact(&mut buf)?;
    Ok(u64::from_le_bytes(buf))
}

fn read_f64<R: Read>(r: &mut R) -> Result<f64> {
    let mut buf = [0u8; 8];
    r.read_exact(&mut buf)?;
    Ok(f64::from_le_bytes(buf))
}
