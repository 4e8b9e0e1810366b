//! Value-iteration solver for the single-direction forwarding subproblem.
//!
//! A subproblem tracks a scalar belief (mu, beta) about one preference
//! direction; each arriving item projects onto the direction with magnitude
//! x drawn from a known law G. Forwarding earns x(mu - c) in expectation and
//! sharpens the belief; discarding earns nothing and learns nothing. The
//! solver discretizes (mu, beta, x), iterates the Bellman operator to a
//! fixed point, and answers interpolated Q-factor and exploration-benefit
//! queries for arbitrary states.

mod grid;
mod quadrature;
mod solver;

pub use grid::{
    fingerprint, Fingerprint, GridConfig, ValueGrid, BETA_FINITE_CAP, DEFAULT_BETA_POINTS,
    DEFAULT_MAX_ITERATIONS, DEFAULT_MU_POINTS, DEFAULT_TOLERANCE,
};
pub use quadrature::{QuadratureRule, DEFAULT_QUADRATURE_POINTS};
pub use solver::{exploration_benefit, q_factors, solve_subproblem, SubproblemSpec};
