//! Simulation laboratory for Bayesian linear information filtering.
//!
//! Items arrive one at a time, each described by a nonnegative feature
//! vector; a filtering policy decides per item whether to forward it to a
//! user at a fixed cost, observing a noisy linear relevance reward only for
//! forwarded items. The crate provides:
//!
//! - [`model`]: feature vectors, item distributions, Gaussian beliefs and
//!   their conjugate updates, and projection geometry.
//! - [`dp`]: a value-iteration solver for the single-feature forwarding
//!   subproblem on a discretized (mean, precision, magnitude) state space,
//!   with interpolated Q-factors and the exploration benefit.
//! - [`bound`]: the instance-specific upper bound on any policy's value
//!   (per-feature decomposition bound, hindsight bound, and their minimum).
//! - [`policy`]: five decision rules behind one interface: pure
//!   exploitation, UCB, linear Thompson sampling, and the two
//!   decompose-then-decide rules (DP-priced and mean-projection-scaled UCB).
//! - [`sim`]: seeded Monte Carlo episode simulation, value estimation with
//!   confidence intervals, alpha tuning, and cost sweeps with common random
//!   numbers.
//! - [`prior_fit`]: building an empirical multivariate normal prior from
//!   historical ratings via per-user least squares.
//! - [`config`]: the experiment configuration format consumed by the
//!   `infofilter` binary.
//!
//! All randomness flows through explicit seeds; reruns with the same
//! configuration and seed are bit-identical.

pub mod bound;
pub mod config;
pub mod dp;
pub mod error;
pub mod model;
pub mod policy;
pub mod prior_fit;
pub mod rng;
pub mod sim;

pub use error::{Error, Result};
