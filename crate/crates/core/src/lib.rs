//! Solvers for the rank-based mean-field game of optimal switching.
//!
//! A continuum of agents race to arrival under Poisson clocks whose intensity
//! is one of finitely many effort levels. Each agent may switch effort
//! regimes at a cost and is rewarded according to its arrival rank. The
//! crate computes:
//!
//! - the entropy-regularized equilibrium by fictitious play ([`fictitious`]),
//!   built on a backward HJB solver ([`hjb`]) and a forward Kolmogorov solver
//!   ([`kolmogorov`]);
//! - the unregularized value function by an obstacle scheme, a vanishing
//!   entropy sweep and martingale checks of candidate relaxed equilibria
//!   ([`limit`]);
//! - finite-population Monte Carlo checks of the mean-field limit
//!   ([`montecarlo`]).
//!
//! Every solver shares one uniform [`TimeGrid`], so forward and backward
//! trajectories line up node for node.

// NaN-rejecting `!(x > 0.0)` checks and index loops over regimes are intended.
#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]
pub mod config;
pub mod error;
pub mod fictitious;
pub mod grid;
pub mod hjb;
pub mod io;
pub mod kolmogorov;
pub mod limit;
pub mod model;
pub mod montecarlo;
pub(crate) mod rk4;

pub use error::{Error, Result};
pub use grid::{project_to_d, AggregateProgress, GridFunction, TimeGrid};
pub use model::{validate_model, ModelSpec, RewardScheme, ValidationReport};
