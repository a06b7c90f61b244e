//! The unregularized game: obstacle-scheme value function, pure-strategy
//! payoffs, the vanishing-entropy sweep and relaxed-equilibrium checks.

pub mod oracle;
pub mod paths;
pub mod sweep;
pub mod verify;
pub mod vi;

pub use oracle::brute_force_best_response;
pub use paths::{pure_payoff, y_functional, SwitchingPath, YTrace};
pub use sweep::{eta_sweep, SweepReport};
pub use verify::{verify_relaxed_equilibrium, VerificationReport, VerifyOptions};
pub use vi::{solve_hjbvi, viscosity_residual, ViscosityResidual};
