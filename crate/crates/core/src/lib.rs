//! Safe-set guided, state-wise constrained policy optimization.
//!
//! The crate bundles everything needed to train a navigation policy with
//! zero safety violations during training:
//!
//! * [`env2d`]: a deterministic point-robot navigation task with hazards and
//!   pillars whose dynamics can be queried as a black box;
//! * [`safety`]: an energy-function safety index, the discrete safe-control
//!   test and the projection of nominal actions onto the safe set;
//! * [`mmdp`]: the maximum-MDP bookkeeping that turns per-step imaginary
//!   costs into a single expected-maximum constraint;
//! * [`policy`]: Gaussian MLP policy and value networks with analytic
//!   gradients and Fisher-vector products;
//! * [`trpo`]: conjugate gradient, the linearized constrained trust-region
//!   subproblem and the scheduled backtracking line search;
//! * [`algos`]: S-3PO and the TRPO, TRPO-ISSA, TRPO-Lagrangian and SCPO
//!   baselines;
//! * [`harness`]: training, evaluation without the filter, the trajectory
//!   equivalence check, persistence and plots;
//! * [`config`] and [`cli`]: run configuration and the command-line front end.

#[cfg(test)]
macro_rules! assert_close {
    ($a:expr, $b:expr, $tol:expr) => {{
        let (a, b): (f64, f64) = ($a, $b);
        assert!((a - b).abs() <= $tol, "{} vs {} (tol {})", a, b, $tol);
    }};
}

pub mod algos;
pub mod cli;
pub mod config;
pub mod env2d;
pub mod error;
pub mod harness;
pub mod mmdp;
pub mod policy;
pub mod rng;
pub mod safety;
pub mod trpo;

pub use error::{Error, Result};
