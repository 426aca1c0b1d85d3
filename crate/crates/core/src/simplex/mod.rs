//! Proximal descent on a fixed finite grid.
//!
//! With the support pinned to a grid, a distribution is a weight vector and
//! every implicit step can be solved to machine precision by multiplicative
//! updates. This makes the convergence guarantees checkable as plain
//! inequalities between computed numbers: contraction for strongly convex
//! targets, the sublinear bound for likelihoods, the inexact and stochastic
//! variants, the continuous-time flow and the three-point inequality. The
//! fixed-grid weight baseline also lives here.

mod dist;
mod klgf;
mod kw;
mod objective;
mod report;
mod step;
mod verify;

pub use dist::{
    grid_1d, grid_box, kl_divergence, kl_from_logs, l1_distance, oscillation, SimplexDistribution,
    SIMPLEX_TOL,
};
pub use klgf::{integrate_klgf, KlgfRun};
pub use kw::{grid_npmle_reference, kw_grid_solver, KwRun};
pub use objective::{simplex_fv, GridObjective};
pub use report::{BoundReport, BoundRow};
pub use step::{
    implicit_step_exact, kl_closed_form_step, run_iklpd, run_iklpd_with, SimplexRunConfig,
    SimplexTrajectory, StepOptions, StepOutcome, Tolerance, EXACT_TOL,
};
pub use verify::{
    estimate_lipschitz_sq, three_point_slack, verify_exact_rates, verify_inexact_rates,
    verify_stochastic_rates, InexactOutcome, InexactRegime, Reference, StochasticCheck,
    StochasticOutcome, BOUND_SLACK,
};
