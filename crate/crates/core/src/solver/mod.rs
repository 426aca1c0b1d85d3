//! Outer and inner loops of implicit KL proximal descent with flows.
//!
//! Outer iteration `k` freezes the current flow as the proximal anchor
//! `rho_{k-1}`, then trains with a fresh Adam state on
//!
//! ```text
//! F(T_# rho_0) + (1 / (M tau_k)) sum_j [log rho_k(theta_j) - log rho_{k-1}(theta_j)]
//! ```
//!
//! either retraining the whole warm-started flow ([`solve_algorithm1`]) or
//! only an appended identity-initialised short flow, with periodic
//! compression into a shorter student ([`solve_algorithm2`]).
//! [`solve_stochastic`] swaps the likelihood for a fresh mini-batch at every
//! outer iteration.

mod algorithms;
mod config;
mod inner;
mod record;
mod stopping;

pub use algorithms::{
    distill, solve_algorithm1, solve_algorithm2, solve_stochastic, DistillEvent, SolveOutput,
};
pub use config::{
    BaseDraws, ComposeConfig, InnerThreshold, LrSchedule, SolverConfig, StepSchedule,
    StochasticConfig,
};
pub use inner::{solve_subproblem, InnerOutcome, SubproblemSettings};
pub use record::{read_records, write_records, RunRecord, RECORD_COLUMNS};
pub use stopping::{
    outer_stop, stopping_check, InnerObservation, StopMonitor, StopReason, StopThresholds,
};
