//! Minimising convex functionals over probability distributions by implicit
//! KL proximal descent.
//!
//! Each outer step solves
//!
//! ```text
//! rho_k = argmin_rho  F(rho) + (1 / tau_k) KL(rho || rho_{k-1})
//! ```
//!
//! Two realisations live side by side:
//!
//! * [`solver`] trains a sequence of affine-coupling normalizing flows
//!   ([`flow`]) on top of a small reverse-mode autodiff engine ([`tensor`]),
//!   one flow per outer step, for objectives defined in [`functional`]
//!   (mixture-model likelihoods and KL to an unnormalised target).
//! * [`simplex`] runs the same iteration exactly on a finite grid of atoms,
//!   where every quantity in the convergence bounds can be evaluated to
//!   machine precision and checked.
//!
//! [`baselines`] holds the comparison methods and metrics (unadjusted
//! Langevin, fixed-grid weight updates through [`simplex`], Wasserstein-1
//! by exact assignment), and [`harness`] wires everything into configurable
//! experiments with CSV/SVG output. The `klflow` binary is a thin front-end
//! over [`harness`]; the crate's `examples/` directory has one runnable
//! program per capability.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod baselines;
pub mod error;
pub mod flow;
pub mod functional;
pub mod harness;
pub mod simplex;
pub mod solver;
pub mod tensor;

pub use error::{Error, Result};
pub use flow::{BaseDistribution, CouplingBlock, FlowModel, Particles};
pub use functional::{Dataset, Functional, KlTarget, LikelihoodKernel, Npmle, PotentialTarget};
pub use tensor::{AdamState, Tape, Tensor, Var};
