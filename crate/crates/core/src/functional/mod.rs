//! Objective functionals over distributions, estimated on particle clouds.
//!
//! A [`Functional`] sees an equally weighted cloud `theta_1..theta_M` (and,
//! for entropy-type objectives, `log rho(theta_j)`), and reports a
//! differentiable estimate of `F(rho)` plus its first variation at each
//! particle. The proximal subproblem built on top of it lives in
//! [`subproblem_on`].

mod data;
mod npmle;
mod subproblem;
mod target;

pub use data::Dataset;
pub use npmle::{LikelihoodKernel, Npmle};
pub use subproblem::{
    fv_variance, sample_variance, subproblem_fv_variance, subproblem_loss, subproblem_on,
    SubproblemGraph, SubproblemValue,
};
pub use target::{KlTarget, PotentialTarget, ZeroFunctional};

use crate::error::Result;
use crate::tensor::{Tape, Tensor, Var};

/// A convex objective over probability distributions.
pub trait Functional: Send + Sync {
    /// Dimension of the parameter space.
    fn param_dim(&self) -> usize;

    /// Relative strong-convexity constant (`1` for KL objectives, `0` for likelihoods).
    fn strong_convexity(&self) -> f64;

    /// Whether the estimate depends on `log rho` at the particles.
    fn uses_log_density(&self) -> bool {
        false
    }

    /// Scalar estimate of `F` for the cloud `theta` (`M × d`) with
    /// per-particle log-densities `log_density` (`M × 1`).
    fn loss_on(&self, tape: &Tape, theta: Var, log_density: Var) -> Result<Var>;

    /// Plain estimate of `F`.
    fn value(&self, theta: &Tensor, log_density: &[f64]) -> Result<f64> {
        let tape = Tape::new();
        let t = tape.constant(theta.clone());
        let l = tape.constant(Tensor::column(log_density.to_vec()));
        let v = self.loss_on(&tape, t, l)?;
        Ok(tape.scalar_value(v))
    }

    /// First variation `δF/δρ` evaluated at every particle.
    fn first_variation(&self, theta: &Tensor, log_density: &[f64]) -> Result<Vec<f64>>;
}
