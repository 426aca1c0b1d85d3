//! Real-NVP style affine coupling flows.
//!
//! A [`FlowModel`] pushes an isotropic Gaussian [`BaseDistribution`] through
//! a stack of [`CouplingBlock`]s. Densities follow from the change of
//! variables `log rho(theta) = log rho_0(T^{-1} theta) - log|det J_T|`, where
//! the log-determinant of each block is the sum of its log-scales. Every map
//! exists twice: as plain evaluation on [`Tensor`](crate::Tensor)s and
//! recorded on a [`Tape`](crate::Tape) for training.

mod base;
pub mod checkpoint;
mod coupling;
mod model;

pub use base::BaseDistribution;
pub use checkpoint::{deserialize, serialize};
pub use coupling::{BlockVars, CouplingBlock, Layer, DEFAULT_SCALE_BOUND};
pub use model::{identity_blocks, BoundFlow, FlowModel, Particles};
