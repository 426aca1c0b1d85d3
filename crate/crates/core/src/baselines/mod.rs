//! Comparison methods, accuracy metrics and synthetic data.
//!
//! The fixed-grid weight baseline lives with the other grid methods in
//! [`crate::simplex`]; this module has the particle Langevin sampler, the
//! Wasserstein-1 estimate by exact assignment, log objective gaps, the
//! two-moons and mixture generators and an exact sampler for radial targets.

mod generators;
pub mod io;
mod langevin;
mod metrics;
mod wasserstein;

pub use generators::{
    ln_gamma, mixture_data_gen, two_moons_sample, MixingSpec, RadialTargetSampler, TwoMoonsSpec,
};
pub use io::{read_cloud, write_cloud};
pub use langevin::{langevin_run, langevin_step, LangevinRun, DIVERGENCE_NORM};
pub use metrics::{nll_gap, GapPoint, GAP_FLOOR};
pub use wasserstein::{
    min_cost_assignment, w1_distance, w1_exact, w1_subsampled, W1_CAP, W1_REPEATS,
};
