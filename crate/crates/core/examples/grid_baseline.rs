//! The fixed-grid baseline: explicit weight updates on a grid of atoms
//! spread over the data range.
//!
//! Run with `cargo run --release --example grid_baseline`.

use klflow::baselines::{mixture_data_gen, MixingSpec, TwoMoonsSpec};
use klflow::simplex::{grid_box, kw_grid_solver, GridObjective};
use klflow::LikelihoodKernel;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn main() -> klflow::Result<()> {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let kernel = LikelihoodKernel::GaussianLocation;
    let (data, _) = mixture_data_gen(
        &MixingSpec::TwoMoons(TwoMoonsSpec::default()),
        kernel,
        500,
        &mut rng,
    )?;
    let l = data.sup_norm();
    for points in [10, 20, 40] {
        let atoms = grid_box(&[-l, -l], &[l, l], &[points, points])?;
        let obj = GridObjective::npmle(&data, kernel, &atoms)?;
        let run = kw_grid_solver(&obj, &atoms, 1.0, 200)?;
        println!(
            "{points:2}x{points:<2} grid: loss {:.5} after {} steps ({} step halvings)",
            run.losses.last().copied().unwrap_or(f64::NAN),
            run.losses.len() - 1,
            run.backtracks
        );
    }
    Ok(())
}
