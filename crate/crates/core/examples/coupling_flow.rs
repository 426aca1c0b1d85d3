//! An affine-coupling flow: sampling, exact inversion and the change of
//! variables. The density of a two-dimensional flow is integrated on a grid
//! to check that it carries unit mass.
//!
//! Run with `cargo run --release --example coupling_flow`.

use klflow::{BaseDistribution, FlowModel};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn main() -> klflow::Result<()> {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut flow = FlowModel::identity(BaseDistribution::centered(2, 1.0)?, 6, 16, 1, &mut rng)?;
    for block in flow.blocks_mut() {
        for p in block.params_mut() {
            for v in p.data_mut() {
                *v += 0.3 * (rng.random::<f64>() - 0.5);
            }
        }
    }

    let p = flow.sample(1000, &mut rng)?;
    let back = flow.inverse(&p.theta)?;
    println!(
        "inverse round trip: max error {:.2e}",
        back.sup_dist(&p.base)
    );
    let direct = flow.log_density(&p.theta)?;
    let err = direct
        .iter()
        .zip(&p.log_density)
        .map(|(a, b)| (a - b).abs())
        .fold(0.0, f64::max);
    println!("pathwise vs inverse log-density: max difference {err:.2e}");

    let (n, half) = (241usize, 8.0);
    let h = 2.0 * half / (n - 1) as f64;
    let mut rows = Vec::with_capacity(n * n);
    for i in 0..n {
        for j in 0..n {
            rows.push(vec![-half + i as f64 * h, -half + j as f64 * h]);
        }
    }
    let grid = klflow::Tensor::from_rows(&rows)?;
    let mass: f64 = flow
        .log_density(&grid)?
        .iter()
        .map(|l| l.exp())
        .sum::<f64>()
        * h
        * h;
    println!("density integrates to {mass:.5} on [-{half}, {half}]^2");
    Ok(())
}
