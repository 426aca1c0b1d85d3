//! Exact proximal steps on a finite grid: the KL target contracts
//! geometrically to its known minimiser, and the likelihood gap obeys the
//! sublinear envelope.
//!
//! Run with `cargo run --release --example simplex_exact`.

use klflow::functional::{Dataset, LikelihoodKernel, PotentialTarget};
use klflow::simplex::{
    grid_1d, grid_npmle_reference, kl_divergence, run_iklpd, GridObjective, SimplexDistribution,
    SimplexRunConfig,
};

fn main() -> klflow::Result<()> {
    let atoms = grid_1d(-3.0, 3.0, 20)?;
    let target = GridObjective::kl_target(&PotentialTarget::new(1.0)?, &atoms);
    let star = target.known_minimizer().expect("closed form");
    let rho0 =
        SimplexDistribution::from_masses(atoms.clone(), (0..20).map(|j| 1.0 + j as f64).collect())?;
    let traj = run_iklpd(
        &target,
        &rho0,
        &SimplexRunConfig::exact(1.0, target.lambda()),
        10,
    )?;
    for (k, rho) in traj.iterates.iter().enumerate() {
        let kl = kl_divergence(&star, rho.weights());
        let bound = 1.5f64.powi(-(k as i32)) * kl_divergence(&star, rho0.weights());
        println!("k={k:2}  KL(star || rho_k) {kl:.3e}  envelope {bound:.3e}");
    }

    let rows: Vec<Vec<f64>> = (0..60)
        .map(|i| vec![if i % 2 == 0 { -2.0 } else { 2.0 } + ((i as f64) * 0.37).sin()])
        .collect();
    let data = Dataset::from_rows(&rows)?;
    let grid = grid_1d(-3.5, 3.5, 40)?;
    let npmle = GridObjective::npmle(&data, LikelihoodKernel::GaussianLocation, &grid)?;
    let (star, f_star) = grid_npmle_reference(&npmle, &grid, 20_000)?;
    let uniform = SimplexDistribution::uniform(grid.clone());
    let d0 = kl_divergence(star.weights(), uniform.weights());
    let traj = run_iklpd(&npmle, &uniform, &SimplexRunConfig::exact(1.0, 0.0), 50)?;
    for k in [1, 5, 10, 25, 50] {
        let gap = npmle.value(&traj.iterates[k])? - f_star;
        println!(
            "k={k:2}  likelihood gap {gap:.3e}  envelope D0/k {:.3e}",
            d0 / k as f64
        );
    }
    Ok(())
}
