//! Variational sampling from `exp(-||x||^{2 alpha} / (2 alpha))` by proximal
//! flow steps, compared with unadjusted Langevin particles by
//! Wasserstein-1 distance to an exact target sample.
//!
//! Run with `cargo run --release --example sampling_vs_langevin`.

use klflow::baselines::{langevin_run, w1_distance, RadialTargetSampler};
use klflow::flow::deserialize;
use klflow::solver::{solve_algorithm1, LrSchedule, SolverConfig, StepSchedule};
use klflow::{BaseDistribution, FlowModel, KlTarget, PotentialTarget};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn main() -> klflow::Result<()> {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let potential = PotentialTarget::new(2.0)?;
    let target = KlTarget::new(potential, 2)?;
    let reference = RadialTargetSampler::new(&potential, 2)?.sample_quasi(512, &mut rng)?;
    let base = BaseDistribution::centered(2, 9.0)?;

    let cfg = SolverConfig {
        outer_iters: 6,
        max_inner: 100,
        particles: 500,
        step: StepSchedule::constant(5.0),
        lr: LrSchedule::Geometric {
            gamma: 5e-3,
            decay: 0.912,
        },
        keep_checkpoints: true,
        ..SolverConfig::default()
    };
    let flow = FlowModel::identity(base.clone(), 6, 32, 1, &mut rng)?;
    let out = solve_algorithm1(&target, flow, &cfg, 1, &mut rng)?;
    let langevin = langevin_run(
        &potential,
        1e-2,
        base.sample(500, &mut rng),
        cfg.outer_iters,
        1,
        &mut rng,
    )?;

    for ((r, bytes), cloud) in out
        .records
        .iter()
        .zip(&out.checkpoints)
        .zip(&langevin.snapshots)
    {
        let p = deserialize(bytes)?.sample(512, &mut rng)?;
        println!(
            "k={}  W1 flow {:.4}  W1 langevin {:.4}",
            r.k,
            w1_distance(&p.theta, &reference, &mut rng)?,
            w1_distance(cloud, &reference, &mut rng)?
        );
    }
    Ok(())
}
