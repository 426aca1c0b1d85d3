//! The composing variant: each outer step appends a short trainable flow to
//! the frozen previous one, and the chain is distilled into a shorter
//! student whenever it grows past a length limit.
//!
//! Run with `cargo run --release --example iklpd_composed`.

use klflow::baselines::{mixture_data_gen, MixingSpec, TwoMoonsSpec};
use klflow::solver::{
    solve_algorithm2, BaseDraws, ComposeConfig, LrSchedule, SolverConfig, StepSchedule,
};
use klflow::{BaseDistribution, FlowModel, LikelihoodKernel, Npmle};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn main() -> klflow::Result<()> {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let kernel = LikelihoodKernel::GaussianLocation;
    let (data, _) = mixture_data_gen(
        &MixingSpec::TwoMoons(TwoMoonsSpec::default()),
        kernel,
        300,
        &mut rng,
    )?;
    let npmle = Npmle::new(data, kernel);

    let compose = ComposeConfig {
        short_len: 2,
        max_len: 8,
        compressed_len: 4,
        distill_iters: 300,
        distill_lr: 1e-3,
        distill_tol: 1e-4,
        width: 32,
        hidden_layers: 1,
    };
    let flow = FlowModel::identity(
        BaseDistribution::centered(2, 4.0)?,
        compose.short_len,
        32,
        1,
        &mut rng,
    )?;
    let cfg = SolverConfig {
        outer_iters: 8,
        max_inner: 100,
        particles: 400,
        step: StepSchedule::constant(5.0),
        lr: LrSchedule::Geometric {
            gamma: 5e-3,
            decay: 0.912,
        },
        base_draws: BaseDraws::Global,
        ..SolverConfig::default()
    };
    let out = solve_algorithm2(&npmle, flow, &cfg, &compose, 1, &mut rng)?;
    for r in &out.records {
        println!("k={:2}  loss {:.5}  inner {:3}", r.k, r.loss, r.inner_iters);
    }
    for e in &out.distillations {
        println!(
            "compressed at k={}: {} steps, output L2 {:.2e} (reached tolerance: {}), loss {:.5} -> {:.5}",
            e.k, e.steps, e.l2, e.reached_tol, e.loss_before, e.loss_after
        );
    }
    println!("final flow has {} blocks", out.flow.len());
    Ok(())
}
