//! The stochastic variant: every outer step sees a fresh mini-batch of the
//! data instead of the full likelihood.
//!
//! Run with `cargo run --release --example iklpd_stochastic`.

use klflow::baselines::{mixture_data_gen, MixingSpec, TwoMoonsSpec};
use klflow::solver::{
    solve_stochastic, BaseDraws, LrSchedule, SolverConfig, StepSchedule, StochasticConfig,
};
use klflow::{BaseDistribution, FlowModel, LikelihoodKernel, Npmle};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn main() -> klflow::Result<()> {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let kernel = LikelihoodKernel::GaussianLocation;
    let (data, _) = mixture_data_gen(
        &MixingSpec::TwoMoons(TwoMoonsSpec::default()),
        kernel,
        500,
        &mut rng,
    )?;
    let npmle = Npmle::new(data, kernel);
    let flow = FlowModel::identity(BaseDistribution::centered(2, 4.0)?, 6, 32, 1, &mut rng)?;
    let cfg = SolverConfig {
        outer_iters: 10,
        max_inner: 100,
        particles: 400,
        step: StepSchedule::constant(5.0),
        lr: LrSchedule::Reciprocal {
            gamma: 5e-3,
            horizon: 27.0,
        },
        base_draws: BaseDraws::Global,
        ..SolverConfig::default()
    };
    let out = solve_stochastic(
        &npmle,
        flow,
        &cfg,
        &StochasticConfig { batch_size: 50 },
        1,
        &mut rng,
    )?;
    for r in &out.records {
        println!(
            "k={:2}  full-data loss {:.5}  inner {:3}",
            r.k, r.loss, r.inner_iters
        );
    }
    Ok(())
}
