//! Implicit KL proximal descent on the mixture likelihood: one freshly
//! trained flow per outer step, each fitted to the proximal subproblem
//! anchored at the previous flow.
//!
//! Run with `cargo run --release --example iklpd_npmle`.

use klflow::baselines::{mixture_data_gen, MixingSpec, TwoMoonsSpec};
use klflow::solver::{solve_algorithm1, BaseDraws, LrSchedule, SolverConfig, StepSchedule};
use klflow::{BaseDistribution, FlowModel, LikelihoodKernel, Npmle};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn main() -> klflow::Result<()> {
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let kernel = LikelihoodKernel::GaussianLocation;
    let (data, _) = mixture_data_gen(
        &MixingSpec::TwoMoons(TwoMoonsSpec::default()),
        kernel,
        300,
        &mut rng,
    )?;
    let npmle = Npmle::new(data, kernel);

    let flow = FlowModel::identity(BaseDistribution::centered(2, 4.0)?, 6, 32, 1, &mut rng)?;
    let cfg = SolverConfig {
        outer_iters: 8,
        max_inner: 100,
        particles: 400,
        step: StepSchedule::Geometric {
            tau: 5.0,
            growth: 1.15,
        },
        lr: LrSchedule::Geometric {
            gamma: 5e-3,
            decay: 0.912,
        },
        base_draws: BaseDraws::Global,
        ..SolverConfig::default()
    };
    let out = solve_algorithm1(&npmle, flow, &cfg, 1, &mut rng)?;
    for r in &out.records {
        println!(
            "k={:2}  loss {:.5}  KL step {:.2e}  first-variation variance {:.2e}  inner {:3} ({})",
            r.k, r.loss, r.kl_step, r.fv_var, r.inner_iters, r.stop_reason
        );
    }
    klflow::solver::write_records(&out.records, std::io::stdout())?;
    Ok(())
}
