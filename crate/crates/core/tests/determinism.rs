//! Seeded reproducibility, checkpoint freezing and a golden trace.

use klflow::baselines::{mixture_data_gen, MixingSpec, TwoMoonsSpec};
use klflow::flow::{deserialize, serialize};
use klflow::solver::{
    solve_algorithm1, BaseDraws, LrSchedule, SolveOutput, SolverConfig, StepSchedule,
};
use klflow::{BaseDistribution, FlowModel, LikelihoodKernel, Npmle};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn tiny_run(seed: u64) -> SolveOutput {
    let mut data_rng = ChaCha8Rng::seed_from_u64(99);
    let kernel = LikelihoodKernel::GaussianLocation;
    let (data, _) = mixture_data_gen(
        &MixingSpec::TwoMoons(TwoMoonsSpec::default()),
        kernel,
        50,
        &mut data_rng,
    )
    .unwrap();
    let npmle = Npmle::new(data, kernel);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let flow = FlowModel::identity(
        BaseDistribution::centered(2, 4.0).unwrap(),
        2,
        8,
        1,
        &mut rng,
    )
    .unwrap();
    let cfg = SolverConfig {
        outer_iters: 3,
        max_inner: 20,
        particles: 64,
        step: StepSchedule::constant(5.0),
        lr: LrSchedule::Geometric {
            gamma: 5e-3,
            decay: 0.912,
        },
        base_draws: BaseDraws::Global,
        keep_checkpoints: true,
        ..SolverConfig::default()
    };
    solve_algorithm1(&npmle, flow, &cfg, seed, &mut rng).unwrap()
}

#[test]
fn same_seed_reproduces_bit_for_bit() {
    let (a, b) = (tiny_run(4), tiny_run(4));
    let losses = |o: &SolveOutput| {
        o.records
            .iter()
            .map(|r| r.loss.to_bits())
            .collect::<Vec<_>>()
    };
    assert_eq!(losses(&a), losses(&b));
    assert_eq!(serialize(&a.flow), serialize(&b.flow));
    assert_ne!(losses(&a), losses(&tiny_run(5)));
}

#[test]
fn checkpoints_freeze_the_trained_flow() {
    let out = tiny_run(6);
    let restored = deserialize(out.checkpoints.last().unwrap()).unwrap();
    let mut r1 = ChaCha8Rng::seed_from_u64(1);
    let mut r2 = ChaCha8Rng::seed_from_u64(1);
    let (p, q) = (
        out.flow.sample(100, &mut r1).unwrap(),
        restored.sample(100, &mut r2).unwrap(),
    );
    assert_eq!(p.theta, q.theta);
    assert_eq!(p.log_density, q.log_density);
    assert_eq!(out.checkpoints.len(), out.records.len());
}

#[test]
fn golden_trace() {
    let out = tiny_run(7);
    let got: Vec<f64> = out.records.iter().map(|r| r.loss).collect();
    assert_eq!(got.len(), 3);
    let golden = [
        3.789_938_017_444_234_8,
        3.672_436_130_671_972,
        3.631_160_574_820_081_7,
    ];
    for (g, w) in got.iter().zip(golden) {
        assert!((g - w).abs() < 1e-9, "trace {got:?}");
    }
}
