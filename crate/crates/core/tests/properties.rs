//! Invariants under random inputs.

use klflow::baselines::w1_exact;
use klflow::functional::{Dataset, LikelihoodKernel, PotentialTarget};
use klflow::harness::mean_stderr;
use klflow::simplex::{
    grid_1d, implicit_step_exact, kl_closed_form_step, kl_divergence, three_point_slack,
    GridObjective, SimplexDistribution, StepOptions, EXACT_TOL,
};
use klflow::{BaseDistribution, FlowModel, Tensor};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn masses(n: usize) -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(0.01f64..10.0, n)
}

fn likelihood(atoms: &Tensor, seed: u64) -> GridObjective {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let rows: Vec<Vec<f64>> = (0..30)
        .map(|_| vec![4.0 * rng.random::<f64>() - 2.0])
        .collect();
    GridObjective::npmle(
        &Dataset::from_rows(&rows).unwrap(),
        LikelihoodKernel::GaussianLocation,
        atoms,
    )
    .unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn kl_is_nonnegative_and_zero_on_the_diagonal(p in masses(12), q in masses(12)) {
        let atoms = grid_1d(-1.0, 1.0, 12).unwrap();
        let p = SimplexDistribution::from_masses(atoms.clone(), p).unwrap();
        let q = SimplexDistribution::from_masses(atoms, q).unwrap();
        prop_assert!(kl_divergence(p.weights(), q.weights()) >= 0.0);
        prop_assert!(kl_divergence(p.weights(), p.weights()).abs() < 1e-14);
    }

    #[test]
    fn objectives_are_convex_along_mixtures(p in masses(15), q in masses(15), t in 0.0f64..1.0, seed in 0u64..1000) {
        let atoms = grid_1d(-2.5, 2.5, 15).unwrap();
        let p = SimplexDistribution::from_masses(atoms.clone(), p).unwrap();
        let q = SimplexDistribution::from_masses(atoms.clone(), q).unwrap();
        let mix = p.mix(&q, t).unwrap();
        for obj in [likelihood(&atoms, seed), GridObjective::kl_target(&PotentialTarget::new(2.0).unwrap(), &atoms)] {
            let lhs = obj.value(&mix).unwrap();
            let rhs = (1.0 - t) * obj.value(&p).unwrap() + t * obj.value(&q).unwrap();
            prop_assert!(lhs <= rhs + 1e-10, "{lhs} > {rhs}");
        }
    }

    #[test]
    fn exact_step_stays_on_simplex_and_descends(p in masses(20), tau in 0.05f64..8.0, seed in 0u64..1000) {
        let atoms = grid_1d(-2.5, 2.5, 20).unwrap();
        let obj = likelihood(&atoms, seed);
        let prev = SimplexDistribution::from_masses(atoms, p).unwrap();
        let next = implicit_step_exact(&obj, &prev, tau, EXACT_TOL, &StepOptions::default()).unwrap().next;
        let sum: f64 = next.weights().iter().sum();
        prop_assert!((sum - 1.0).abs() < 1e-12);
        prop_assert!(next.weights().iter().all(|w| *w > 0.0));
        let prox = obj.value(&next).unwrap() + kl_divergence(next.weights(), prev.weights()) / tau;
        prop_assert!(prox <= obj.value(&prev).unwrap() + 1e-10);
    }

    #[test]
    fn kl_target_step_matches_geometric_mixture(p in masses(20), tau in 0.05f64..8.0) {
        let atoms = grid_1d(-3.0, 3.0, 20).unwrap();
        let obj = GridObjective::kl_target(&PotentialTarget::new(1.0).unwrap(), &atoms);
        let pi = obj.known_minimizer().unwrap();
        let log_pi: Vec<f64> = pi.iter().map(|w| w.ln()).collect();
        let prev = SimplexDistribution::from_masses(atoms, p).unwrap();
        let solved = implicit_step_exact(&obj, &prev, tau, EXACT_TOL, &StepOptions::default()).unwrap().next;
        let closed = kl_closed_form_step(&log_pi, &prev, tau).unwrap();
        let err = solved.weights().iter().zip(closed.weights()).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        prop_assert!(err < 1e-10, "max difference {err:e}");
    }

    #[test]
    fn three_point_inequality_holds(p in masses(16), probe in masses(16), tau in 0.1f64..5.0, seed in 0u64..1000) {
        let atoms = grid_1d(-2.5, 2.5, 16).unwrap();
        let prev = SimplexDistribution::from_masses(atoms.clone(), p).unwrap();
        let probe = SimplexDistribution::from_masses(atoms.clone(), probe).unwrap();
        for obj in [likelihood(&atoms, seed), GridObjective::kl_target(&PotentialTarget::new(2.0).unwrap(), &atoms)] {
            let next = implicit_step_exact(&obj, &prev, tau, EXACT_TOL, &StepOptions::default()).unwrap().next;
            let slack = three_point_slack(&obj, &prev, &next, &probe, tau, obj.lambda()).unwrap();
            prop_assert!(slack >= -1e-8, "slack {slack:e}");
        }
    }

    #[test]
    fn w1_is_a_metric_on_equal_clouds(seed in 0u64..10_000) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let cloud = |rng: &mut ChaCha8Rng| {
            Tensor::matrix(12, 2, (0..24).map(|_| 3.0 * rng.random::<f64>()).collect()).unwrap()
        };
        let (a, b, c) = (cloud(&mut rng), cloud(&mut rng), cloud(&mut rng));
        prop_assert!(w1_exact(&a, &a).unwrap().abs() < 1e-12);
        let ab = w1_exact(&a, &b).unwrap();
        prop_assert!((ab - w1_exact(&b, &a).unwrap()).abs() < 1e-12);
        prop_assert!(ab <= w1_exact(&a, &c).unwrap() + w1_exact(&c, &b).unwrap() + 1e-12);
    }

    #[test]
    fn stderr_is_shift_invariant_and_scales(values in prop::collection::vec(-5.0f64..5.0, 2..30), shift in -10.0f64..10.0, scale in 0.1f64..10.0) {
        let (m, s) = mean_stderr(&values);
        let moved: Vec<f64> = values.iter().map(|v| scale * v + shift).collect();
        let (m2, s2) = mean_stderr(&moved);
        prop_assert!((m2 - (scale * m + shift)).abs() < 1e-9);
        prop_assert!((s2 - scale * s).abs() < 1e-9 * (1.0 + s2));
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn random_flows_invert_and_agree_on_density(seed in 0u64..10_000, dim in 1usize..5, blocks in 1usize..8) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut flow = FlowModel::identity(BaseDistribution::centered(dim, 2.0).unwrap(), blocks, 8, 1, &mut rng).unwrap();
        for block in flow.blocks_mut() {
            for p in block.params_mut() {
                for v in p.data_mut() {
                    *v += rng.random::<f64>() - 0.5;
                }
            }
        }
        let p = flow.sample(64, &mut rng).unwrap();
        prop_assert!(flow.inverse(&p.theta).unwrap().sup_dist(&p.base) < 1e-6);
        let direct = flow.log_density(&p.theta).unwrap();
        for (a, b) in direct.iter().zip(&p.log_density) {
            prop_assert!((a - b).abs() < 1e-6);
        }
    }
}
