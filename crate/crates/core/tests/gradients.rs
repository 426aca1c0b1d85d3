//! Tape gradients of every training loss against central differences, and
//! flow log-determinants against numerical Jacobians.

mod common;

use common::{numerical_logdet, random_flow, subproblem_gradient_error};
use klflow::baselines::{mixture_data_gen, MixingSpec, TwoMoonsSpec};
use klflow::{KlTarget, LikelihoodKernel, Npmle, PotentialTarget};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

#[test]
fn location_likelihood_gradients_match_finite_differences() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let kernel = LikelihoodKernel::GaussianLocation;
    let (data, _) = mixture_data_gen(
        &MixingSpec::TwoMoons(TwoMoonsSpec::default()),
        kernel,
        40,
        &mut rng,
    )
    .unwrap();
    let err = subproblem_gradient_error(&Npmle::new(data, kernel), 2, 2.0, 10);
    assert!(err < 1e-4, "relative error {err:e}");
}

#[test]
fn location_scale_likelihood_gradients_match_finite_differences() {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let kernel = LikelihoodKernel::GaussianLocationScale;
    let (data, _) = mixture_data_gen(
        &MixingSpec::TwoMoons(TwoMoonsSpec::default()),
        kernel,
        40,
        &mut rng,
    )
    .unwrap();
    let err = subproblem_gradient_error(&Npmle::new(data, kernel), 4, 1.0, 20);
    assert!(err < 1e-4, "relative error {err:e}");
}

#[test]
fn kl_target_gradients_match_finite_differences() {
    for (alpha, seed) in [(1.0, 30), (2.0, 31), (3.0, 32)] {
        let target = KlTarget::new(PotentialTarget::new(alpha).unwrap(), 2).unwrap();
        let err = subproblem_gradient_error(&target, 2, 5.0, seed);
        assert!(err < 1e-4, "alpha {alpha}: relative error {err:e}");
    }
}

#[test]
fn plain_objective_gradients_match_finite_differences() {
    let target = KlTarget::new(PotentialTarget::new(2.0).unwrap(), 2).unwrap();
    let err = subproblem_gradient_error(&target, 2, f64::INFINITY, 40);
    assert!(err < 1e-4, "relative error {err:e}");
}

#[test]
fn log_determinants_match_numerical_jacobians() {
    for dim in 1..=4 {
        let flow = random_flow(dim, 4, 50 + dim as u64);
        let mut rng = ChaCha8Rng::seed_from_u64(60);
        let x = flow.base().sample(10, &mut rng);
        let (_, logdet) = flow.forward(&x).unwrap();
        for (i, ld) in logdet.iter().enumerate() {
            let num = numerical_logdet(&flow, x.row_slice(i));
            assert!(
                (num - ld).abs() < 1e-5,
                "d={dim} point {i}: tape {ld} numerical {num}"
            );
        }
    }
}

#[test]
fn inverse_round_trip_is_tight() {
    let flow = random_flow(3, 10, 70);
    let mut rng = ChaCha8Rng::seed_from_u64(71);
    let p = flow.sample(500, &mut rng).unwrap();
    assert!(flow.inverse(&p.theta).unwrap().sup_dist(&p.base) < 1e-6);
}
