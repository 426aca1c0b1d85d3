//! Helpers shared by the integration tests.
#![allow(dead_code)]

use klflow::functional::{subproblem_loss, subproblem_on};
use klflow::{BaseDistribution, FlowModel, Functional, Tape, Tensor};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn jitter(flow: &mut FlowModel, amount: f64, rng: &mut ChaCha8Rng) {
    for block in flow.blocks_mut() {
        for p in block.params_mut() {
            for v in p.data_mut() {
                *v += amount * (rng.random::<f64>() - 0.5);
            }
        }
    }
}

pub fn random_flow(dim: usize, blocks: usize, seed: u64) -> FlowModel {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut flow = FlowModel::identity(
        BaseDistribution::centered(dim, 1.5).unwrap(),
        blocks,
        8,
        1,
        &mut rng,
    )
    .unwrap();
    jitter(&mut flow, 0.6, &mut rng);
    flow
}

/// Largest relative error over sampled parameter entries of the subproblem loss.
pub fn subproblem_gradient_error(
    functional: &dyn Functional,
    dim: usize,
    tau: f64,
    seed: u64,
) -> f64 {
    let current = random_flow(dim, 3, seed);
    let anchor = random_flow(dim, 3, seed + 100);
    let mut rng = ChaCha8Rng::seed_from_u64(seed + 200);
    let base = current.base().sample(48, &mut rng);

    let tape = Tape::new();
    let cur = current.bind(&tape, false);
    let anc = anchor.bind(&tape, true);
    let graph = subproblem_on(&tape, functional, &cur, &anc, &base, tau).unwrap();
    let grads = tape.backward(graph.loss).unwrap();
    let analytic: Vec<Tensor> = cur
        .trainable_vars(&tape)
        .into_iter()
        .map(|v| grads.get(v))
        .collect();

    let params = current.trainable_params();
    let eval = |params: &[Tensor]| {
        let mut f = current.clone();
        f.set_trainable_params(params).unwrap();
        subproblem_loss(functional, &f, &anchor, &base, tau)
            .unwrap()
            .loss
    };
    let h = 1e-5;
    let mut worst: f64 = 0.0;
    for _ in 0..40 {
        let t = rng.random_range(0..params.len());
        let i = rng.random_range(0..params[t].numel());
        let (mut up, mut down) = (params.clone(), params.clone());
        up[t].data_mut()[i] += h;
        down[t].data_mut()[i] -= h;
        let fd = (eval(&up) - eval(&down)) / (2.0 * h);
        let ad = analytic[t].data()[i];
        let scale = ad.abs().max(fd.abs());
        if scale > 1e-7 {
            worst = worst.max((fd - ad).abs() / scale);
        }
    }
    worst
}

/// `log|det J|` from central differences of the forward map.
pub fn numerical_logdet(flow: &FlowModel, x: &[f64]) -> f64 {
    let d = x.len();
    let h = 1e-6;
    let mut jac = vec![0.0; d * d];
    for j in 0..d {
        let (mut up, mut down) = (x.to_vec(), x.to_vec());
        up[j] += h;
        down[j] -= h;
        let (yu, _) = flow.forward(&Tensor::row(up)).unwrap();
        let (yd, _) = flow.forward(&Tensor::row(down)).unwrap();
        for i in 0..d {
            jac[i * d + j] = (yu.data()[i] - yd.data()[i]) / (2.0 * h);
        }
    }
    let mut logdet = 0.0;
    for c in 0..d {
        let p = (c..d)
            .max_by(|&a, &b| jac[a * d + c].abs().total_cmp(&jac[b * d + c].abs()))
            .unwrap();
        if p != c {
            for k in 0..d {
                jac.swap(c * d + k, p * d + k);
            }
        }
        let pivot = jac[c * d + c];
        logdet += pivot.abs().ln();
        for r in c + 1..d {
            let f = jac[r * d + c] / pivot;
            for k in c..d {
                jac[r * d + k] -= f * jac[c * d + k];
            }
        }
    }
    logdet
}

/// Riemann sum of the flow density over `[-half, half]^2` on an `n x n` grid.
pub fn density_mass_2d(flow: &FlowModel, half: f64, n: usize) -> f64 {
    let h = 2.0 * half / (n - 1) as f64;
    let mut rows = Vec::with_capacity(n * n);
    for i in 0..n {
        for j in 0..n {
            rows.push(vec![-half + i as f64 * h, -half + j as f64 * h]);
        }
    }
    let grid = Tensor::from_rows(&rows).unwrap();
    flow.log_density(&grid)
        .unwrap()
        .iter()
        .map(|l| l.exp())
        .sum::<f64>()
        * h
        * h
}
