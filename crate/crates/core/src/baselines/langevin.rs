use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::functional::PotentialTarget;
use crate::tensor::Tensor;

/// Particles whose norm exceeds this are treated as diverged.
pub const DIVERGENCE_NORM: f64 = 1e100;

/// Trajectory of an unadjusted Langevin run.
#[derive(Clone, Debug)]
pub struct LangevinRun {
    /// Clouds after the recorded steps, `snapshots[i]` after `recorded_steps[i]` updates.
    pub snapshots: Vec<Tensor>,
    pub recorded_steps: Vec<usize>,
    /// Step at which some particle left the finite range, if any.
    pub diverged_at: Option<usize>,
}

/// One update `θ <- θ - dt ||θ||^{2α-2} θ + sqrt(2 dt) u` applied to every row.
pub fn langevin_step<R: Rng + ?Sized>(
    cloud: &mut Tensor,
    potential: &PotentialTarget,
    dt: f64,
    rng: &mut R,
) {
    let d = cloud.cols();
    let noise = (2.0 * dt).sqrt();
    for row in cloud.data_mut().chunks_mut(d) {
        let drift = potential.grad(row);
        for (x, g) in row.iter_mut().zip(drift) {
            let u: f64 = rng.sample(StandardNormal);
            *x = *x - dt * g + noise * u;
        }
    }
}

/// Runs `steps` Langevin updates from `init`, keeping a snapshot every
/// `record_every` steps (and the last one).
pub fn langevin_run<R: Rng + ?Sized>(
    potential: &PotentialTarget,
    dt: f64,
    init: Tensor,
    steps: usize,
    record_every: usize,
    rng: &mut R,
) -> Result<LangevinRun> {
    if !(dt > 0.0) {
        return Err(Error::contract(format!(
            "Langevin step must be positive, got {dt}"
        )));
    }
    let every = record_every.max(1);
    let mut cloud = init;
    let mut run = LangevinRun {
        snapshots: Vec::new(),
        recorded_steps: Vec::new(),
        diverged_at: None,
    };
    for s in 1..=steps {
        langevin_step(&mut cloud, potential, dt, rng);
        let bad = cloud.data().chunks(cloud.cols()).any(|r| {
            !r.iter().map(|v| v * v).sum::<f64>().sqrt().is_finite()
                || r.iter().any(|v| v.abs() > DIVERGENCE_NORM)
        });
        if bad {
            run.diverged_at = Some(s);
            break;
        }
        if s % every == 0 || s == steps {
            run.snapshots.push(cloud.clone());
            run.recorded_steps.push(s);
        }
    }
    Ok(run)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn literal_update_formula() {
        let p = PotentialTarget::new(2.0).unwrap();
        let dt = 0.01;
        let theta = [0.7, -1.2];
        let mut cloud = Tensor::from_rows(&[theta.to_vec()]).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        langevin_step(&mut cloud, &p, dt, &mut rng);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let norm = (theta[0] * theta[0] + theta[1] * theta[1]).sqrt();
        for (k, &t) in theta.iter().enumerate() {
            let u: f64 = rng.sample(StandardNormal);
            let expect = t - dt * norm.powf(2.0 * 2.0 - 2.0) * t + (2.0 * dt).sqrt() * u;
            assert!((cloud.data()[k] - expect).abs() < 1e-15);
        }
    }

    #[test]
    fn large_step_diverges() {
        let p = PotentialTarget::new(3.0).unwrap();
        let init = Tensor::from_rows(&[vec![3.0, 3.0]]).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let run = langevin_run(&p, 0.5, init, 100, 10, &mut rng).unwrap();
        assert!(run.diverged_at.is_some());
    }
}
