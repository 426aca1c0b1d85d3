use super::Functional;
use crate::error::{Error, Result};
use crate::flow::{BoundFlow, FlowModel};
use crate::tensor::{pairwise_sum, Tape, Tensor, Var};

/// Nodes of one proximal subproblem evaluation
/// `F(rho) + (1 / tau) KL(rho || rho_prev)`.
#[derive(Clone, Copy, Debug)]
pub struct SubproblemGraph {
    /// Scalar objective being minimised.
    pub loss: Var,
    /// Scalar Monte Carlo estimate of `F`.
    pub objective: Var,
    /// Scalar Monte Carlo estimate of `KL(rho || rho_prev)`.
    pub kl: Var,
    /// `M × d` particles.
    pub theta: Var,
    /// `M × 1` values of `log rho(theta_j)`.
    pub log_current: Var,
    /// `M × 1` values of `log rho_prev(theta_j)`.
    pub log_anchor: Var,
}

/// Records the subproblem loss on `tape`.
///
/// `current` pushes `base_points` forward; `log rho` follows pathwise from
/// the base density and the forward log-determinants, `log rho_prev` from
/// the inverse of `anchor` evaluated at the same particles. An infinite
/// `tau` drops the proximal term.
pub fn subproblem_on(
    tape: &Tape,
    functional: &dyn Functional,
    current: &BoundFlow<'_>,
    anchor: &BoundFlow<'_>,
    base_points: &Tensor,
    tau: f64,
) -> Result<SubproblemGraph> {
    if !(tau > 0.0) {
        return Err(Error::contract(format!(
            "step size must be positive, got {tau}"
        )));
    }
    if current.flow().base() != anchor.flow().base() {
        return Err(Error::contract(
            "current and anchor flows must share a base distribution",
        ));
    }
    let base = current.flow().base();
    let x = tape.constant(base_points.clone());
    let lp0 = tape.constant(Tensor::column(base.log_density(base_points)));
    let (theta, logdet) = current.forward(tape, x)?;
    let log_current = tape.sub(lp0, logdet)?;
    let log_anchor = anchor.log_density(tape, theta)?;
    let ratio = tape.sub(log_current, log_anchor)?;
    if let Some(j) = tape.value(ratio).first_non_finite() {
        return Err(Error::domain(
            "subproblem",
            j,
            "non-finite log-density ratio",
        ));
    }
    let kl = tape.mean(ratio)?;
    let objective = functional.loss_on(tape, theta, log_current)?;
    let loss = if tau.is_infinite() {
        objective
    } else {
        let prox = tape.scale(kl, 1.0 / tau)?;
        tape.add(objective, prox)?
    };
    Ok(SubproblemGraph {
        loss,
        objective,
        kl,
        theta,
        log_current,
        log_anchor,
    })
}

/// Plain values of one subproblem evaluation.
#[derive(Clone, Debug)]
pub struct SubproblemValue {
    pub loss: f64,
    pub objective: f64,
    pub kl: f64,
    pub theta: Tensor,
    pub log_current: Vec<f64>,
    pub log_anchor: Vec<f64>,
}

impl SubproblemValue {
    /// `log rho(theta_j) - log rho_prev(theta_j)` per particle.
    pub fn log_ratio(&self) -> Vec<f64> {
        self.log_current
            .iter()
            .zip(&self.log_anchor)
            .map(|(a, b)| a - b)
            .collect()
    }
}

/// Evaluates the subproblem without recording gradients.
pub fn subproblem_loss(
    functional: &dyn Functional,
    current: &FlowModel,
    anchor: &FlowModel,
    base_points: &Tensor,
    tau: f64,
) -> Result<SubproblemValue> {
    let tape = Tape::new();
    let cur = current.bind(&tape, true);
    let anc = anchor.bind(&tape, true);
    let g = subproblem_on(&tape, functional, &cur, &anc, base_points, tau)?;
    Ok(SubproblemValue {
        loss: tape.scalar_value(g.loss),
        objective: tape.scalar_value(g.objective),
        kl: tape.scalar_value(g.kl),
        theta: tape.value(g.theta),
        log_current: tape.value(g.log_current).into_data(),
        log_anchor: tape.value(g.log_anchor).into_data(),
    })
}

/// Unbiased sample variance.
pub fn sample_variance(values: &[f64]) -> Result<f64> {
    let m = values.len();
    if m < 2 {
        return Err(Error::contract(format!(
            "variance needs at least 2 values, got {m}"
        )));
    }
    let mean = pairwise_sum(values) / m as f64;
    let dev: Vec<f64> = values.iter().map(|v| (v - mean) * (v - mean)).collect();
    Ok(pairwise_sum(&dev) / (m - 1) as f64)
}

/// Sample variance of the first variation over the particles themselves.
pub fn fv_variance(
    functional: &dyn Functional,
    theta: &Tensor,
    log_density: &[f64],
) -> Result<f64> {
    sample_variance(&functional.first_variation(theta, log_density)?)
}

/// Sample variance of `FV(theta_j) + (1 / tau) log(rho(theta_j) / rho_prev(theta_j))`.
pub fn subproblem_fv_variance(first_variation: &[f64], log_ratio: &[f64], tau: f64) -> Result<f64> {
    if first_variation.len() != log_ratio.len() {
        return Err(Error::shape(
            "subproblem_fv_variance",
            format!(
                "{} first-variation values, {} log-ratios",
                first_variation.len(),
                log_ratio.len()
            ),
        ));
    }
    let inv = if tau.is_infinite() { 0.0 } else { 1.0 / tau };
    let v: Vec<f64> = first_variation
        .iter()
        .zip(log_ratio)
        .map(|(f, r)| f + inv * r)
        .collect();
    sample_variance(&v)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::flow::{BaseDistribution, CouplingBlock};
    use crate::functional::ZeroFunctional;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn affine(log_scale: f64, shift: f64) -> FlowModel {
        FlowModel::new(
            BaseDistribution::centered(1, 1.0).unwrap(),
            vec![CouplingBlock::constant(1, 0, log_scale, shift).unwrap()],
        )
        .unwrap()
    }

    #[test]
    fn identical_flows_give_zero_kl() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let mut f = FlowModel::identity(
            BaseDistribution::centered(2, 1.0).unwrap(),
            3,
            4,
            1,
            &mut rng,
        )
        .unwrap();
        for b in f.blocks_mut() {
            for p in b.params_mut() {
                p.data_mut()
                    .iter_mut()
                    .enumerate()
                    .for_each(|(i, v)| *v = 0.1 * (i as f64).sin());
            }
        }
        let base = f.base().sample(64, &mut rng);
        let v = subproblem_loss(&ZeroFunctional { dim: 2 }, &f, &f, &base, 1.0).unwrap();
        assert!(v.kl.abs() < 1e-12, "{}", v.kl);
    }

    #[test]
    fn infinite_step_is_plain_objective() {
        let cur = affine(0.3, 1.0);
        let prev = affine(0.0, 0.0);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let base = cur.base().sample(16, &mut rng);
        let v = subproblem_loss(
            &ZeroFunctional { dim: 1 },
            &cur,
            &prev,
            &base,
            f64::INFINITY,
        )
        .unwrap();
        assert_eq!(v.loss, 0.0);
        assert!(v.kl > 0.0);
    }

    #[test]
    fn kl_of_affine_flows_matches_gaussian_formula() {
        // rho = N(1, e^{0.6}), rho_prev = N(-0.5, e^{-0.4})
        let cur = affine(0.3, 1.0);
        let prev = affine(-0.2, -0.5);
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        let m = 4096;
        let base = cur.base().sample(m, &mut rng);
        let v = subproblem_loss(&ZeroFunctional { dim: 1 }, &cur, &prev, &base, 1.0).unwrap();
        let (m1, s1) = (1.0f64, 0.3f64.exp());
        let (m0, s0) = (-0.5f64, (-0.2f64).exp());
        let exact = (s0 / s1).ln() + (s1 * s1 + (m1 - m0).powi(2)) / (2.0 * s0 * s0) - 0.5;
        let ratio = v.log_ratio();
        let sd = sample_variance(&ratio).unwrap().sqrt() / (m as f64).sqrt();
        assert!(
            (v.kl - exact).abs() < 3.0 * sd,
            "kl {} exact {exact} sd {sd}",
            v.kl
        );
    }

    #[test]
    fn variance_helpers() {
        assert_eq!(sample_variance(&[2.0, 2.0, 2.0]).unwrap(), 0.0);
        assert!(sample_variance(&[1.0]).is_err());
        let xs = [1.0, 4.0, -2.0, 0.5];
        let mean = xs.iter().sum::<f64>() / 4.0;
        let two_pass = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / 3.0;
        assert!((sample_variance(&xs).unwrap() - two_pass).abs() < 1e-12);
        let s = subproblem_fv_variance(&[1.0, 1.0], &[0.0, 2.0], 2.0).unwrap();
        assert!((s - 0.5).abs() < 1e-15);
    }
}
