use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::solver::StepSchedule;

use super::dist::{kl_divergence, SimplexDistribution};
use super::objective::GridObjective;
use super::report::BoundReport;
use super::step::{
    run_iklpd, run_iklpd_with, SimplexRunConfig, SimplexTrajectory, StepOptions, Tolerance,
};

/// Absolute slack allowed on every bound comparison.
pub const BOUND_SLACK: f64 = 1e-10;

/// `F(rho) - F(rho_k) <= ...` slack of the three-point inequality:
/// `(1/tau) KL(rho || prev) - (1/tau + lambda/2) KL(rho || next)
///  - (1/tau) KL(next || prev) - (F(next) - F(rho))`.
pub fn three_point_slack(
    obj: &GridObjective,
    prev: &SimplexDistribution,
    next: &SimplexDistribution,
    probe: &SimplexDistribution,
    tau: f64,
    lambda: f64,
) -> Result<f64> {
    let (p, n, r) = (prev.weights(), next.weights(), probe.weights());
    let rhs = kl_divergence(r, p) / tau
        - (1.0 / tau + lambda / 2.0) * kl_divergence(r, n)
        - kl_divergence(n, p) / tau;
    let lhs = obj.value(next)? - obj.value(probe)?;
    Ok(rhs - lhs)
}

/// Reference minimiser and value for the bound checks.
#[derive(Clone, Debug)]
pub struct Reference {
    pub weights: Vec<f64>,
    pub value: f64,
}

/// Exact-step run checked against the contraction bound
/// `KL(rho* || rho_k) <= (1 + lambda tau / 2)^{-k} KL(rho* || rho_0)` when
/// `lambda > 0` (constant `tau`), or against
/// `min_{l <= k} F(rho_l) - F(rho*) <= KL(rho* || rho_0) / sum tau_l` when
/// `lambda = 0`.
pub fn verify_exact_rates(
    obj: &GridObjective,
    rho0: &SimplexDistribution,
    config: &SimplexRunConfig,
    steps: usize,
    reference: &Reference,
) -> Result<(BoundReport, SimplexTrajectory)> {
    let traj = run_iklpd(obj, rho0, config, steps)?;
    let d0 = kl_divergence(&reference.weights, rho0.weights());
    let mut report;
    if config.lambda > 0.0 {
        let StepSchedule::Geometric { tau, growth } = config.step else {
            return Err(Error::Config(
                "the contraction bound needs a constant step".into(),
            ));
        };
        if growth != 1.0 {
            return Err(Error::Config(
                "the contraction bound needs a constant step".into(),
            ));
        }
        report = BoundReport::new("proximal-contraction");
        let q = 1.0 + config.lambda * tau / 2.0;
        for (k, it) in traj.iterates.iter().enumerate() {
            let lhs = kl_divergence(&reference.weights, it.weights());
            report.push(k, lhs, d0 * q.powi(-(k as i32)), BOUND_SLACK);
        }
    } else {
        report = BoundReport::new("proximal-sublinear");
        let mut best = f64::INFINITY;
        let mut tau_sum = 0.0;
        for k in 1..=steps {
            best = best.min(obj.value(&traj.iterates[k])?);
            tau_sum += traj.taus[k - 1];
            report.push(k, best - reference.value, d0 / tau_sum, BOUND_SLACK);
        }
    }
    let inexact = traj.inexact_steps();
    if !inexact.is_empty() {
        report.notes.push(format!(
            "inner solve missed its tolerance at steps {inexact:?}"
        ));
    }
    Ok((report, traj))
}

/// Tolerance regime for the inexact-step check.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum InexactRegime {
    Geometric { kappa: f64, eps: f64 },
    Polynomial { eps: f64, alpha: f64 },
}

impl InexactRegime {
    fn tolerance(self) -> Tolerance {
        match self {
            Self::Geometric { kappa, eps } => Tolerance::Geometric { kappa, eps },
            Self::Polynomial { eps, alpha } => Tolerance::Polynomial { eps, alpha },
        }
    }

    /// Envelope at `k` for constant `c`.
    fn envelope(self, c: f64, k: usize, d0: f64, lambda: f64, tau: f64) -> f64 {
        let q = 1.0 + lambda * tau / 2.0;
        let kf = k as f64;
        match self {
            Self::Geometric { kappa, eps } => {
                (c * kappa * kappa + 2.0 * d0) / (eps.powi(-2).min(q)).powf(kf)
            }
            Self::Polynomial { eps, alpha } => {
                2.0 * d0 / q.powf(kf) + c * eps * eps / kf.powf(2.0 * alpha)
            }
        }
    }

    /// Smallest `c >= 0` making the envelope hold at `k` for distance `dk`.
    fn required_c(self, dk: f64, k: usize, d0: f64, lambda: f64, tau: f64) -> f64 {
        let q = 1.0 + lambda * tau / 2.0;
        let kf = k as f64;
        let c = match self {
            Self::Geometric { kappa, eps } => {
                (dk * (eps.powi(-2).min(q)).powf(kf) - 2.0 * d0) / (kappa * kappa)
            }
            Self::Polynomial { eps, alpha } => {
                (dk - 2.0 * d0 / q.powf(kf)) * kf.powf(2.0 * alpha) / (eps * eps)
            }
        };
        c.max(0.0)
    }
}

/// Outcome of the inexact-step check.
#[derive(Clone, Debug)]
pub struct InexactOutcome {
    pub report: BoundReport,
    /// Constant fitted on the calibration run and frozen.
    pub c: f64,
    pub trajectory: SimplexTrajectory,
}

/// Inexact runs with `osc(eta_k) <= epsilon_k` under damped multiplicative
/// updates. The envelope constant is fitted as the largest value required
/// along runs from the `calibration` starts and then frozen for the run from
/// `rho0`. Steps whose inner solve cannot
/// reach `epsilon_k` are excluded and noted.
#[allow(clippy::too_many_arguments)]
pub fn verify_inexact_rates(
    obj: &GridObjective,
    rho0: &SimplexDistribution,
    calibration: &[SimplexDistribution],
    tau: f64,
    lambda: f64,
    regime: InexactRegime,
    damping: f64,
    steps: usize,
) -> Result<InexactOutcome> {
    let star = obj.known_minimizer().ok_or_else(|| {
        Error::Config("the inexact-step check needs a target with a known minimiser".into())
    })?;
    if !(lambda > 0.0) {
        return Err(Error::Config(
            "the inexact-step check needs lambda > 0".into(),
        ));
    }
    let config = SimplexRunConfig {
        step: StepSchedule::constant(tau),
        lambda,
        tolerance: regime.tolerance(),
        options: StepOptions::damped(damping, tau),
    };
    if calibration.is_empty() {
        return Err(Error::Config(
            "the inexact-step check needs at least one calibration start".into(),
        ));
    }
    let mut c: f64 = 0.0;
    for start in calibration {
        let calib = run_iklpd(obj, start, &config, steps)?;
        let d0c = kl_divergence(&star, start.weights());
        let skipped = calib.inexact_steps();
        for k in (1..=steps).filter(|k| !skipped.contains(k)) {
            let dk = kl_divergence(&star, calib.iterates[k].weights());
            c = c.max(regime.required_c(dk, k, d0c, lambda, tau));
        }
    }
    let traj = run_iklpd(obj, rho0, &config, steps)?;
    let d0 = kl_divergence(&star, rho0.weights());
    let mut report = BoundReport::new(match regime {
        InexactRegime::Geometric { .. } => "inexact-geometric",
        InexactRegime::Polynomial { .. } => "inexact-polynomial",
    });
    report.excluded = traj.inexact_steps();
    if !report.excluded.is_empty() {
        report.notes.push(format!(
            "inner tolerance unreachable in floating point at steps {:?}; excluded",
            report.excluded
        ));
    }
    report.notes.push(format!(
        "constant fitted on {} calibration runs: {c:e}",
        calibration.len()
    ));
    for k in 1..=steps {
        if report.excluded.contains(&k) {
            continue;
        }
        let dk = kl_divergence(&star, traj.iterates[k].weights());
        report.push(k, dk, regime.envelope(c, k, d0, lambda, tau), BOUND_SLACK);
    }
    Ok(InexactOutcome {
        report,
        c,
        trajectory: traj,
    })
}

/// Empirical `E L(xi)^2` for mini-batches of size `batch`: for each sampled
/// batch, `L(xi)` is the largest `(F_xi(rho) - F_xi(rho')) / sqrt(KL(rho' || rho))`
/// over ordered pairs of probe distributions.
pub fn estimate_lipschitz_sq<R: Rng + ?Sized>(
    obj: &GridObjective,
    probes: &[SimplexDistribution],
    batch: usize,
    draws: usize,
    rng: &mut R,
) -> Result<f64> {
    let n = obj.observations();
    if n == 0 || batch == 0 || batch > n || probes.len() < 2 || draws == 0 {
        return Err(Error::contract(
            "Lipschitz estimate needs a likelihood objective, 1 <= batch <= n and >= 2 probes",
        ));
    }
    let p = probes.len();
    let mut root_kl = vec![0.0; p * p];
    for a in 0..p {
        for b in 0..p {
            root_kl[a * p + b] = kl_divergence(probes[b].weights(), probes[a].weights()).sqrt();
        }
    }
    let mut total = 0.0;
    for _ in 0..draws {
        let idx = sample(rng, n, batch).into_vec();
        let sub = obj.rows(&idx)?;
        let vals: Vec<f64> = probes.iter().map(|r| sub.value(r)).collect::<Result<_>>()?;
        let mut l: f64 = 0.0;
        for a in 0..p {
            for b in 0..p {
                let d = root_kl[a * p + b];
                if a != b && d > 0.0 {
                    l = l.max((vals[a] - vals[b]) / d);
                }
            }
        }
        total += l * l;
    }
    Ok(total / draws as f64)
}

/// Outcome of the stochastic check.
#[derive(Clone, Debug)]
pub struct StochasticOutcome {
    pub report: BoundReport,
    /// `E F(rho_l)` over trials, `l = 0..=K`.
    pub mean_values: Vec<f64>,
    pub lipschitz_sq: f64,
}

/// Settings of the stochastic check.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct StochasticCheck {
    pub batch: usize,
    pub tau: f64,
    pub steps: usize,
    pub trials: usize,
    pub seed: u64,
    /// Random probe distributions for the Lipschitz estimate.
    pub probes: usize,
    /// Mini-batches sampled for the Lipschitz estimate.
    pub lipschitz_draws: usize,
}

/// Stochastic proximal steps on mini-batch likelihoods with
/// `tau_k = tau / sqrt(k + 1)`, averaged over seeded trials and compared with
/// `(4 D_0 + tau^2 log(k+1) E L^2) / (8 tau (sqrt(k+1) - 1))`.
pub fn verify_stochastic_rates(
    obj: &GridObjective,
    rho0: &SimplexDistribution,
    reference: &Reference,
    check: &StochasticCheck,
) -> Result<StochasticOutcome> {
    let n = obj.observations();
    if n == 0 || check.batch == 0 || check.batch > n || check.trials == 0 {
        return Err(Error::Config(
            "stochastic check needs a likelihood objective and 1 <= batch <= n".into(),
        ));
    }
    let config = SimplexRunConfig {
        step: StepSchedule::InverseSqrt { tau: check.tau },
        lambda: 0.0,
        tolerance: Tolerance::Exact,
        options: StepOptions::default(),
    };
    let trials: Vec<Vec<f64>> = (0..check.trials)
        .into_par_iter()
        .map(|t| {
            let mut rng = ChaCha8Rng::seed_from_u64(check.seed.wrapping_add(t as u64));
            let traj = run_iklpd_with(rho0, &config, check.steps, |_| {
                if check.batch == n {
                    Ok(obj.clone())
                } else {
                    let mut idx = sample(&mut rng, n, check.batch).into_vec();
                    idx.sort_unstable();
                    obj.rows(&idx)
                }
            })?;
            traj.iterates
                .iter()
                .map(|r| obj.value(r))
                .collect::<Result<Vec<f64>>>()
        })
        .collect::<Result<_>>()?;
    let len = check.steps + 1;
    let mean_values: Vec<f64> = (0..len)
        .map(|l| trials.iter().map(|v| v[l]).sum::<f64>() / check.trials as f64)
        .collect();

    let mut rng = ChaCha8Rng::seed_from_u64(check.seed ^ 0x9e37_79b9_7f4a_7c15);
    let mut probes = vec![
        rho0.clone(),
        SimplexDistribution::new(rho0.atoms().clone(), reference.weights.clone())?,
    ];
    for i in 0..check.probes {
        let conc = [0.3, 1.0, 3.0][i % 3];
        probes.push(SimplexDistribution::random(
            rho0.atoms().clone(),
            conc,
            &mut rng,
        )?);
    }
    let lipschitz_sq =
        estimate_lipschitz_sq(obj, &probes, check.batch, check.lipschitz_draws, &mut rng)?;

    let d0 = kl_divergence(&reference.weights, rho0.weights());
    let mut report = BoundReport::new("stochastic-sublinear");
    let mut best = f64::INFINITY;
    for k in 1..=check.steps {
        best = best.min(mean_values[k - 1]);
        let kf = k as f64;
        let rhs = (4.0 * d0 + check.tau * check.tau * (kf + 1.0).ln() * lipschitz_sq)
            / (8.0 * check.tau * ((kf + 1.0).sqrt() - 1.0));
        report.push(k, best - reference.value, rhs, BOUND_SLACK);
    }
    report
        .notes
        .push(format!("estimated E L^2 = {lipschitz_sq:.6e}"));
    Ok(StochasticOutcome {
        report,
        mean_values,
        lipschitz_sq,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::functional::PotentialTarget;
    use crate::simplex::dist::grid_1d;

    #[test]
    fn contraction_bound_holds_with_equal_sides_at_start() {
        let atoms = grid_1d(-3.0, 3.0, 20).unwrap();
        let obj = GridObjective::kl_target(&PotentialTarget::new(1.0).unwrap(), &atoms);
        let star = obj.known_minimizer().unwrap();
        let rho0 = SimplexDistribution::uniform(atoms);
        let reference = Reference {
            value: 0.0,
            weights: star,
        };
        let (rep, _) = verify_exact_rates(
            &obj,
            &rho0,
            &SimplexRunConfig::exact(1.0, 1.0),
            10,
            &reference,
        )
        .unwrap();
        assert!(rep.all_satisfied());
        assert_eq!(rep.rows[0].lhs, rep.rows[0].rhs_bound);
    }

    #[test]
    fn three_point_slack_nonnegative_for_kl_target() {
        let atoms = grid_1d(-2.0, 2.0, 12).unwrap();
        let obj = GridObjective::kl_target(&PotentialTarget::new(2.0).unwrap(), &atoms);
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let prev = SimplexDistribution::random(atoms.clone(), 1.0, &mut rng).unwrap();
        let out = super::super::step::implicit_step_exact(
            &obj,
            &prev,
            0.7,
            1e-12,
            &StepOptions::default(),
        )
        .unwrap();
        for _ in 0..20 {
            let probe = SimplexDistribution::random(atoms.clone(), 1.0, &mut rng).unwrap();
            assert!(three_point_slack(&obj, &prev, &out.next, &probe, 0.7, 1.0).unwrap() >= -1e-8);
        }
    }
}
