use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::solver::StepSchedule;
use crate::tensor::log_sum_exp;

use super::dist::{kl_from_logs, oscillation, SimplexDistribution};
use super::objective::GridObjective;

/// Oscillation target of an exact implicit step.
pub const EXACT_TOL: f64 = 1e-12;

/// Inner tolerance `epsilon_k` on `osc(eta_k)`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum Tolerance {
    /// Solve to [`EXACT_TOL`].
    Exact,
    Constant {
        eps: f64,
    },
    /// `kappa * eps^k`.
    Geometric {
        kappa: f64,
        eps: f64,
    },
    /// `eps * k^{-alpha}`.
    Polynomial {
        eps: f64,
        alpha: f64,
    },
}

impl Tolerance {
    pub fn at(&self, k: usize) -> f64 {
        let kf = k as f64;
        match *self {
            Self::Exact => EXACT_TOL,
            Self::Constant { eps } => eps,
            Self::Geometric { kappa, eps } => kappa * eps.powf(kf),
            Self::Polynomial { eps, alpha } => eps * kf.powf(-alpha),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let ok = match *self {
            Self::Exact => true,
            Self::Constant { eps } => eps > 0.0,
            Self::Geometric { kappa, eps } => kappa > 0.0 && eps > 0.0 && eps < 1.0,
            Self::Polynomial { eps, alpha } => eps > 0.0 && alpha > 0.0,
        };
        if ok {
            Ok(())
        } else {
            Err(Error::Config(format!(
                "invalid tolerance schedule {self:?}"
            )))
        }
    }
}

/// Multiplicative-update settings for one implicit step.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StepOptions {
    /// First trial rate, in units of `tau`.
    pub initial_rate: f64,
    /// Grow the rate by 1.5 after every accepted update.
    pub adaptive: bool,
    pub max_inner: usize,
}

impl Default for StepOptions {
    fn default() -> Self {
        Self {
            initial_rate: 1.0,
            adaptive: true,
            max_inner: 20_000,
        }
    }
}

impl StepOptions {
    /// Fixed rate `fraction * tau / (1 + tau)`, no growth: each update removes
    /// only part of the oscillation, so loose tolerances stop genuinely early.
    pub fn damped(fraction: f64, tau: f64) -> Self {
        Self {
            initial_rate: fraction / (1.0 + tau),
            adaptive: false,
            max_inner: 20_000,
        }
    }
}

/// Result of one implicit step.
#[derive(Clone, Debug)]
pub struct StepOutcome {
    pub next: SimplexDistribution,
    pub log_weights: Vec<f64>,
    /// `osc(eta)` at the returned iterate.
    pub osc: f64,
    pub inner_iters: usize,
    /// Whether the oscillation reached the requested tolerance.
    pub exact: bool,
    /// Subproblem value `F + KL(· || prev) / tau`.
    pub value: f64,
}

fn normalise(log_w: &mut [f64]) {
    let z = log_sum_exp(log_w);
    log_w.iter_mut().for_each(|l| *l -= z);
}

fn residual(obj: &GridObjective, log_w: &[f64], log_prev: &[f64], tau: f64) -> Result<Vec<f64>> {
    let fv = obj.first_variation_log(log_w)?;
    Ok(fv
        .iter()
        .zip(log_w.iter().zip(log_prev))
        .map(|(f, (l, p))| f + (l - p) / tau)
        .collect())
}

fn sub_value(obj: &GridObjective, log_w: &[f64], log_prev: &[f64], tau: f64) -> Result<f64> {
    Ok(obj.value_log(log_w)? + kl_from_logs(log_w, log_prev) / tau)
}

/// Solves `min F(rho) + KL(rho || prev) / tau` over the simplex by
/// multiplicative updates `w <- w exp(-s eta)` with backtracking on the
/// subproblem value, stopping once `osc(eta) <= eps_inner`. When the budget
/// runs out the lowest-value iterate is returned with `exact = false`.
pub fn implicit_step_exact(
    obj: &GridObjective,
    prev: &SimplexDistribution,
    tau: f64,
    eps_inner: f64,
    options: &StepOptions,
) -> Result<StepOutcome> {
    if !(tau > 0.0) {
        return Err(Error::contract(format!(
            "step size must be positive, got {tau}"
        )));
    }
    if let Some(j) = prev.weights().iter().position(|&w| !(w > 0.0)) {
        return Err(Error::domain(
            "implicit step",
            j,
            "previous iterate must be strictly positive",
        ));
    }
    let log_prev = prev.log_weights();
    let mut log_w = log_prev.clone();
    let mut value = sub_value(obj, &log_w, &log_prev, tau)?;
    let mut eta = residual(obj, &log_w, &log_prev, tau)?;
    let mut osc = oscillation(&eta);
    let mut rate = options.initial_rate * tau;
    let mut iters = 0;
    let mut stalled = 0;
    while osc > eps_inner && iters < options.max_inner {
        iters += 1;
        let mut trial: Vec<f64> = log_w.iter().zip(&eta).map(|(l, e)| l - rate * e).collect();
        normalise(&mut trial);
        let trial_value = sub_value(obj, &trial, &log_prev, tau)?;
        let slack = 1e-14 * value.abs().max(1.0);
        let trial_eta = residual(obj, &trial, &log_prev, tau)?;
        let trial_osc = oscillation(&trial_eta);
        if trial_value < value || (trial_value <= value + slack && trial_osc < osc) {
            log_w = trial;
            value = trial_value;
            eta = trial_eta;
            osc = trial_osc;
            stalled = 0;
            if options.adaptive {
                rate = (rate * 1.5).min(1e6 * tau);
            }
        } else {
            rate *= 0.5;
            stalled += 1;
            if stalled > 80 {
                break;
            }
        }
    }
    let next = if iters == 0 {
        prev.clone()
    } else {
        SimplexDistribution::from_log_masses(prev.atoms().clone(), &log_w)?
    };
    Ok(StepOutcome {
        next,
        exact: osc <= eps_inner,
        log_weights: log_w,
        osc,
        inner_iters: iters,
        value,
    })
}

/// Closed-form step for a grid KL target:
/// `rho_next ∝ pi^{tau/(1+tau)} prev^{1/(1+tau)}`.
pub fn kl_closed_form_step(
    log_pi: &[f64],
    prev: &SimplexDistribution,
    tau: f64,
) -> Result<SimplexDistribution> {
    let a = tau / (1.0 + tau);
    let logs: Vec<f64> = log_pi
        .iter()
        .zip(prev.log_weights())
        .map(|(p, l)| a * p + (1.0 - a) * l)
        .collect();
    SimplexDistribution::from_log_masses(prev.atoms().clone(), &logs)
}

/// Settings of a grid proximal run.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimplexRunConfig {
    pub step: StepSchedule,
    /// Relative strong-convexity constant used by the bounds.
    pub lambda: f64,
    pub tolerance: Tolerance,
    pub options: StepOptions,
}

impl SimplexRunConfig {
    pub fn exact(tau: f64, lambda: f64) -> Self {
        Self {
            step: StepSchedule::constant(tau),
            lambda,
            tolerance: Tolerance::Exact,
            options: StepOptions::default(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.step.validate()?;
        self.tolerance.validate()?;
        if !(self.lambda >= 0.0) {
            return Err(Error::Config("lambda must be >= 0".into()));
        }
        Ok(())
    }
}

/// Iterates `rho_0, ..., rho_K` of a grid run and the per-step outcomes.
#[derive(Clone, Debug)]
pub struct SimplexTrajectory {
    pub iterates: Vec<SimplexDistribution>,
    pub steps: Vec<StepOutcome>,
    pub taus: Vec<f64>,
}

impl SimplexTrajectory {
    /// Steps whose inner solve missed its tolerance (1-based).
    pub fn inexact_steps(&self) -> Vec<usize> {
        self.steps
            .iter()
            .enumerate()
            .filter(|(_, s)| !s.exact)
            .map(|(i, _)| i + 1)
            .collect()
    }
}

/// `K` implicit steps from `rho0`; the objective may change per step.
pub fn run_iklpd_with(
    rho0: &SimplexDistribution,
    config: &SimplexRunConfig,
    steps: usize,
    mut objective_at: impl FnMut(usize) -> Result<GridObjective>,
) -> Result<SimplexTrajectory> {
    config.validate()?;
    let mut traj = SimplexTrajectory {
        iterates: vec![rho0.clone()],
        steps: Vec::with_capacity(steps),
        taus: Vec::with_capacity(steps),
    };
    for k in 1..=steps {
        let tau = config.step.at(k);
        let obj = objective_at(k)?;
        let prev = traj.iterates.last().expect("nonempty");
        let out = implicit_step_exact(&obj, prev, tau, config.tolerance.at(k), &config.options)?;
        traj.iterates.push(out.next.clone());
        traj.steps.push(out);
        traj.taus.push(tau);
    }
    Ok(traj)
}

/// `K` implicit steps on a fixed objective.
pub fn run_iklpd(
    obj: &GridObjective,
    rho0: &SimplexDistribution,
    config: &SimplexRunConfig,
    steps: usize,
) -> Result<SimplexTrajectory> {
    run_iklpd_with(rho0, config, steps, |_| Ok(obj.clone()))
}
