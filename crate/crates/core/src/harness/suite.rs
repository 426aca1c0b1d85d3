use std::collections::BTreeMap;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::Serialize;

use super::config::SimplexConfig;
use crate::error::Result;
use crate::functional::{Dataset, LikelihoodKernel, PotentialTarget};
use crate::simplex::{
    grid_1d, grid_npmle_reference, implicit_step_exact, integrate_klgf, kl_divergence,
    three_point_slack, verify_exact_rates, verify_inexact_rates, verify_stochastic_rates,
    BoundReport, GridObjective, InexactRegime, Reference, SimplexDistribution, SimplexRunConfig,
    StepOptions, StochasticCheck, EXACT_TOL,
};

/// Verdict of one grid check.
#[derive(Clone, Debug, Serialize)]
pub struct CheckOutcome {
    pub name: String,
    pub passed: bool,
    pub detail: String,
    pub metrics: BTreeMap<String, f64>,
    #[serde(skip)]
    pub report: Option<BoundReport>,
    pub seconds: f64,
}

impl CheckOutcome {
    fn new(
        name: &str,
        passed: bool,
        detail: String,
        report: Option<BoundReport>,
        start: Instant,
    ) -> Self {
        Self {
            name: name.to_owned(),
            passed,
            detail,
            metrics: BTreeMap::new(),
            report,
            seconds: start.elapsed().as_secs_f64(),
        }
    }

    fn with(mut self, key: &str, value: f64) -> Self {
        self.metrics.insert(key.to_owned(), value);
        self
    }
}

fn tightness(report: &BoundReport) -> f64 {
    report
        .rows
        .iter()
        .filter(|r| r.rhs_bound > 0.0)
        .map(|r| r.lhs / r.rhs_bound)
        .fold(0.0, f64::max)
}

/// A strictly positive, uneven start: masses `1 + amp * sin^2(freq * j)`.
fn wavy_start(atoms: &crate::tensor::Tensor, amp: f64, freq: f64) -> Result<SimplexDistribution> {
    SimplexDistribution::from_masses(
        atoms.clone(),
        (0..atoms.rows())
            .map(|j| 1.0 + amp * (freq * j as f64).sin().powi(2))
            .collect(),
    )
}

/// Two-component data `±separation + N(0, 1)`.
fn bimodal_data(n: usize, separation: f64, rng: &mut ChaCha8Rng) -> Result<Dataset> {
    let rows: Vec<Vec<f64>> = (0..n)
        .map(|_| {
            let c = if rng.random::<bool>() {
                separation
            } else {
                -separation
            };
            vec![c + rng.sample::<f64, _>(StandardNormal)]
        })
        .collect();
    Dataset::from_rows(&rows)
}

/// Runs every grid check of `cfg` with randomness from `seed`.
pub fn simplex_suite(cfg: &SimplexConfig, seed: u64) -> Result<Vec<CheckOutcome>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::new();

    let c = &cfg.contraction;
    let start = Instant::now();
    let atoms = grid_1d(-c.half_width, c.half_width, c.atoms)?;
    let target = GridObjective::kl_target(&PotentialTarget::new(c.alpha)?, &atoms);
    let star = target
        .known_minimizer()
        .expect("KL target has a known minimiser");
    let rho0 = wavy_start(&atoms, 5.0, 0.7)?;
    let lambda = target.lambda();
    let (report, _) = verify_exact_rates(
        &target,
        &rho0,
        &SimplexRunConfig::exact(c.tau, lambda),
        c.steps,
        &Reference {
            weights: star.clone(),
            value: 0.0,
        },
    )?;
    let factor = report
        .rows
        .windows(2)
        .filter(|w| w[0].lhs > 0.0)
        .map(|w| w[1].lhs / w[0].lhs)
        .fold(0.0, f64::max);
    let factor_bound = 1.0 / (1.0 + c.tau) + 1e-8;
    out.push(
        CheckOutcome::new(
            "contraction",
            report.all_satisfied() && factor <= factor_bound,
            format!(
                "KL to the minimiser within (1 + lambda tau / 2)^-k D0 at all {} steps: {}; largest per-step factor {factor:.4} (bound {factor_bound:.4})",
                report.rows.len(),
                report.all_satisfied()
            ),
            Some(report.clone()),
            start,
        )
        .with("max_factor", factor)
        .with("tightness", tightness(&report)),
    );

    let s = &cfg.sublinear;
    let start = Instant::now();
    let data = bimodal_data(s.n, s.separation, &mut rng)?;
    let l = data.sup_norm();
    let grid = grid_1d(-l, l, s.atoms)?;
    let npmle = GridObjective::npmle(&data, LikelihoodKernel::GaussianLocation, &grid)?;
    let (ref_rho, ref_value) = grid_npmle_reference(&npmle, &grid, s.reference_steps)?;
    let (report, _) = verify_exact_rates(
        &npmle,
        &SimplexDistribution::uniform(grid.clone()),
        &SimplexRunConfig::exact(s.tau, 0.0),
        s.steps,
        &Reference {
            weights: ref_rho.weights().to_vec(),
            value: ref_value,
        },
    )?;
    out.push(
        CheckOutcome::new(
            "sublinear",
            report.all_satisfied(),
            format!(
                "best gap within D0 / sum tau at all {} steps: {} (largest ratio {:.3})",
                report.rows.len(),
                report.all_satisfied(),
                tightness(&report)
            ),
            Some(report.clone()),
            start,
        )
        .with("tightness", tightness(&report)),
    );

    let f = &cfg.continuous;
    let start = Instant::now();
    let every = ((0.1 / f.dt).round() as usize).max(1);
    let fine = integrate_klgf(&target, &rho0, Some(&star), f.dt, f.horizon, every)?;
    let half = integrate_klgf(
        &target,
        &rho0,
        Some(&star),
        f.dt / 2.0,
        f.horizon,
        2 * every,
    )?;
    let d0 = kl_divergence(&star, rho0.weights());
    let report = fine.bound_report(lambda, d0, 0.0);
    let rate = fine.log_kl_decay_rate().unwrap_or(f64::NAN);
    let rate_floor = 0.5 * lambda * (1.0 - f.rate_tolerance);
    let (a, b) = (
        *fine.kl_to_star.last().expect("nonempty"),
        *half.kl_to_star.last().expect("nonempty"),
    );
    let sensitivity = (a - b).abs() / b;
    out.push(
        CheckOutcome::new(
            "continuous-flow",
            rate >= rate_floor && sensitivity < f.max_dt_sensitivity && report.all_satisfied(),
            format!(
                "log-KL decay rate {rate:.3} (floor {rate_floor:.3}); halving dt moves terminal KL by {:.3}% (limit {:.1}%); envelope held: {}",
                100.0 * sensitivity,
                100.0 * f.max_dt_sensitivity,
                report.all_satisfied()
            ),
            Some(report),
            start,
        )
        .with("rate", rate)
        .with("dt_sensitivity", sensitivity),
    );

    let e = &cfg.inexact;
    let mut calibration = vec![wavy_start(&atoms, 8.0, 1.3)?];
    for _ in 0..e.calibration_starts {
        calibration.push(SimplexDistribution::random(atoms.clone(), 1.0, &mut rng)?);
    }
    for (name, regime) in [
        (
            "inexact-geometric",
            InexactRegime::Geometric {
                kappa: e.kappa,
                eps: e.geometric_eps,
            },
        ),
        (
            "inexact-polynomial",
            InexactRegime::Polynomial {
                eps: e.polynomial_eps,
                alpha: e.polynomial_alpha,
            },
        ),
    ] {
        let start = Instant::now();
        let t4 = verify_inexact_rates(
            &target,
            &rho0,
            &calibration,
            e.tau,
            lambda,
            regime,
            e.damping,
            e.steps,
        )?;
        let r = t4.report;
        out.push(
            CheckOutcome::new(
                name,
                r.all_satisfied(),
                format!(
                    "envelope with C = {:.3e} fitted on {} calibration runs held at {} steps ({} excluded): {}",
                    t4.c,
                    calibration.len(),
                    r.rows.len(),
                    r.excluded.len(),
                    r.all_satisfied()
                ),
                Some(r.clone()),
                start,
            )
            .with("c", t4.c)
            .with("excluded", r.excluded.len() as f64)
            .with("tightness", tightness(&r)),
        );
    }

    let st = &cfg.stochastic;
    let start = Instant::now();
    let grid = grid_1d(-l, l, st.atoms)?;
    let npmle = GridObjective::npmle(&data, LikelihoodKernel::GaussianLocation, &grid)?;
    let (ref_rho, ref_value) = grid_npmle_reference(&npmle, &grid, s.reference_steps)?;
    let t5 = verify_stochastic_rates(
        &npmle,
        &SimplexDistribution::uniform(grid.clone()),
        &Reference {
            weights: ref_rho.weights().to_vec(),
            value: ref_value,
        },
        &StochasticCheck {
            batch: st.batch,
            tau: st.tau,
            steps: st.steps,
            trials: st.trials,
            seed: rng.random(),
            probes: st.probes,
            lipschitz_draws: st.lipschitz_draws,
        },
    )?;
    let r = t5.report;
    out.push(
        CheckOutcome::new(
            "stochastic",
            r.all_satisfied(),
            format!(
                "mean best gap over {} trials within the envelope at all {} steps with E L^2 = {:.3}: {}",
                st.trials,
                r.rows.len(),
                t5.lipschitz_sq,
                r.all_satisfied()
            ),
            Some(r.clone()),
            start,
        )
        .with("lipschitz_sq", t5.lipschitz_sq)
        .with("tightness", tightness(&r)),
    );

    let t = &cfg.three_point;
    let start = Instant::now();
    let kl_atoms = grid_1d(-2.0, 2.0, t.atoms)?;
    let kl2 = GridObjective::kl_target(&PotentialTarget::new(2.0)?, &kl_atoms);
    let lik_atoms = grid_1d(-l, l, t.atoms)?;
    let lik = GridObjective::npmle(&data, LikelihoodKernel::GaussianLocation, &lik_atoms)?;
    let mut worst = f64::INFINITY;
    for i in 0..t.pairs {
        let (obj, at) = if i % 2 == 0 {
            (&kl2, &kl_atoms)
        } else {
            (&lik, &lik_atoms)
        };
        let prev = SimplexDistribution::random(at.clone(), 1.0, &mut rng)?;
        let tau = t.tau_range[0] + (t.tau_range[1] - t.tau_range[0]) * rng.random::<f64>();
        let step = implicit_step_exact(obj, &prev, tau, EXACT_TOL, &StepOptions::default())?;
        let probe = SimplexDistribution::random(at.clone(), 0.5, &mut rng)?;
        worst = worst.min(three_point_slack(
            obj,
            &prev,
            &step.next,
            &probe,
            tau,
            obj.lambda(),
        )?);
    }
    out.push(
        CheckOutcome::new(
            "three-point",
            worst >= t.min_slack,
            format!(
                "smallest slack over {} random step/probe pairs {worst:.3e} (floor {:.0e})",
                t.pairs, t.min_slack
            ),
            None,
            start,
        )
        .with("worst_slack", worst),
    );
    Ok(out)
}
