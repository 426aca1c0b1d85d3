use log::warn;

use crate::error::{Error, Result};
use crate::tensor::log_sum_exp;

use super::dist::{kl_from_logs, SimplexDistribution};
use super::objective::GridObjective;
use super::report::BoundReport;

/// Recorded state of a continuous-time run.
#[derive(Clone, Debug)]
pub struct KlgfRun {
    pub times: Vec<f64>,
    /// `KL(rho* || rho_t)` at the recorded times (when a minimiser was given).
    pub kl_to_star: Vec<f64>,
    /// `F(rho_t)`.
    pub values: Vec<f64>,
    /// `F(bar rho_t)` for the running time average.
    pub average_values: Vec<f64>,
    pub terminal: SimplexDistribution,
    /// Step actually used at the end (smaller than requested after overflow).
    pub dt: f64,
}

impl KlgfRun {
    /// Least-squares slope of `-log KL(rho* || rho_t)` against `t`.
    pub fn log_kl_decay_rate(&self) -> Option<f64> {
        let pts: Vec<(f64, f64)> = self
            .times
            .iter()
            .zip(&self.kl_to_star)
            .filter(|(_, k)| **k > 0.0 && k.is_finite())
            .map(|(t, k)| (*t, k.ln()))
            .collect();
        if pts.len() < 2 {
            return None;
        }
        let n = pts.len() as f64;
        let mt = pts.iter().map(|p| p.0).sum::<f64>() / n;
        let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
        let sxy: f64 = pts.iter().map(|p| (p.0 - mt) * (p.1 - my)).sum();
        let sxx: f64 = pts.iter().map(|p| (p.0 - mt).powi(2)).sum();
        Some(-sxy / sxx)
    }

    /// Checks `KL(rho* || rho_t) <= exp(-lambda t / 2) KL(rho* || rho_0)` for
    /// `lambda > 0`, else `F(bar rho_t) - F* <= KL(rho* || rho_0) / t`.
    pub fn bound_report(&self, lambda: f64, d0: f64, f_star: f64) -> BoundReport {
        let mut r = BoundReport::new("continuous-flow");
        for (i, &t) in self.times.iter().enumerate() {
            if lambda > 0.0 {
                r.push(i, self.kl_to_star[i], (-lambda * t / 2.0).exp() * d0, 1e-12);
            } else if t > 0.0 {
                r.push(i, self.average_values[i] - f_star, d0 / t, 1e-12);
            }
        }
        r
    }
}

/// Explicit Euler on log weights, `log w <- log w - dt (FV - <FV>_rho)`,
/// renormalised, up to time `horizon`. A step that overflows is retried
/// with half the step size.
pub fn integrate_klgf(
    obj: &GridObjective,
    rho0: &SimplexDistribution,
    star: Option<&[f64]>,
    dt: f64,
    horizon: f64,
    record_every: usize,
) -> Result<KlgfRun> {
    if !(dt > 0.0 && horizon > 0.0) {
        return Err(Error::contract("dt and horizon must be positive"));
    }
    let log_star: Option<Vec<f64>> = star.map(|s| s.iter().map(|w| w.ln()).collect());
    let mut log_w = rho0.log_weights();
    let mut dt = dt;
    let mut t = 0.0;
    let mut avg = vec![0.0; log_w.len()];
    let mut run = KlgfRun {
        times: Vec::new(),
        kl_to_star: Vec::new(),
        values: Vec::new(),
        average_values: Vec::new(),
        terminal: rho0.clone(),
        dt,
    };
    let record = |run: &mut KlgfRun, t: f64, log_w: &[f64], avg: &[f64]| -> Result<()> {
        run.times.push(t);
        run.values.push(obj.value_log(log_w)?);
        if let Some(ls) = &log_star {
            run.kl_to_star.push(kl_from_logs(ls, log_w).max(0.0));
        }
        let avg_value = if t > 0.0 {
            let la: Vec<f64> = avg.iter().map(|a| (a / t).ln()).collect();
            obj.value_log(&la)?
        } else {
            obj.value_log(log_w)?
        };
        run.average_values.push(avg_value);
        Ok(())
    };
    record(&mut run, 0.0, &log_w, &avg)?;
    let mut step = 0usize;
    while t < horizon - 1e-12 * horizon {
        let h = dt.min(horizon - t);
        let fv = obj.first_variation_log(&log_w)?;
        let mean: f64 = fv.iter().zip(&log_w).map(|(f, l)| f * l.exp()).sum();
        let mut next: Vec<f64> = log_w
            .iter()
            .zip(&fv)
            .map(|(l, f)| l - h * (f - mean))
            .collect();
        let z = log_sum_exp(&next);
        next.iter_mut().for_each(|l| *l -= z);
        if next.iter().any(|l| !l.is_finite()) {
            dt *= 0.5;
            warn!("continuous-flow step overflowed at t = {t:.4}; halving dt to {dt:e}");
            if dt < 1e-14 {
                return Err(Error::domain("integrate_klgf", 0, "step size collapsed"));
            }
            continue;
        }
        for (a, l) in avg.iter_mut().zip(&log_w) {
            *a += h * l.exp();
        }
        log_w = next;
        t += h;
        step += 1;
        if step.is_multiple_of(record_every.max(1)) || t >= horizon - 1e-12 * horizon {
            record(&mut run, t, &log_w, &avg)?;
        }
    }
    run.terminal = SimplexDistribution::from_log_masses(rho0.atoms().clone(), &log_w)?;
    run.dt = dt;
    Ok(run)
}
