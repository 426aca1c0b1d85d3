use std::io::Write;

use log::{info, warn};
use serde::Serialize;

use super::config::{ExperimentConfig, Method};
use super::experiments::{run_method, MethodRun, Problem};
use crate::error::{Error, Result};
use crate::solver::{DistillEvent, LrSchedule, StepSchedule};

/// One trial of the step-size study at one `tau`.
#[derive(Clone, Debug, Serialize)]
pub struct StudyTrial {
    pub tau: f64,
    pub gamma: f64,
    pub seed: u64,
    /// Aborted by an inner non-convergence after burn-in.
    pub flagged: bool,
    pub failed_at: Option<usize>,
    pub outer_iters: usize,
    pub mean_inner: f64,
    pub converged_outer: bool,
    pub terminal_loss: f64,
}

/// Per-`tau` means over the trials that were not flagged.
#[derive(Clone, Debug, Serialize)]
pub struct StudyRow {
    pub tau: f64,
    pub trials: usize,
    pub flagged: usize,
    pub mean_inner: f64,
    pub mean_outer: f64,
}

impl StudyRow {
    /// Whether any trial at this `tau` hit an inner non-convergence.
    pub fn is_flagged(&self) -> bool {
        self.flagged > 0
    }
}

/// Runs every `(tau, seed)` pair of the step-size study. Each trial runs in
/// strict mode, so the first missed inner threshold ends it.
pub fn step_size_study(
    config: &ExperimentConfig,
    problem: &Problem,
) -> Result<(Vec<StudyTrial>, Vec<StudyRow>)> {
    let study = config
        .study
        .as_ref()
        .ok_or_else(|| Error::Config("missing [study]".into()))?;
    let mut trials = Vec::new();
    let mut rows = Vec::new();
    for (&tau, &gamma) in study.taus.iter().zip(&study.gammas) {
        let mut solver = config.solver().clone();
        solver.step = StepSchedule::constant(tau);
        solver.lr = LrSchedule::Harmonic { gamma };
        solver.strict = true;
        let mut at_tau = Vec::new();
        for &seed in &config.seeds {
            let trial = match run_method(config, problem, Method::Iklpd, seed, &solver, None) {
                Ok(run) => {
                    let inner = run.series.series("inner_iters").unwrap_or(&[]);
                    StudyTrial {
                        tau,
                        gamma,
                        seed,
                        flagged: false,
                        failed_at: None,
                        outer_iters: run.records.len(),
                        mean_inner: inner.iter().map(|p| p.1).sum::<f64>()
                            / inner.len().max(1) as f64,
                        converged_outer: run.converged_outer,
                        terminal_loss: run.records.last().map_or(f64::NAN, |r| r.loss),
                    }
                }
                Err(Error::Diverged { outer, .. }) => {
                    warn!("tau {tau}: seed {seed} flagged at outer iteration {outer}");
                    StudyTrial {
                        tau,
                        gamma,
                        seed,
                        flagged: true,
                        failed_at: Some(outer),
                        outer_iters: outer,
                        mean_inner: f64::NAN,
                        converged_outer: false,
                        terminal_loss: f64::NAN,
                    }
                }
                Err(e) => return Err(e),
            };
            info!(
                "tau {tau}: seed {seed} outer {} mean inner {:.1} flagged {}",
                trial.outer_iters, trial.mean_inner, trial.flagged
            );
            at_tau.push(trial);
        }
        let ok: Vec<&StudyTrial> = at_tau.iter().filter(|t| !t.flagged).collect();
        let mean = |f: fn(&StudyTrial) -> f64| {
            if ok.is_empty() {
                f64::NAN
            } else {
                ok.iter().map(|t| f(t)).sum::<f64>() / ok.len() as f64
            }
        };
        rows.push(StudyRow {
            tau,
            trials: at_tau.len(),
            flagged: at_tau.len() - ok.len(),
            mean_inner: mean(|t| t.mean_inner),
            mean_outer: mean(|t| t.outer_iters as f64),
        });
        trials.extend(at_tau);
    }
    Ok((trials, rows))
}

pub const STUDY_COLUMNS: [&str; 9] = [
    "tau",
    "gamma",
    "seed",
    "flagged",
    "failed_at",
    "outer_iters",
    "mean_inner",
    "converged_outer",
    "terminal_loss",
];

pub fn write_study<W: Write>(trials: &[StudyTrial], w: W) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record(STUDY_COLUMNS)?;
    for t in trials {
        out.write_record([
            t.tau.to_string(),
            format!("{:e}", t.gamma),
            t.seed.to_string(),
            t.flagged.to_string(),
            t.failed_at.map_or(String::new(), |k| k.to_string()),
            t.outer_iters.to_string(),
            format!("{:e}", t.mean_inner),
            t.converged_outer.to_string(),
            format!("{:e}", t.terminal_loss),
        ])?;
    }
    out.flush()?;
    Ok(())
}

/// Whether `values` never decreases (`sign = 1`) or never increases
/// (`sign = -1`), ignoring NaN entries.
pub fn is_monotone(values: &[f64], sign: f64) -> bool {
    let v: Vec<f64> = values.iter().copied().filter(|x| !x.is_nan()).collect();
    v.windows(2).all(|w| sign * (w[1] - w[0]) >= 0.0)
}

pub const DISTILL_COLUMNS: [&str; 8] = [
    "method",
    "seed",
    "k",
    "steps",
    "l2",
    "reached_tol",
    "loss_before",
    "loss_after",
];

pub fn write_distillations<W: Write>(runs: &[MethodRun], w: W) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record(DISTILL_COLUMNS)?;
    for run in runs {
        for e in &run.distillations {
            let DistillEvent {
                k,
                steps,
                l2,
                reached_tol,
                loss_before,
                loss_after,
            } = e;
            out.write_record([
                run.series.method.as_str().to_owned(),
                run.series.seed.to_string(),
                k.to_string(),
                steps.to_string(),
                format!("{l2:e}"),
                reached_tol.to_string(),
                format!("{loss_before:e}"),
                format!("{loss_after:e}"),
            ])?;
        }
    }
    out.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn monotone_ignores_nan() {
        assert!(is_monotone(&[1.0, 2.0, f64::NAN, 2.0, 3.0], 1.0));
        assert!(!is_monotone(&[1.0, 0.5], 1.0));
        assert!(is_monotone(&[3.0, 3.0, 1.0], -1.0));
    }

    #[test]
    fn study_header_is_stable() {
        let mut buf = Vec::new();
        write_study(&[], &mut buf).unwrap();
        assert_eq!(
            String::from_utf8(buf).unwrap(),
            "tau,gamma,seed,flagged,failed_at,outer_iters,mean_inner,converged_outer,terminal_loss\n"
        );
    }
}
