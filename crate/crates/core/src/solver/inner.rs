use rand::Rng;

use super::config::{BaseDraws, SolverConfig};
use super::stopping::{InnerObservation, StopMonitor, StopReason, StopThresholds};
use crate::error::{Error, Result};
use crate::flow::FlowModel;
use crate::functional::{subproblem_fv_variance, subproblem_on, Functional};
use crate::tensor::{AdamState, Tape, Tensor};

/// Result of one inner loop.
#[derive(Clone, Debug)]
pub struct InnerOutcome {
    pub iters: usize,
    pub reason: StopReason,
    /// `false` when a first-variation threshold was set and never met.
    pub converged: bool,
    pub trace: Vec<InnerObservation>,
}

fn diverged(outer: usize, inner: usize, err: Error) -> Error {
    match err {
        e @ Error::Diverged { .. } => e,
        other => Error::Diverged {
            outer,
            inner,
            detail: other.to_string(),
        },
    }
}

/// Settings of one proximal subproblem.
#[derive(Clone, Copy, Debug)]
pub struct SubproblemSettings<'a> {
    pub outer: usize,
    pub tau: f64,
    pub lr: f64,
    pub zeta: Option<f64>,
    pub config: &'a SolverConfig,
}

/// Trains the trainable blocks of `current` on the subproblem anchored at
/// `anchor` with a fresh Adam state.
///
/// The returned iterate is the last evaluated one when a gradient-norm or
/// first-variation criterion fired, and the lowest-loss evaluated one otherwise.
pub fn solve_subproblem<R: Rng + ?Sized>(
    functional: &dyn Functional,
    current: &mut FlowModel,
    anchor: &FlowModel,
    base: &mut Tensor,
    s: SubproblemSettings<'_>,
    rng: &mut R,
) -> Result<InnerOutcome> {
    let cfg = s.config;
    let mut params = current.trainable_params();
    let mut adam = AdamState::new(&params);
    let mut monitor = StopMonitor::new(StopThresholds {
        grad_tol: cfg.grad_tol,
        patience: cfg.patience,
        patience_on_loss: cfg.patience_on_loss,
        fv_threshold: s.zeta,
    });
    let mut best: Option<(f64, Vec<Tensor>)> = None;
    let mut trace = Vec::new();
    let mut outcome_reason = StopReason::MaxIters;
    let mut iters = cfg.max_inner;

    for r in 0..cfg.max_inner {
        if cfg.base_draws == BaseDraws::PerInner && r > 0 {
            *base = current.base().sample(base.rows(), rng);
        }
        let tape = Tape::new();
        let cur = current.bind(&tape, false);
        let anc = anchor.bind(&tape, true);
        let g = subproblem_on(&tape, functional, &cur, &anc, base, s.tau)
            .map_err(|e| diverged(s.outer, r, e))?;
        let loss = tape.scalar_value(g.loss);
        if !loss.is_finite() {
            return Err(Error::Diverged {
                outer: s.outer,
                inner: r,
                detail: format!("subproblem loss is {loss}"),
            });
        }
        let grads = tape.backward(g.loss)?;
        let gs: Vec<Tensor> = cur
            .trainable_vars(&tape)
            .into_iter()
            .map(|v| grads.get(v))
            .collect();
        let grad_norm = gs
            .iter()
            .flat_map(|t| t.data())
            .map(|v| v * v)
            .sum::<f64>()
            .sqrt();

        let fv_var = match s.zeta {
            Some(_) if r % cfg.fv_check_every == 0 || r + 1 == cfg.max_inner => {
                let theta = tape.value(g.theta);
                let log_cur = tape.value(g.log_current).into_data();
                let log_anc = tape.value(g.log_anchor).into_data();
                let ratio: Vec<f64> = log_cur.iter().zip(&log_anc).map(|(a, b)| a - b).collect();
                let fv = functional.first_variation(&theta, &log_cur)?;
                Some(subproblem_fv_variance(&fv, &ratio, s.tau)?)
            }
            _ => None,
        };
        drop(cur);
        drop(anc);

        if best.as_ref().is_none_or(|(l, _)| loss < *l) {
            best = Some((loss, params.clone()));
        }
        let obs = InnerObservation {
            loss,
            grad_norm,
            fv_var,
        };
        trace.push(obs);
        if let Some(reason) = monitor.observe(&obs) {
            outcome_reason = reason;
            iters = r + 1;
            break;
        }
        adam.step(&mut params, &gs, s.lr)
            .map_err(|e| diverged(s.outer, r, e))?;
        current.set_trainable_params(&params)?;
    }

    let keep_current = matches!(
        outcome_reason,
        StopReason::GradNorm | StopReason::FvVariance
    );
    if !keep_current {
        if let Some((_, p)) = best {
            params = p;
        }
    }
    current.set_trainable_params(&params)?;
    let converged = match s.zeta {
        Some(_) => keep_current,
        None => true,
    };
    Ok(InnerOutcome {
        iters,
        reason: outcome_reason,
        converged,
        trace,
    })
}
