use std::time::Instant;

use log::{debug, warn};
use rand::Rng;

use super::config::{BaseDraws, ComposeConfig, SolverConfig, StochasticConfig};
use super::inner::{solve_subproblem, InnerOutcome, SubproblemSettings};
use super::record::RunRecord;
use super::stopping::outer_stop;
use crate::error::{Error, Result};
use crate::flow::{identity_blocks, serialize, FlowModel};
use crate::functional::{fv_variance, subproblem_loss, Functional, Npmle};
use crate::tensor::{AdamState, Tape, Tensor};

/// One teacher-student compression.
#[derive(Clone, Debug, PartialEq)]
pub struct DistillEvent {
    pub k: usize,
    pub steps: usize,
    /// Mean squared output distance of the kept student.
    pub l2: f64,
    pub reached_tol: bool,
    /// `F` before and after replacing the teacher by the student.
    pub loss_before: f64,
    pub loss_after: f64,
}

/// Everything a solve produces.
#[derive(Clone, Debug)]
pub struct SolveOutput {
    pub flow: FlowModel,
    pub records: Vec<RunRecord>,
    /// Outer iterations whose inner loop missed its first-variation threshold (after burn-in).
    pub failures: Vec<usize>,
    pub distillations: Vec<DistillEvent>,
    /// Serialized flow after each outer iteration, when requested.
    pub checkpoints: Vec<Vec<u8>>,
    /// Inner traces per outer iteration.
    pub inner_traces: Vec<InnerOutcome>,
    /// Whether the outer first-variation criterion ended the run.
    pub converged_outer: bool,
}

impl SolveOutput {
    pub fn final_loss(&self) -> Option<f64> {
        self.records.last().map(|r| r.loss)
    }
}

enum Growth<'a> {
    Retrain,
    Compose(&'a ComposeConfig),
}

struct Driver<'a> {
    full: &'a dyn Functional,
    batch: Option<(&'a Npmle, usize)>,
    growth: Growth<'a>,
    config: &'a SolverConfig,
    seed: u64,
}

/// Implicit KL proximal descent, retraining the whole flow at every outer
/// iteration (warm-started from the previous one, which is frozen as the
/// proximal anchor).
pub fn solve_algorithm1<R: Rng + ?Sized>(
    functional: &dyn Functional,
    init: FlowModel,
    config: &SolverConfig,
    seed: u64,
    rng: &mut R,
) -> Result<SolveOutput> {
    Driver {
        full: functional,
        batch: None,
        growth: Growth::Retrain,
        config,
        seed,
    }
    .run(init, rng)
}

/// Implicit KL proximal descent by composing identity-initialised short
/// flows onto the frozen previous flow, compressing into a shorter student
/// whenever the composition grows past the configured length.
pub fn solve_algorithm2<R: Rng + ?Sized>(
    functional: &dyn Functional,
    init: FlowModel,
    config: &SolverConfig,
    compose: &ComposeConfig,
    seed: u64,
    rng: &mut R,
) -> Result<SolveOutput> {
    compose.validate()?;
    Driver {
        full: functional,
        batch: None,
        growth: Growth::Compose(compose),
        config,
        seed,
    }
    .run(init, rng)
}

/// Stochastic variant: every outer iteration minimises the likelihood of a
/// fresh mini-batch drawn without replacement. Records report the
/// full-data objective.
pub fn solve_stochastic<R: Rng + ?Sized>(
    functional: &Npmle,
    init: FlowModel,
    config: &SolverConfig,
    stochastic: &StochasticConfig,
    seed: u64,
    rng: &mut R,
) -> Result<SolveOutput> {
    let n = functional.data().len();
    if stochastic.batch_size == 0 || stochastic.batch_size > n {
        return Err(Error::Config(format!(
            "batch size {} outside 1..={n}",
            stochastic.batch_size
        )));
    }
    Driver {
        full: functional,
        batch: Some((functional, stochastic.batch_size)),
        growth: Growth::Retrain,
        config,
        seed,
    }
    .run(init, rng)
}

impl Driver<'_> {
    fn run<R: Rng + ?Sized>(&self, init: FlowModel, rng: &mut R) -> Result<SolveOutput> {
        let cfg = self.config;
        cfg.validate()?;
        if init.dim() != self.full.param_dim() {
            return Err(Error::shape(
                "solver",
                format!(
                    "flow dimension {} vs objective dimension {}",
                    init.dim(),
                    self.full.param_dim()
                ),
            ));
        }
        let mut flow = init;
        flow.unfreeze();
        let mut base = flow.base().sample(cfg.particles, rng);
        let mut out = SolveOutput {
            flow: flow.clone(),
            records: Vec::new(),
            failures: Vec::new(),
            distillations: Vec::new(),
            checkpoints: Vec::new(),
            inner_traces: Vec::new(),
            converged_outer: false,
        };

        for k in 1..=cfg.outer_iters {
            let start = Instant::now();
            let tau = cfg.step.at(k);
            let lr = cfg.lr.at(k);
            let zeta = cfg.inner_threshold.at(k);
            let batch_objective = match self.batch {
                Some((npmle, m)) => Some(npmle.with_data(npmle.data().minibatch(m, rng)?)),
                None => None,
            };
            let objective: &dyn Functional = match &batch_objective {
                Some(f) => f,
                None => self.full,
            };
            if k > 1 && cfg.base_draws != BaseDraws::Global {
                base = flow.base().sample(cfg.particles, rng);
            }

            let mut anchor = flow.clone();
            anchor.freeze();
            let mut current = match self.growth {
                Growth::Retrain => {
                    let mut c = flow.clone();
                    c.unfreeze();
                    c
                }
                Growth::Compose(cc) => {
                    let short = identity_blocks(
                        flow.dim(),
                        cc.short_len,
                        cc.width,
                        cc.hidden_layers,
                        flow.len(),
                        rng,
                    )?;
                    anchor.compose(short)?
                }
            };

            let settings = SubproblemSettings {
                outer: k,
                tau,
                lr,
                zeta,
                config: cfg,
            };
            let outcome =
                solve_subproblem(objective, &mut current, &anchor, &mut base, settings, rng)?;
            if !outcome.converged && k > cfg.burn_in {
                if cfg.strict {
                    return Err(Error::Diverged {
                        outer: k,
                        inner: outcome.iters,
                        detail: "inner loop did not meet the first-variation threshold".into(),
                    });
                }
                warn!(
                    "outer iteration {k}: inner loop stopped by {} without meeting its threshold",
                    outcome.reason
                );
                out.failures.push(k);
            }
            let step = subproblem_loss(objective, &current, &anchor, &base, tau)?;

            if let Growth::Compose(cc) = self.growth {
                if current.len() > cc.max_len {
                    let (student, mut event) = distill(&current, &base, cc, rng)?;
                    let before = current.push_forward(base.clone())?;
                    let after = student.push_forward(base.clone())?;
                    event.k = k;
                    event.loss_before = self.full.value(&before.theta, &before.log_density)?;
                    event.loss_after = self.full.value(&after.theta, &after.log_density)?;
                    if !event.reached_tol {
                        warn!(
                            "outer iteration {k}: distillation stopped at L2 {:.3e} above tolerance {:.1e}",
                            event.l2, cc.distill_tol
                        );
                    }
                    out.distillations.push(event);
                    current = student;
                }
            }

            let particles = current.push_forward(base.clone())?;
            let loss = self.full.value(&particles.theta, &particles.log_density)?;
            let fv_var = fv_variance(self.full, &particles.theta, &particles.log_density)?;
            flow = current;
            flow.unfreeze();
            let record = RunRecord {
                k,
                loss,
                kl_step: step.kl,
                fv_var,
                inner_iters: outcome.iters,
                stop_reason: outcome.reason,
                wall_ms: start.elapsed().as_secs_f64() * 1e3,
                seed: self.seed,
            };
            debug!(
                "k={k} tau={tau:.3} lr={lr:.2e} loss={loss:.6} kl={:.3e} fv_var={fv_var:.3e} inner={} ({})",
                step.kl, outcome.iters, outcome.reason
            );
            out.records.push(record);
            out.inner_traces.push(outcome);
            if cfg.keep_checkpoints {
                out.checkpoints.push(serialize(&flow));
            }
            if outer_stop(k, fv_var, cfg.outer_threshold, cfg.burn_in) {
                out.converged_outer = true;
                break;
            }
        }
        out.flow = flow;
        Ok(out)
    }
}

/// Fits a fresh identity-initialised student of `compressed_len` blocks to
/// the teacher's outputs on `base` by mean squared distance.
pub fn distill<R: Rng + ?Sized>(
    teacher: &FlowModel,
    base: &Tensor,
    cc: &ComposeConfig,
    rng: &mut R,
) -> Result<(FlowModel, DistillEvent)> {
    let (target, _) = teacher.forward(base)?;
    let mut student = FlowModel::identity(
        teacher.base().clone(),
        cc.compressed_len,
        cc.width,
        cc.hidden_layers,
        rng,
    )?;
    let mut params = student.trainable_params();
    let mut adam = AdamState::new(&params);
    let m = base.rows() as f64;
    let mut best = (f64::INFINITY, params.clone());
    let mut steps = 0;
    for s in 0..cc.distill_iters.max(1) {
        steps = s + 1;
        let tape = Tape::new();
        let bound = student.bind(&tape, false);
        let x = tape.constant(base.clone());
        let (y, _) = bound.forward(&tape, x)?;
        let t = tape.constant(target.clone());
        let diff = tape.sub(y, t)?;
        let sq = tape.square(diff)?;
        let total = tape.sum(sq)?;
        let l2 = tape.scale(total, 1.0 / m)?;
        let value = tape.scalar_value(l2);
        if value < best.0 {
            best = (value, params.clone());
        }
        if value <= cc.distill_tol || s + 1 == cc.distill_iters {
            break;
        }
        let grads = tape.backward(l2)?;
        let gs: Vec<Tensor> = bound
            .trainable_vars(&tape)
            .into_iter()
            .map(|v| grads.get(v))
            .collect();
        drop(bound);
        adam.step(&mut params, &gs, cc.distill_lr)?;
        student.set_trainable_params(&params)?;
    }
    student.set_trainable_params(&best.1)?;
    Ok((
        student,
        DistillEvent {
            k: 0,
            steps,
            l2: best.0,
            reached_tol: best.0 <= cc.distill_tol,
            loss_before: f64::NAN,
            loss_after: f64::NAN,
        },
    ))
}
