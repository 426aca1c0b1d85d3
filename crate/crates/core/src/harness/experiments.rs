use std::collections::HashMap;
use std::sync::{Mutex, OnceLock};

use log::{info, warn};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::aggregate::TrialSeries;
use super::config::{ExperimentConfig, GridConfig, Method};
use crate::baselines::{langevin_run, mixture_data_gen, nll_gap, w1_distance, RadialTargetSampler};
use crate::error::{Error, Result};
use crate::flow::{deserialize, BaseDistribution, FlowModel};
use crate::functional::{Dataset, Functional, KlTarget, LikelihoodKernel, Npmle, PotentialTarget};
use crate::simplex::{grid_box, kw_grid_solver, GridObjective};
use crate::solver::{
    solve_algorithm1, solve_algorithm2, solve_stochastic, DistillEvent, RunRecord, SolveOutput,
    SolverConfig, StochasticConfig,
};
use crate::tensor::Tensor;

const REFERENCE_SALT: u64 = 0x5eed_0f7a_26e7;

/// The objective an experiment minimises.
#[derive(Clone, Debug)]
pub enum Problem {
    Npmle(Npmle),
    Sampling {
        objective: KlTarget,
        sampler: RadialTargetSampler,
        log_z: f64,
    },
}

impl Problem {
    /// Builds the dataset or target of `config`.
    pub fn build(config: &ExperimentConfig) -> Result<Self> {
        if let Some(target) = &config.target {
            let potential = PotentialTarget::new(target.alpha)?;
            let sampler = RadialTargetSampler::new(&potential, target.dim)?;
            let log_z = RadialTargetSampler::log_normalizer(&potential, target.dim);
            return Ok(Self::Sampling {
                objective: KlTarget::new(potential, target.dim)?,
                sampler,
                log_z,
            });
        }
        let data = config
            .data
            .as_ref()
            .ok_or_else(|| Error::Config("experiment needs [data] or [target]".into()))?;
        let kernel: LikelihoodKernel = config
            .kernel
            .ok_or_else(|| Error::Config("experiment needs `kernel`".into()))?
            .into();
        let mut rng = ChaCha8Rng::seed_from_u64(data.seed);
        let (dataset, _) = mixture_data_gen(&data.mixing, kernel, data.n, &mut rng)?;
        Ok(Self::Npmle(Npmle::new(dataset, kernel)))
    }

    pub fn functional(&self) -> &dyn Functional {
        match self {
            Self::Npmle(f) => f,
            Self::Sampling { objective, .. } => objective,
        }
    }

    pub fn dataset(&self) -> Option<&Dataset> {
        match self {
            Self::Npmle(f) => Some(f.data()),
            Self::Sampling { .. } => None,
        }
    }
}

/// Everything one trial of one method produced.
#[derive(Clone, Debug)]
pub struct MethodRun {
    pub series: TrialSeries,
    pub records: Vec<RunRecord>,
    /// Outer iterations whose inner loop missed its threshold.
    pub failures: Vec<usize>,
    pub distillations: Vec<DistillEvent>,
    pub converged_outer: bool,
    pub notes: Vec<String>,
}

impl MethodRun {
    fn new(method: Method, seed: u64) -> Self {
        Self {
            series: TrialSeries::new(method, seed),
            records: Vec::new(),
            failures: Vec::new(),
            distillations: Vec::new(),
            converged_outer: false,
            notes: Vec::new(),
        }
    }
}

/// `rho_0 = N(0, v I)` pushed through an identity flow of the configured shape.
pub fn initial_flow(
    config: &ExperimentConfig,
    dim: usize,
    blocks: usize,
    rng: &mut ChaCha8Rng,
) -> Result<FlowModel> {
    let m = config.model();
    FlowModel::identity(
        BaseDistribution::centered(dim, m.init_variance)?,
        blocks,
        m.width,
        m.hidden_layers,
        rng,
    )
}

/// Objective value reached by a longer, tighter run on the same data,
/// cached per dataset seed and settings.
pub fn gap_reference(config: &ExperimentConfig, problem: &Problem) -> Result<Option<f64>> {
    let (Problem::Npmle(_), Some(data), Some(metrics)) = (problem, &config.data, &config.metrics)
    else {
        return Ok(None);
    };
    let mut solver = config.solver().clone();
    solver.outer_iters *= metrics.reference_outer_factor.max(1);
    solver.grad_tol *= metrics.reference_grad_tol_factor;
    solver.keep_checkpoints = false;
    solver.outer_threshold = None;
    solver.strict = false;
    let key = format!(
        "{}|{:?}|{:?}|{:?}|{:?}",
        data.seed, data, config.kernel, config.model, solver
    );
    static CACHE: OnceLock<Mutex<HashMap<String, f64>>> = OnceLock::new();
    let cache = CACHE.get_or_init(|| Mutex::new(HashMap::new()));
    if let Some(v) = cache.lock().expect("reference cache").get(&key) {
        return Ok(Some(*v));
    }
    info!("reference run: {} outer iterations", solver.outer_iters);
    let mut rng = ChaCha8Rng::seed_from_u64(data.seed ^ REFERENCE_SALT);
    let flow = initial_flow(
        config,
        problem.functional().param_dim(),
        config.model().blocks,
        &mut rng,
    )?;
    let out = solve_algorithm1(problem.functional(), flow, &solver, data.seed, &mut rng)?;
    let best = out
        .records
        .iter()
        .map(|r| r.loss)
        .fold(f64::INFINITY, f64::min);
    cache.lock().expect("reference cache").insert(key, best);
    Ok(Some(best))
}

/// Runs one trial of `method`.
pub fn run_method(
    config: &ExperimentConfig,
    problem: &Problem,
    method: Method,
    seed: u64,
    solver: &SolverConfig,
    reference: Option<f64>,
) -> Result<MethodRun> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let dim = problem.functional().param_dim();
    let mut run = MethodRun::new(method, seed);
    match method {
        Method::Iklpd | Method::IklpdStochastic | Method::IklpdComposed => {
            let blocks = match method {
                Method::IklpdComposed => config.compose.as_ref().map_or(1, |c| c.short_len),
                _ => config.model().blocks,
            };
            let flow = match method {
                Method::IklpdComposed => {
                    let cc = config
                        .compose
                        .as_ref()
                        .ok_or_else(|| Error::Config("missing [compose]".into()))?;
                    FlowModel::identity(
                        BaseDistribution::centered(dim, config.model().init_variance)?,
                        blocks,
                        cc.width,
                        cc.hidden_layers,
                        &mut rng,
                    )?
                }
                _ => initial_flow(config, dim, blocks, &mut rng)?,
            };
            let initial = initial_value(problem, &flow, solver.particles, &mut rng)?;
            let mut cfg = solver.clone();
            if matches!(problem, Problem::Sampling { .. }) {
                cfg.keep_checkpoints = true;
            }
            let out = match (method, problem) {
                (Method::Iklpd, _) => {
                    solve_algorithm1(problem.functional(), flow.clone(), &cfg, seed, &mut rng)?
                }
                (Method::IklpdComposed, _) => {
                    let cc = config.compose.as_ref().expect("validated");
                    solve_algorithm2(problem.functional(), flow.clone(), &cfg, cc, seed, &mut rng)?
                }
                (Method::IklpdStochastic, Problem::Npmle(npmle)) => {
                    let s = config
                        .stochastic
                        .as_ref()
                        .ok_or_else(|| Error::Config("missing [stochastic]".into()))?;
                    cfg.step = s.step;
                    cfg.lr = s.lr;
                    let sc = StochasticConfig {
                        batch_size: s.batch_size,
                    };
                    solve_stochastic(npmle, flow.clone(), &cfg, &sc, seed, &mut rng)?
                }
                _ => {
                    return Err(Error::Config(format!(
                        "{} needs a likelihood objective",
                        method.as_str()
                    )))
                }
            };
            record_flow_metrics(
                config, problem, &flow, initial, &out, reference, &mut run, &mut rng,
            )?;
            run.records = out.records;
            run.failures = out.failures;
            run.distillations = out.distillations;
            run.converged_outer = out.converged_outer;
        }
        Method::KwGrid => {
            let Problem::Npmle(npmle) = problem else {
                return Err(Error::Config("kw-grid needs a likelihood objective".into()));
            };
            let grid = config
                .grid
                .as_ref()
                .ok_or_else(|| Error::Config("missing [grid]".into()))?;
            let atoms = kw_atoms(npmle, grid)?;
            let obj = GridObjective::npmle(npmle.data(), npmle.kernel(), &atoms)?;
            let out = kw_grid_solver(&obj, &atoms, grid.tau, grid.steps)?;
            if out.backtracks > 0 {
                run.notes
                    .push(format!("step halved {} times", out.backtracks));
            }
            push_losses(&mut run.series, &out.losses, reference);
        }
        Method::Langevin => {
            let Problem::Sampling {
                objective, sampler, ..
            } = problem
            else {
                return Err(Error::Config("langevin needs a sampling target".into()));
            };
            let dt = config
                .langevin
                .as_ref()
                .ok_or_else(|| Error::Config("missing [langevin]".into()))?
                .dt;
            let base = BaseDistribution::centered(dim, config.model().init_variance)?;
            let init = base.sample(solver.particles, &mut rng);
            let reference_cloud = w1_reference(config, sampler, seed)?;
            run.series
                .push("w1", 0, w1_distance(&init, &reference_cloud, &mut rng)?);
            let lr = langevin_run(
                objective.potential(),
                dt,
                init,
                solver.outer_iters,
                1,
                &mut rng,
            )?;
            for (cloud, &k) in lr.snapshots.iter().zip(&lr.recorded_steps) {
                run.series
                    .push("w1", k, w1_distance(cloud, &reference_cloud, &mut rng)?);
            }
            if let Some(k) = lr.diverged_at {
                warn!("langevin diverged at step {k}");
                run.notes.push(format!("diverged at step {k}"));
                run.failures.push(k);
            }
        }
    }
    Ok(run)
}

fn initial_value(
    problem: &Problem,
    flow: &FlowModel,
    particles: usize,
    rng: &mut ChaCha8Rng,
) -> Result<f64> {
    let p = flow.sample(particles, rng)?;
    problem.functional().value(&p.theta, &p.log_density)
}

fn push_losses(series: &mut TrialSeries, losses: &[f64], reference: Option<f64>) {
    for (k, &l) in losses.iter().enumerate() {
        series.push("loss", k, l);
    }
    if let Some(r) = reference {
        for (k, g) in nll_gap(losses, r).iter().enumerate() {
            series.push("nll_gap", k, g.log_gap.exp());
        }
    }
}

#[allow(clippy::too_many_arguments)]
fn record_flow_metrics(
    config: &ExperimentConfig,
    problem: &Problem,
    init: &FlowModel,
    initial: f64,
    out: &SolveOutput,
    reference: Option<f64>,
    run: &mut MethodRun,
    rng: &mut ChaCha8Rng,
) -> Result<()> {
    for r in &out.records {
        run.series.push("fv_var", r.k, r.fv_var);
        run.series.push("inner_iters", r.k, r.inner_iters as f64);
    }
    match problem {
        Problem::Npmle(_) => {
            let losses: Vec<f64> = std::iter::once(initial)
                .chain(out.records.iter().map(|r| r.loss))
                .collect();
            push_losses(&mut run.series, &losses, reference);
        }
        Problem::Sampling { sampler, log_z, .. } => {
            run.series.push("kl", 0, initial + log_z);
            for r in &out.records {
                run.series.push("kl", r.k, r.loss + log_z);
            }
            let particles = config.solver().particles;
            let reference_cloud = w1_reference(config, sampler, run.series.seed)?;
            let p0 = init.sample(particles, rng)?;
            run.series
                .push("w1", 0, w1_distance(&p0.theta, &reference_cloud, rng)?);
            for (r, bytes) in out.records.iter().zip(&out.checkpoints) {
                let flow = deserialize(bytes)?;
                let p = flow.sample(particles, rng)?;
                run.series
                    .push("w1", r.k, w1_distance(&p.theta, &reference_cloud, rng)?);
            }
        }
    }
    Ok(())
}

/// Target sample that every method of trial `seed` is compared against.
fn w1_reference(
    config: &ExperimentConfig,
    sampler: &RadialTargetSampler,
    seed: u64,
) -> Result<Tensor> {
    let points = config
        .metrics
        .as_ref()
        .map_or(512, |m| m.w1_reference_points);
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ REFERENCE_SALT);
    match sampler.sample_quasi(points, &mut rng) {
        Ok(t) => Ok(t),
        Err(_) => Ok(sampler.sample(points, &mut rng)),
    }
}

/// Grid atoms: locations on `[-L, L]` per axis, `L = ||X||_inf`; for the
/// location-scale kernel, log-variances of equally spaced variances.
pub fn kw_atoms(npmle: &Npmle, grid: &GridConfig) -> Result<Tensor> {
    let d = npmle.data().dim();
    let l = npmle.data().sup_norm();
    match npmle.kernel() {
        LikelihoodKernel::GaussianLocation => {
            grid_box(&vec![-l; d], &vec![l; d], &vec![grid.location_points; d])
        }
        LikelihoodKernel::GaussianLocationScale => {
            let [lo, hi] = grid.scale_range;
            let lower: Vec<f64> = std::iter::repeat_n(-l, d)
                .chain(std::iter::repeat_n(lo, d))
                .collect();
            let upper: Vec<f64> = std::iter::repeat_n(l, d)
                .chain(std::iter::repeat_n(hi, d))
                .collect();
            let counts: Vec<usize> = std::iter::repeat_n(grid.location_points, d)
                .chain(std::iter::repeat_n(grid.scale_points, d))
                .collect();
            let g = grid_box(&lower, &upper, &counts)?;
            let cols = 2 * d;
            let mut data = g.into_data();
            for row in data.chunks_mut(cols) {
                for v in &mut row[d..] {
                    *v = v.ln();
                }
            }
            Tensor::matrix(data.len() / cols, cols, data)
        }
    }
}
