use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use toml::{Table, Value};

use crate::baselines::{MixingSpec, TwoMoonsSpec};
use crate::error::{Error, Result};
use crate::functional::LikelihoodKernel;
use crate::solver::{ComposeConfig, InnerThreshold, LrSchedule, SolverConfig, StepSchedule};

/// Which experiment a configuration describes.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ExperimentKind {
    NpmleLocation,
    NpmleLocationScale,
    BayesSampling,
    SimplexVerify,
    StepSizeStudy,
    DistillStudy,
}

impl ExperimentKind {
    pub fn as_str(self) -> &'static str {
        match self {
            Self::NpmleLocation => "npmle-location",
            Self::NpmleLocationScale => "npmle-location-scale",
            Self::BayesSampling => "bayes-sampling",
            Self::SimplexVerify => "simplex-verify",
            Self::StepSizeStudy => "step-size-study",
            Self::DistillStudy => "distill-study",
        }
    }

    pub fn is_npmle(self) -> bool {
        matches!(
            self,
            Self::NpmleLocation
                | Self::NpmleLocationScale
                | Self::StepSizeStudy
                | Self::DistillStudy
        )
    }
}

/// Scale of the expanded constants.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Profile {
    /// The published experiment sizes.
    Paper,
    /// Reduced sizes that finish in minutes on a laptop.
    Desk,
}

impl Profile {
    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "paper" => Ok(Self::Paper),
            "desk" => Ok(Self::Desk),
            other => Err(Error::Config(format!(
                "unknown profile `{other}` (expected `paper` or `desk`)"
            ))),
        }
    }
}

/// A method that produces a convergence series.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Method {
    /// Retrain the whole flow at every outer iteration.
    Iklpd,
    /// Mini-batch likelihood at every outer iteration.
    IklpdStochastic,
    /// Compose short flows and compress them.
    IklpdComposed,
    /// Fixed-grid weight updates.
    KwGrid,
    /// Unadjusted Langevin particles.
    Langevin,
}

impl Method {
    pub fn as_str(self) -> &'static str {
        match self {
            Self::Iklpd => "iklpd",
            Self::IklpdStochastic => "iklpd-stochastic",
            Self::IklpdComposed => "iklpd-composed",
            Self::KwGrid => "kw-grid",
            Self::Langevin => "langevin",
        }
    }

    fn allowed(self, kind: ExperimentKind) -> bool {
        use ExperimentKind as K;
        match self {
            Self::Iklpd => kind != K::SimplexVerify,
            Self::IklpdStochastic | Self::KwGrid => {
                matches!(kind, K::NpmleLocation | K::NpmleLocationScale)
            }
            Self::IklpdComposed => matches!(
                kind,
                K::NpmleLocation | K::NpmleLocationScale | K::DistillStudy
            ),
            Self::Langevin => kind == K::BayesSampling,
        }
    }
}

/// Flow architecture and the Gaussian initialisation `rho_0 = N(0, v I)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelConfig {
    pub blocks: usize,
    pub width: usize,
    pub hidden_layers: usize,
    pub init_variance: f64,
}

/// Synthetic mixture data.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DataConfig {
    pub n: usize,
    pub mixing: MixingSpec,
    /// Seed of the dataset, shared by all trials.
    pub seed: u64,
}

/// Target `pi ∝ exp(-||θ||^{2α} / (2α))`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TargetConfig {
    pub alpha: f64,
    pub dim: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LangevinConfig {
    pub dt: f64,
}

/// Fixed grid: `location_points` per location axis on `[-L, L]` with
/// `L = ||X||_inf`, and `scale_points` variances per axis equally spaced on
/// `scale_range` (location-scale kernel only).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridConfig {
    pub location_points: usize,
    pub scale_points: usize,
    pub scale_range: [f64; 2],
    pub tau: f64,
    pub steps: usize,
}

/// Overrides applied to the solver for the mini-batch variant.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StochasticSection {
    pub batch_size: usize,
    pub step: StepSchedule,
    pub lr: LrSchedule,
}

/// Metric settings.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MetricsConfig {
    /// Size of the randomised quasi-random target sample for W1.
    pub w1_reference_points: usize,
    /// Reference run for objective gaps: this many times the outer iterations.
    pub reference_outer_factor: usize,
    /// and this factor on the gradient-norm tolerance.
    pub reference_grad_tol_factor: f64,
}

/// Thresholds of the summary verdicts.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VerdictConfig {
    /// Terminal W1 the primary method must beat.
    pub w1_threshold: Option<f64>,
    /// Relative terminal-loss tolerance between composed and retrained flows.
    pub loss_rel_tol: f64,
    /// Trailing outer iterations over which the gap must decrease.
    pub trend_window: usize,
}

/// Step sizes and their Adam base rates `gamma` (rate `20 gamma / (19 + k)`).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StudyConfig {
    pub taus: Vec<f64>,
    pub gammas: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ContractionSettings {
    pub atoms: usize,
    pub half_width: f64,
    pub alpha: f64,
    pub tau: f64,
    pub steps: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SublinearSettings {
    pub n: usize,
    pub atoms: usize,
    /// Observations are `±separation + N(0, 1)`.
    pub separation: f64,
    pub tau: f64,
    pub steps: usize,
    pub reference_steps: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ContinuousSettings {
    pub dt: f64,
    pub horizon: f64,
    pub rate_tolerance: f64,
    pub max_dt_sensitivity: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InexactSettings {
    pub tau: f64,
    pub kappa: f64,
    pub geometric_eps: f64,
    pub polynomial_eps: f64,
    pub polynomial_alpha: f64,
    pub damping: f64,
    pub steps: usize,
    pub calibration_starts: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StochasticSettings {
    pub atoms: usize,
    pub batch: usize,
    pub tau: f64,
    pub steps: usize,
    pub trials: usize,
    pub probes: usize,
    pub lipschitz_draws: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ThreePointSettings {
    pub pairs: usize,
    pub atoms: usize,
    pub tau_range: [f64; 2],
    pub min_slack: f64,
}

/// Grid-level checks of the convergence guarantees.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimplexConfig {
    pub contraction: ContractionSettings,
    pub sublinear: SublinearSettings,
    pub continuous: ContinuousSettings,
    pub inexact: InexactSettings,
    pub stochastic: StochasticSettings,
    pub three_point: ThreePointSettings,
}

/// A complete, expanded experiment description.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub kind: ExperimentKind,
    pub profile: Profile,
    pub seeds: Vec<u64>,
    pub out_dir: PathBuf,
    pub methods: Vec<Method>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub model: Option<ModelConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub solver: Option<SolverConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub data: Option<DataConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub kernel: Option<KernelName>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub target: Option<TargetConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub langevin: Option<LangevinConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub grid: Option<GridConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub stochastic: Option<StochasticSection>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub compose: Option<ComposeConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub metrics: Option<MetricsConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub verdicts: Option<VerdictConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub study: Option<StudyConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub simplex: Option<SimplexConfig>,
}

/// Serializable name of a [`LikelihoodKernel`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum KernelName {
    GaussianLocation,
    GaussianLocationScale,
}

impl From<KernelName> for LikelihoodKernel {
    fn from(k: KernelName) -> Self {
        match k {
            KernelName::GaussianLocation => LikelihoodKernel::GaussianLocation,
            KernelName::GaussianLocationScale => LikelihoodKernel::GaussianLocationScale,
        }
    }
}

fn desk_solver(outer: usize, tau: f64, growth: f64) -> SolverConfig {
    SolverConfig {
        outer_iters: outer,
        max_inner: 100,
        particles: 500,
        step: StepSchedule::Geometric { tau, growth },
        lr: LrSchedule::Geometric {
            gamma: 5e-3,
            decay: 0.912,
        },
        grad_tol: 1e-4,
        patience: 200,
        ..SolverConfig::default()
    }
}

fn verdicts() -> VerdictConfig {
    VerdictConfig {
        w1_threshold: None,
        loss_rel_tol: 0.05,
        trend_window: 10,
    }
}

fn metrics() -> MetricsConfig {
    MetricsConfig {
        w1_reference_points: 512,
        reference_outer_factor: 4,
        reference_grad_tol_factor: 0.1,
    }
}

impl ExperimentConfig {
    /// Fully expanded defaults for `kind` at `profile`. `alpha` selects the
    /// target-dependent constants of the sampling experiment.
    pub fn defaults(kind: ExperimentKind, profile: Profile, alpha: f64) -> Self {
        use ExperimentKind as K;
        let paper = profile == Profile::Paper;
        let mut c = Self {
            kind,
            profile,
            seeds: if paper {
                (0..10).collect()
            } else {
                vec![1, 2, 3]
            },
            out_dir: PathBuf::from(format!("out/{}", kind.as_str())),
            methods: vec![Method::Iklpd],
            model: None,
            solver: None,
            data: None,
            kernel: None,
            target: None,
            langevin: None,
            grid: None,
            stochastic: None,
            compose: None,
            metrics: None,
            verdicts: None,
            study: None,
            simplex: None,
        };
        match kind {
            K::NpmleLocation | K::NpmleLocationScale => {
                let scale = kind == K::NpmleLocationScale;
                c.methods = vec![Method::Iklpd, Method::IklpdStochastic, Method::KwGrid];
                c.kernel = Some(if scale {
                    KernelName::GaussianLocationScale
                } else {
                    KernelName::GaussianLocation
                });
                c.data = Some(DataConfig {
                    n: if paper { 5000 } else { 500 },
                    mixing: MixingSpec::TwoMoons(TwoMoonsSpec::default()),
                    seed: 2024,
                });
                c.model = Some(match (paper, scale) {
                    (true, false) => ModelConfig {
                        blocks: 30,
                        width: 256,
                        hidden_layers: 2,
                        init_variance: 4.0,
                    },
                    (true, true) => ModelConfig {
                        blocks: 30,
                        width: 64,
                        hidden_layers: 2,
                        init_variance: 4.0,
                    },
                    (false, _) => ModelConfig {
                        blocks: 10,
                        width: 64,
                        hidden_layers: 1,
                        init_variance: 4.0,
                    },
                });
                c.solver = Some(if paper {
                    SolverConfig {
                        outer_iters: if scale { 50 } else { 25 },
                        particles: if scale { 2041 } else { 3000 },
                        ..SolverConfig::default()
                    }
                } else {
                    SolverConfig {
                        base_draws: crate::solver::BaseDraws::Global,
                        ..desk_solver(20, 5.0, 1.15)
                    }
                });
                c.stochastic = Some(StochasticSection {
                    batch_size: if paper { 500 } else { 50 },
                    step: StepSchedule::constant(5.0),
                    lr: if paper {
                        LrSchedule::Reciprocal {
                            gamma: 1.0,
                            horizon: 27.0,
                        }
                    } else {
                        LrSchedule::Reciprocal {
                            gamma: 5e-3,
                            horizon: 27.0,
                        }
                    },
                });
                c.grid = Some(GridConfig {
                    location_points: match (paper, scale) {
                        (true, false) => 55,
                        (true, true) => 7,
                        (false, false) => 30,
                        (false, true) => 6,
                    },
                    scale_points: match (paper, scale) {
                        (_, false) => 1,
                        (true, true) => 7,
                        (false, true) => 6,
                    },
                    scale_range: [0.01, 4.0],
                    tau: 1.0,
                    steps: c.solver.as_ref().map_or(25, |s| s.outer_iters),
                });
                c.compose = Some(compose(profile));
                c.metrics = Some(metrics());
                c.verdicts = Some(verdicts());
            }
            K::BayesSampling => {
                let a3 = alpha >= 3.0;
                c.methods = vec![Method::Iklpd, Method::Langevin];
                c.target = Some(TargetConfig { alpha, dim: 2 });
                c.langevin = Some(LangevinConfig {
                    dt: if a3 { 4e-4 } else { 1e-2 },
                });
                let init_variance = if a3 { 4.0 } else { 9.0 };
                c.model = Some(if paper {
                    ModelConfig {
                        blocks: 20,
                        width: 64,
                        hidden_layers: 2,
                        init_variance,
                    }
                } else {
                    ModelConfig {
                        blocks: 10,
                        width: 64,
                        hidden_layers: 1,
                        init_variance,
                    }
                });
                c.solver = Some(if paper {
                    SolverConfig {
                        outer_iters: 25,
                        max_inner: 1000,
                        particles: 1000,
                        step: StepSchedule::constant(5.0),
                        grad_tol: 0.0,
                        patience: 1000,
                        keep_checkpoints: true,
                        ..SolverConfig::default()
                    }
                } else {
                    SolverConfig {
                        particles: 1000,
                        keep_checkpoints: true,
                        ..desk_solver(15, 5.0, 1.0)
                    }
                });
                c.metrics = Some(metrics());
                c.verdicts = Some(VerdictConfig {
                    w1_threshold: if a3 { None } else { Some(0.15) },
                    ..verdicts()
                });
            }
            K::StepSizeStudy => {
                c.seeds = if paper {
                    (0..5).collect()
                } else {
                    vec![1, 2, 3]
                };
                c.kernel = Some(KernelName::GaussianLocation);
                c.data = Some(DataConfig {
                    n: if paper { 1000 } else { 500 },
                    mixing: MixingSpec::TwoMoons(TwoMoonsSpec::with_separation(1.4)),
                    seed: 2024,
                });
                c.model = Some(if paper {
                    ModelConfig {
                        blocks: 10,
                        width: 64,
                        hidden_layers: 2,
                        init_variance: 1.0,
                    }
                } else {
                    ModelConfig {
                        blocks: 6,
                        width: 32,
                        hidden_layers: 1,
                        init_variance: 1.0,
                    }
                });
                let base = SolverConfig {
                    outer_iters: if paper { 50 } else { 30 },
                    max_inner: if paper { 5000 } else { 1000 },
                    particles: if paper { 1000 } else { 500 },
                    step: StepSchedule::constant(1.0),
                    lr: LrSchedule::Harmonic { gamma: 1e-3 },
                    grad_tol: 0.0,
                    patience: if paper { 5000 } else { 1000 },
                    fv_check_every: 1,
                    inner_threshold: InnerThreshold::Harmonic { zeta: 0.07 },
                    outer_threshold: Some(0.05),
                    burn_in: 2,
                    ..SolverConfig::default()
                };
                c.solver = Some(base);
                c.study = Some(if paper {
                    StudyConfig {
                        taus: (1..=10).map(f64::from).collect(),
                        gammas: vec![1e-3; 10],
                    }
                } else {
                    StudyConfig {
                        taus: vec![1.0, 2.0, 4.0, 8.0],
                        gammas: vec![2.5e-4, 5e-4, 1e-3, 2e-3],
                    }
                });
            }
            K::DistillStudy => {
                c.seeds = if paper { (0..5).collect() } else { vec![1, 2] };
                c.methods = vec![Method::Iklpd, Method::IklpdComposed];
                c.kernel = Some(KernelName::GaussianLocation);
                c.data = Some(DataConfig {
                    n: if paper { 5000 } else { 500 },
                    mixing: MixingSpec::TwoMoons(TwoMoonsSpec::default()),
                    seed: 2024,
                });
                c.model = Some(if paper {
                    ModelConfig {
                        blocks: 30,
                        width: 256,
                        hidden_layers: 2,
                        init_variance: 4.0,
                    }
                } else {
                    ModelConfig {
                        blocks: 10,
                        width: 64,
                        hidden_layers: 1,
                        init_variance: 4.0,
                    }
                });
                c.solver = Some(if paper {
                    SolverConfig {
                        step: StepSchedule::constant(5.0),
                        lr: LrSchedule::Geometric {
                            gamma: 8e-5,
                            decay: 0.912,
                        },
                        grad_tol: 0.0,
                        patience: 1000,
                        ..SolverConfig::default()
                    }
                } else {
                    SolverConfig {
                        grad_tol: 0.0,
                        patience: 100,
                        base_draws: crate::solver::BaseDraws::Global,
                        ..desk_solver(12, 5.0, 1.0)
                    }
                });
                c.compose = Some(compose(profile));
                c.metrics = Some(metrics());
                c.verdicts = Some(verdicts());
            }
            K::SimplexVerify => {
                c.methods = Vec::new();
                c.seeds = vec![7];
                c.simplex = Some(SimplexConfig::default());
            }
        }
        c
    }

    /// Reads a TOML file and expands it over the defaults of its `kind` and
    /// `profile`; `profile` overrides the file's own switch when given.
    pub fn load(path: &Path, profile: Option<Profile>) -> Result<Self> {
        let text = fs::read_to_string(path)?;
        Self::from_toml_str(&text, profile)
    }

    /// As [`ExperimentConfig::load`], from text.
    pub fn from_toml_str(text: &str, profile: Option<Profile>) -> Result<Self> {
        let user: Table = text
            .parse()
            .map_err(|e: toml::de::Error| Error::Config(e.to_string()))?;
        let kind_value = user
            .get("kind")
            .ok_or_else(|| Error::Config("missing field `kind`".into()))?
            .clone();
        let kind: ExperimentKind = kind_value.try_into().map_err(|e: toml::de::Error| {
            Error::Config(format!("field `kind`: {}", e.message()))
        })?;
        let profile = match (profile, user.get("profile")) {
            (Some(p), _) => p,
            (None, Some(Value::String(s))) => Profile::parse(s)?,
            (None, Some(_)) => {
                return Err(Error::Config("field `profile` must be a string".into()))
            }
            (None, None) => Profile::Desk,
        };
        let alpha = user
            .get("target")
            .and_then(|t| t.get("alpha"))
            .and_then(|a| a.as_float().or_else(|| a.as_integer().map(|i| i as f64)))
            .unwrap_or(2.0);
        let defaults = Self::defaults(kind, profile, alpha);
        let mut merged = Table::try_from(&defaults).map_err(|e| Error::Config(e.to_string()))?;
        let mut user = user;
        user.insert("profile".into(), Value::String(profile_str(profile).into()));
        merge(&mut merged, user, "");
        let config: Self = Value::Table(merged)
            .try_into()
            .map_err(|e: toml::de::Error| Error::Config(e.message().to_string()))?;
        config.validate()?;
        Ok(config)
    }

    /// TOML text of the expanded configuration.
    pub fn to_toml(&self) -> Result<String> {
        toml::to_string_pretty(self).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn validate(&self) -> Result<()> {
        use ExperimentKind as K;
        let need = |present: bool, what: &str| {
            if present {
                Ok(())
            } else {
                Err(Error::Config(format!(
                    "{} needs a [{what}] section",
                    self.kind.as_str()
                )))
            }
        };
        if self.seeds.is_empty() {
            return Err(Error::Config("`seeds` must not be empty".into()));
        }
        if let Some(m) = self.methods.iter().find(|m| !m.allowed(self.kind)) {
            return Err(Error::Config(format!(
                "method `{}` does not apply to {}",
                m.as_str(),
                self.kind.as_str()
            )));
        }
        if self.kind != K::SimplexVerify && self.kind != K::StepSizeStudy && self.methods.is_empty()
        {
            return Err(Error::Config("`methods` must not be empty".into()));
        }
        if self.kind == K::SimplexVerify {
            return need(self.simplex.is_some(), "simplex");
        }
        need(self.model.is_some(), "model")?;
        let solver = self
            .solver
            .as_ref()
            .ok_or_else(|| Error::Config("missing [solver] section".into()))?;
        solver.validate()?;
        let model = self.model.as_ref().expect("checked");
        if model.blocks == 0 || model.width == 0 || !(model.init_variance > 0.0) {
            return Err(Error::Config(
                "model needs blocks >= 1, width >= 1 and a positive init_variance".into(),
            ));
        }
        if self.kind.is_npmle() {
            need(self.data.is_some(), "data")?;
            need(self.kernel.is_some(), "kernel")?;
            let data = self.data.as_ref().expect("checked");
            if data.n == 0 {
                return Err(Error::Config("data.n must be >= 1".into()));
            }
        }
        if self.kind != K::StepSizeStudy {
            need(self.metrics.is_some(), "metrics")?;
            need(self.verdicts.is_some(), "verdicts")?;
        }
        for m in &self.methods {
            match m {
                Method::IklpdStochastic => {
                    let s = self.stochastic.as_ref().ok_or_else(|| {
                        Error::Config("iklpd-stochastic needs a [stochastic] section".into())
                    })?;
                    let n = self.data.as_ref().map_or(0, |d| d.n);
                    if s.batch_size == 0 || s.batch_size > n {
                        return Err(Error::Config(format!(
                            "stochastic.batch_size {} outside 1..={n}",
                            s.batch_size
                        )));
                    }
                    s.step.validate()?;
                    s.lr.validate()?;
                }
                Method::KwGrid => {
                    let g = self
                        .grid
                        .as_ref()
                        .ok_or_else(|| Error::Config("kw-grid needs a [grid] section".into()))?;
                    if g.location_points == 0 || g.scale_points == 0 || !(g.tau > 0.0) {
                        return Err(Error::Config(
                            "grid needs positive point counts and tau".into(),
                        ));
                    }
                    if !(g.scale_range[0] > 0.0 && g.scale_range[1] > g.scale_range[0]) {
                        return Err(Error::Config("grid.scale_range must be 0 < lo < hi".into()));
                    }
                }
                Method::IklpdComposed => {
                    self.compose
                        .as_ref()
                        .ok_or_else(|| {
                            Error::Config("iklpd-composed needs a [compose] section".into())
                        })?
                        .validate()?;
                }
                Method::Langevin => {
                    let l = self.langevin.as_ref().ok_or_else(|| {
                        Error::Config("langevin needs a [langevin] section".into())
                    })?;
                    if !(l.dt > 0.0) {
                        return Err(Error::Config("langevin.dt must be positive".into()));
                    }
                }
                Method::Iklpd => {}
            }
        }
        match self.kind {
            K::BayesSampling => {
                let t = self.target.as_ref().ok_or_else(|| {
                    Error::Config("bayes-sampling needs a [target] section".into())
                })?;
                if !(t.alpha > 0.0) || t.dim == 0 {
                    return Err(Error::Config("target needs alpha > 0 and dim >= 1".into()));
                }
            }
            K::StepSizeStudy => {
                let s = self.study.as_ref().ok_or_else(|| {
                    Error::Config("step-size-study needs a [study] section".into())
                })?;
                if s.taus.is_empty() || s.taus.len() != s.gammas.len() {
                    return Err(Error::Config(
                        "study.taus and study.gammas must be nonempty and of equal length".into(),
                    ));
                }
                if s.taus.iter().chain(&s.gammas).any(|v| !(*v > 0.0)) {
                    return Err(Error::Config(
                        "study step sizes and rates must be positive".into(),
                    ));
                }
                if solver.outer_threshold.is_none() || solver.inner_threshold == InnerThreshold::Off
                {
                    return Err(Error::Config(
                        "step-size-study needs inner and outer first-variation thresholds".into(),
                    ));
                }
            }
            K::DistillStudy
                if (!self.methods.contains(&Method::Iklpd)
                    || !self.methods.contains(&Method::IklpdComposed)) =>
            {
                return Err(Error::Config(
                    "distill-study compares iklpd with iklpd-composed".into(),
                ));
            }
            _ => {}
        }
        Ok(())
    }

    pub fn solver(&self) -> &SolverConfig {
        self.solver
            .as_ref()
            .expect("validated configuration has a solver")
    }

    pub fn model(&self) -> &ModelConfig {
        self.model
            .as_ref()
            .expect("validated configuration has a model")
    }
}

fn compose(profile: Profile) -> ComposeConfig {
    match profile {
        Profile::Paper => ComposeConfig::default(),
        Profile::Desk => ComposeConfig {
            short_len: 2,
            max_len: 10,
            compressed_len: 6,
            distill_iters: 500,
            distill_lr: 1e-3,
            distill_tol: 1e-4,
            width: 64,
            hidden_layers: 1,
        },
    }
}

fn profile_str(p: Profile) -> &'static str {
    match p {
        Profile::Paper => "paper",
        Profile::Desk => "desk",
    }
}

/// Overlays `user` on `base`. Tables merge key by key, except that a table
/// whose `kind` tag differs from the default replaces it wholesale.
fn merge(base: &mut Table, user: Table, path: &str) {
    for (key, value) in user {
        let here = if path.is_empty() {
            key.clone()
        } else {
            format!("{path}.{key}")
        };
        match (base.get_mut(&key), value) {
            (Some(Value::Table(b)), Value::Table(u))
                if b.get("kind").is_none()
                    || b.get("kind") == u.get("kind")
                    || u.get("kind").is_none() =>
            {
                merge(b, u, &here)
            }
            (_, v) => {
                base.insert(key, v);
            }
        }
    }
}

impl Default for SimplexConfig {
    fn default() -> Self {
        Self {
            contraction: ContractionSettings {
                atoms: 20,
                half_width: 3.0,
                alpha: 1.0,
                tau: 1.0,
                steps: 30,
            },
            sublinear: SublinearSettings {
                n: 50,
                atoms: 50,
                separation: 2.0,
                tau: 1.0,
                steps: 200,
                reference_steps: 100_000,
            },
            continuous: ContinuousSettings {
                dt: 1e-3,
                horizon: 10.0,
                rate_tolerance: 0.05,
                max_dt_sensitivity: 0.01,
            },
            inexact: InexactSettings {
                tau: 1.0,
                kappa: 0.1,
                geometric_eps: 0.5,
                polynomial_eps: 0.1,
                polynomial_alpha: 1.0,
                damping: 0.25,
                steps: 50,
                calibration_starts: 8,
            },
            stochastic: StochasticSettings {
                atoms: 20,
                batch: 5,
                tau: 1.0,
                steps: 500,
                trials: 20,
                probes: 40,
                lipschitz_draws: 200,
            },
            three_point: ThreePointSettings {
                pairs: 1000,
                atoms: 20,
                tau_range: [0.1, 5.1],
                min_slack: -1e-8,
            },
        }
    }
}
