use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Proximal step size `tau_k` for outer iteration `k >= 1`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum StepSchedule {
    /// `tau * growth^{k-1}`.
    Geometric { tau: f64, growth: f64 },
    /// `tau / sqrt(k + 1)`.
    InverseSqrt { tau: f64 },
    /// `2 / (lambda (k + 1))`.
    StronglyConvex { lambda: f64 },
}

impl StepSchedule {
    pub fn constant(tau: f64) -> Self {
        Self::Geometric { tau, growth: 1.0 }
    }

    pub fn at(&self, k: usize) -> f64 {
        let k = k as f64;
        match *self {
            Self::Geometric { tau, growth } => tau * growth.powf(k - 1.0),
            Self::InverseSqrt { tau } => tau / (k + 1.0).sqrt(),
            Self::StronglyConvex { lambda } => 2.0 / (lambda * (k + 1.0)),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let ok = match *self {
            Self::Geometric { tau, growth } => tau > 0.0 && growth > 0.0,
            Self::InverseSqrt { tau } => tau > 0.0,
            Self::StronglyConvex { lambda } => lambda > 0.0,
        };
        if ok {
            Ok(())
        } else {
            Err(Error::Config(format!("invalid step schedule {self:?}")))
        }
    }
}

/// Adam learning rate `gamma_k` for outer iteration `k >= 1`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum LrSchedule {
    /// `gamma * decay^{k-1}`.
    Geometric { gamma: f64, decay: f64 },
    /// `20 gamma / (19 + k)`.
    Harmonic { gamma: f64 },
    /// `gamma / (1 + k / horizon)`.
    Reciprocal { gamma: f64, horizon: f64 },
}

impl LrSchedule {
    pub fn at(&self, k: usize) -> f64 {
        let k = k as f64;
        match *self {
            Self::Geometric { gamma, decay } => gamma * decay.powf(k - 1.0),
            Self::Harmonic { gamma } => 20.0 * gamma / (19.0 + k),
            Self::Reciprocal { gamma, horizon } => gamma / (1.0 + k / horizon),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let ok = match *self {
            Self::Geometric { gamma, decay } => gamma > 0.0 && decay > 0.0 && decay <= 1.0,
            Self::Harmonic { gamma } => gamma > 0.0,
            Self::Reciprocal { gamma, horizon } => gamma > 0.0 && horizon > 0.0,
        };
        if ok {
            Ok(())
        } else {
            Err(Error::Config(format!(
                "invalid learning-rate schedule {self:?}"
            )))
        }
    }
}

/// Inner-loop first-variation threshold `zeta_k`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum InnerThreshold {
    Off,
    Constant {
        zeta: f64,
    },
    /// `20 zeta / (19 + k)`.
    Harmonic {
        zeta: f64,
    },
}

impl InnerThreshold {
    pub fn at(&self, k: usize) -> Option<f64> {
        match *self {
            Self::Off => None,
            Self::Constant { zeta } => Some(zeta),
            Self::Harmonic { zeta } => Some(20.0 * zeta / (19.0 + k as f64)),
        }
    }
}

/// When to draw base points.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum BaseDraws {
    /// Once for the whole solve.
    Global,
    /// Once per outer iteration, reused across its inner steps.
    PerOuter,
    /// Fresh draws at every inner step.
    PerInner,
}

/// Outer and inner loop settings shared by every solver.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SolverConfig {
    /// `N_1`.
    pub outer_iters: usize,
    /// `N_2`.
    pub max_inner: usize,
    /// `M`.
    pub particles: usize,
    pub step: StepSchedule,
    pub lr: LrSchedule,
    /// Stop the inner loop once the parameter-gradient L2 norm falls below this.
    pub grad_tol: f64,
    /// Stop the inner loop after this many steps without progress.
    pub patience: usize,
    /// Measure progress by the subproblem loss instead of the gradient norm.
    pub patience_on_loss: bool,
    pub inner_threshold: InnerThreshold,
    /// Evaluate the inner first-variation criterion every this many steps.
    pub fv_check_every: usize,
    /// Outer stop once the first-variation variance is at most this (after burn-in).
    pub outer_threshold: Option<f64>,
    pub burn_in: usize,
    pub base_draws: BaseDraws,
    /// Abort instead of recording an inner non-convergence.
    pub strict: bool,
    /// Keep a serialized flow for every outer iteration.
    pub keep_checkpoints: bool,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            outer_iters: 25,
            max_inner: 1000,
            particles: 3000,
            step: StepSchedule::Geometric {
                tau: 5.0,
                growth: 1.15,
            },
            lr: LrSchedule::Geometric {
                gamma: 1e-4,
                decay: 0.912,
            },
            grad_tol: 1e-4,
            patience: 200,
            patience_on_loss: false,
            inner_threshold: InnerThreshold::Off,
            fv_check_every: 10,
            outer_threshold: None,
            burn_in: 2,
            base_draws: BaseDraws::PerOuter,
            strict: false,
            keep_checkpoints: false,
        }
    }
}

impl SolverConfig {
    pub fn validate(&self) -> Result<()> {
        if self.outer_iters == 0 || self.max_inner == 0 {
            return Err(Error::Config(
                "outer_iters and max_inner must be >= 1".into(),
            ));
        }
        if self.particles < 2 {
            return Err(Error::Config("particles must be >= 2".into()));
        }
        if self.fv_check_every == 0 {
            return Err(Error::Config("fv_check_every must be >= 1".into()));
        }
        if !(self.grad_tol >= 0.0) {
            return Err(Error::Config("grad_tol must be >= 0".into()));
        }
        self.step.validate()?;
        self.lr.validate()
    }
}

/// Settings for composing short flows and compressing them.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ComposeConfig {
    /// Length `k_2` of each appended short flow.
    pub short_len: usize,
    /// Length `k_1` that triggers compression.
    pub max_len: usize,
    /// Length `k_0` of the compressed student.
    pub compressed_len: usize,
    /// `N_3`.
    pub distill_iters: usize,
    /// `gamma'`.
    pub distill_lr: f64,
    /// `epsilon`: early exit once the mean squared output distance is at most this.
    pub distill_tol: f64,
    /// Conditioner width of appended and student blocks.
    pub width: usize,
    /// Hidden layers per conditioner of appended and student blocks.
    pub hidden_layers: usize,
}

impl Default for ComposeConfig {
    fn default() -> Self {
        Self {
            short_len: 4,
            max_len: 40,
            compressed_len: 20,
            distill_iters: 3000,
            distill_lr: 1e-5,
            distill_tol: 1e-4,
            width: 512,
            hidden_layers: 2,
        }
    }
}

impl ComposeConfig {
    pub fn validate(&self) -> Result<()> {
        if self.short_len == 0 || self.compressed_len == 0 {
            return Err(Error::Config(
                "short and compressed flow lengths must be >= 1".into(),
            ));
        }
        if self.compressed_len > self.max_len {
            return Err(Error::Config(
                "compressed length must not exceed the maximum length".into(),
            ));
        }
        if !(self.distill_lr > 0.0) || !(self.distill_tol >= 0.0) {
            return Err(Error::Config(
                "distillation rate must be positive and tolerance non-negative".into(),
            ));
        }
        Ok(())
    }
}

/// Mini-batch settings for the stochastic solver; the step schedule in
/// [`SolverConfig`] applies.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StochasticConfig {
    pub batch_size: usize,
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn schedules_follow_their_formulas() {
        let g = StepSchedule::Geometric {
            tau: 5.0,
            growth: 1.15,
        };
        assert_eq!(g.at(1), 5.0);
        assert!((g.at(3) - 5.0 * 1.15 * 1.15).abs() < 1e-12);
        assert_eq!(StepSchedule::InverseSqrt { tau: 2.0 }.at(3), 1.0);
        assert_eq!(StepSchedule::StronglyConvex { lambda: 1.0 }.at(1), 1.0);
        assert_eq!(LrSchedule::Harmonic { gamma: 1.0 }.at(1), 1.0);
        assert_eq!(
            LrSchedule::Reciprocal {
                gamma: 1.0,
                horizon: 27.0
            }
            .at(27),
            0.5
        );
        assert!((InnerThreshold::Harmonic { zeta: 0.07 }.at(1).unwrap() - 0.07).abs() < 1e-15);
    }

    #[test]
    fn validation_rejects_bad_values() {
        let mut c = SolverConfig::default();
        assert!(c.validate().is_ok());
        c.particles = 1;
        assert!(c.validate().is_err());
        let cc = ComposeConfig {
            compressed_len: 50,
            ..ComposeConfig::default()
        };
        assert!(cc.validate().is_err());
    }
}
