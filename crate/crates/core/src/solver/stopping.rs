use std::fmt;

use serde::{Deserialize, Serialize};

/// Why an inner loop ended.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum StopReason {
    GradNorm,
    Patience,
    FvVariance,
    MaxIters,
}

impl StopReason {
    pub fn as_str(self) -> &'static str {
        match self {
            Self::GradNorm => "grad-norm",
            Self::Patience => "patience",
            Self::FvVariance => "fv-variance",
            Self::MaxIters => "max-iters",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        [
            Self::GradNorm,
            Self::Patience,
            Self::FvVariance,
            Self::MaxIters,
        ]
        .into_iter()
        .find(|r| r.as_str() == s)
    }
}

impl fmt::Display for StopReason {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// One inner-step measurement.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct InnerObservation {
    pub loss: f64,
    pub grad_norm: f64,
    /// Subproblem first-variation variance, when it was evaluated at this step.
    pub fv_var: Option<f64>,
}

/// Inner-loop thresholds.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct StopThresholds {
    pub grad_tol: f64,
    pub patience: usize,
    pub patience_on_loss: bool,
    /// `zeta_k`.
    pub fv_threshold: Option<f64>,
}

/// Incremental form of [`stopping_check`].
#[derive(Clone, Debug)]
pub struct StopMonitor {
    thresholds: StopThresholds,
    best: f64,
    since_best: usize,
}

impl StopMonitor {
    pub fn new(thresholds: StopThresholds) -> Self {
        Self {
            thresholds,
            best: f64::INFINITY,
            since_best: 0,
        }
    }

    /// Feeds the next observation; returns the first satisfied criterion
    /// among gradient norm, patience and first-variation variance.
    pub fn observe(&mut self, obs: &InnerObservation) -> Option<StopReason> {
        let t = &self.thresholds;
        if obs.grad_norm < t.grad_tol {
            return Some(StopReason::GradNorm);
        }
        let progress = if t.patience_on_loss {
            obs.loss
        } else {
            obs.grad_norm
        };
        if progress < self.best {
            self.best = progress;
            self.since_best = 0;
        } else {
            self.since_best += 1;
            if self.since_best >= t.patience {
                return Some(StopReason::Patience);
            }
        }
        match (obs.fv_var, t.fv_threshold) {
            (Some(v), Some(z)) if v <= z => Some(StopReason::FvVariance),
            _ => None,
        }
    }
}

/// Replays `window` and reports the first step at which an inner criterion fires.
pub fn stopping_check(
    window: &[InnerObservation],
    thresholds: &StopThresholds,
) -> Option<(usize, StopReason)> {
    let mut m = StopMonitor::new(*thresholds);
    window
        .iter()
        .enumerate()
        .find_map(|(i, o)| m.observe(o).map(|r| (i, r)))
}

/// Outer criterion: first-variation variance at most `zeta`, never during burn-in.
pub fn outer_stop(k: usize, fv_var: f64, zeta: Option<f64>, burn_in: usize) -> bool {
    k > burn_in && zeta.is_some_and(|z| fv_var <= z)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn th() -> StopThresholds {
        StopThresholds {
            grad_tol: 1e-4,
            patience: 5,
            patience_on_loss: false,
            fv_threshold: Some(0.05),
        }
    }

    #[test]
    fn zero_variance_stops_on_first_variation() {
        let w = [InnerObservation {
            loss: 1.0,
            grad_norm: 1.0,
            fv_var: Some(0.0),
        }];
        assert_eq!(stopping_check(&w, &th()), Some((0, StopReason::FvVariance)));
    }

    #[test]
    fn decreasing_grad_norms_never_exhaust_patience() {
        let w: Vec<_> = (0..50)
            .map(|i| InnerObservation {
                loss: 1.0,
                grad_norm: 1.0 / (1.0 + i as f64),
                fv_var: None,
            })
            .collect();
        assert_eq!(stopping_check(&w, &th()), None);
    }

    #[test]
    fn flat_grad_norms_exhaust_patience() {
        let w: Vec<_> = (0..10)
            .map(|_| InnerObservation {
                loss: 1.0,
                grad_norm: 0.5,
                fv_var: None,
            })
            .collect();
        assert_eq!(stopping_check(&w, &th()), Some((5, StopReason::Patience)));
    }

    #[test]
    fn burn_in_blocks_outer_stop() {
        assert!(!outer_stop(2, 0.0, Some(0.05), 2));
        assert!(outer_stop(3, 0.01, Some(0.05), 2));
        assert!(!outer_stop(3, 0.01, None, 2));
    }

    #[test]
    fn reason_names_round_trip() {
        for r in [
            StopReason::GradNorm,
            StopReason::Patience,
            StopReason::FvVariance,
            StopReason::MaxIters,
        ] {
            assert_eq!(StopReason::parse(r.as_str()), Some(r));
        }
    }
}
