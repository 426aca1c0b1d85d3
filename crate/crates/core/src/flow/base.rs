use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::tensor::{Tape, Tensor, Var};

/// Isotropic Gaussian `N(mean, variance * I)`; the law every flow pushes forward.
#[derive(Clone, Debug, PartialEq)]
pub struct BaseDistribution {
    mean: Vec<f64>,
    variance: f64,
}

impl BaseDistribution {
    pub fn new(mean: Vec<f64>, variance: f64) -> Result<Self> {
        if mean.is_empty() {
            return Err(Error::contract("base distribution needs dimension >= 1"));
        }
        if !(variance > 0.0 && variance.is_finite()) {
            return Err(Error::contract(format!(
                "base variance must be positive, got {variance}"
            )));
        }
        Ok(Self { mean, variance })
    }

    /// `N(0, variance * I_dim)`.
    pub fn centered(dim: usize, variance: f64) -> Result<Self> {
        Self::new(vec![0.0; dim], variance)
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    pub fn mean(&self) -> &[f64] {
        &self.mean
    }

    pub fn variance(&self) -> f64 {
        self.variance
    }

    fn log_norm(&self) -> f64 {
        -0.5 * self.dim() as f64 * (2.0 * std::f64::consts::PI * self.variance).ln()
    }

    /// Log-density at each row of `points`.
    pub fn log_density(&self, points: &Tensor) -> Vec<f64> {
        let c = self.log_norm();
        (0..points.rows())
            .map(|i| {
                let sq: f64 = points
                    .row_slice(i)
                    .iter()
                    .zip(&self.mean)
                    .map(|(x, m)| (x - m) * (x - m))
                    .sum();
                c - 0.5 * sq / self.variance
            })
            .collect()
    }

    /// Differentiable log-density as an `M × 1` column.
    pub fn log_density_on(&self, tape: &Tape, points: Var) -> Result<Var> {
        let m = tape.shape(points)[0];
        let centered = if self.mean.iter().all(|&v| v == 0.0) {
            points
        } else {
            let neg = tape.constant(Tensor::row(self.mean.iter().map(|v| -v).collect()));
            tape.add_row(points, neg)?
        };
        let sq = tape.square(centered)?;
        let ss = tape.sum_cols(sq)?;
        let scaled = tape.scale(ss, -0.5 / self.variance)?;
        debug_assert_eq!(tape.shape(scaled), vec![m, 1]);
        tape.offset(scaled, self.log_norm())
    }

    /// `count` i.i.d. draws as a `count × dim` matrix.
    pub fn sample<R: Rng + ?Sized>(&self, count: usize, rng: &mut R) -> Tensor {
        let d = self.dim();
        let sd = self.variance.sqrt();
        let mut data = Vec::with_capacity(count * d);
        for _ in 0..count {
            for m in &self.mean {
                let z: f64 = rng.sample(StandardNormal);
                data.push(m + sd * z);
            }
        }
        Tensor::matrix(count, d, data).expect("sized by construction")
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn standard_normal_at_origin() {
        let b = BaseDistribution::centered(2, 1.0).unwrap();
        let lp = b.log_density(&Tensor::zeros(&[1, 2]));
        assert!((lp[0] + (2.0 * std::f64::consts::PI).ln()).abs() < 1e-12);
    }

    #[test]
    fn tape_and_plain_paths_agree() {
        let b = BaseDistribution::new(vec![0.5, -1.0], 4.0).unwrap();
        let pts = Tensor::matrix(2, 2, vec![0.1, 0.2, -3.0, 1.5]).unwrap();
        let tape = Tape::new();
        let v = tape.constant(pts.clone());
        let out = b.log_density_on(&tape, v).unwrap();
        let lp = tape.value(out).into_data();
        let plain = b.log_density(&pts);
        for (a, c) in lp.iter().zip(&plain) {
            assert!((a - c).abs() < 1e-12);
        }
    }

    #[test]
    fn rejects_non_positive_variance() {
        assert!(BaseDistribution::centered(2, 0.0).is_err());
    }
}
