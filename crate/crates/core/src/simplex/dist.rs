use rand::Rng;
use rand_distr::{Distribution, Gamma};

use crate::error::{Error, Result};
use crate::tensor::{log_sum_exp, Tensor};

/// Tolerance on `sum(weights) = 1`.
pub const SIMPLEX_TOL: f64 = 1e-12;

/// A probability vector over a fixed grid of atoms.
#[derive(Clone, Debug, PartialEq)]
pub struct SimplexDistribution {
    atoms: Tensor,
    weights: Vec<f64>,
}

impl SimplexDistribution {
    /// Checks nonnegativity and unit mass.
    pub fn new(atoms: Tensor, weights: Vec<f64>) -> Result<Self> {
        if atoms.rows() != weights.len() {
            return Err(Error::shape(
                "simplex",
                format!("{} atoms vs {} weights", atoms.rows(), weights.len()),
            ));
        }
        if let Some(i) = weights.iter().position(|w| !(w.is_finite() && *w >= 0.0)) {
            return Err(Error::domain(
                "simplex",
                i,
                format!("weight {}", weights[i]),
            ));
        }
        let total: f64 = weights.iter().sum();
        if (total - 1.0).abs() > SIMPLEX_TOL * weights.len().max(1) as f64 {
            return Err(Error::contract(format!("weights sum to {total}, not 1")));
        }
        Ok(Self { atoms, weights })
    }

    /// Normalises nonnegative masses.
    pub fn from_masses(atoms: Tensor, masses: Vec<f64>) -> Result<Self> {
        let total: f64 = masses.iter().sum();
        if !(total > 0.0 && total.is_finite()) {
            return Err(Error::contract(format!("masses sum to {total}")));
        }
        Self::new(atoms, masses.iter().map(|m| m / total).collect())
    }

    /// Normalises `exp(log_masses)` stably.
    pub fn from_log_masses(atoms: Tensor, log_masses: &[f64]) -> Result<Self> {
        let z = log_sum_exp(log_masses);
        if !z.is_finite() {
            return Err(Error::domain(
                "simplex",
                0,
                "log masses have no finite normaliser",
            ));
        }
        Self::new(atoms, log_masses.iter().map(|l| (l - z).exp()).collect())
    }

    pub fn uniform(atoms: Tensor) -> Self {
        let g = atoms.rows();
        Self {
            atoms,
            weights: vec![1.0 / g as f64; g],
        }
    }

    /// Dirichlet draw with all concentrations equal to `concentration`.
    pub fn random<R: Rng + ?Sized>(atoms: Tensor, concentration: f64, rng: &mut R) -> Result<Self> {
        let gamma = Gamma::new(concentration, 1.0).map_err(|e| Error::contract(e.to_string()))?;
        let masses: Vec<f64> = (0..atoms.rows())
            .map(|_| gamma.sample(rng).max(1e-300))
            .collect();
        Self::from_masses(atoms, masses)
    }

    pub fn atoms(&self) -> &Tensor {
        &self.atoms
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    /// Same atoms, new weights.
    pub fn with_weights(&self, weights: Vec<f64>) -> Result<Self> {
        Self::new(self.atoms.clone(), weights)
    }

    pub fn log_weights(&self) -> Vec<f64> {
        self.weights.iter().map(|w| w.ln()).collect()
    }

    /// `(1 - t) self + t other`.
    pub fn mix(&self, other: &Self, t: f64) -> Result<Self> {
        let w = self
            .weights
            .iter()
            .zip(&other.weights)
            .map(|(a, b)| (1.0 - t) * a + t * b)
            .collect();
        Self::from_masses(self.atoms.clone(), w)
    }
}

/// `KL(p || q) = sum p log(p / q)` for probability vectors, with `0 log 0 = 0`
/// and `+inf` when `q` misses mass of `p`. Summed as
/// `sum p (u - ln(1 + u))` with `u = q / p - 1` (and `q` where `p = 0`), which
/// equals the usual sum when both vectors have unit mass, is nonnegative term
/// by term and keeps relative accuracy when `q` is close to `p`.
pub fn kl_divergence(p: &[f64], q: &[f64]) -> f64 {
    p.iter()
        .zip(q)
        .map(|(&a, &b)| {
            if a == 0.0 {
                b
            } else if b == 0.0 {
                f64::INFINITY
            } else {
                let u = b / a - 1.0;
                if u.abs() < 0.5 {
                    a * (u - u.ln_1p())
                } else {
                    a * (a / b).ln() + (b - a)
                }
            }
        })
        .sum()
}

/// [`kl_divergence`] from log weights: `sum e^a (expm1(b - a) - (b - a))`.
pub fn kl_from_logs(log_p: &[f64], log_q: &[f64]) -> f64 {
    log_p
        .iter()
        .zip(log_q)
        .map(|(&a, &b)| {
            if a == f64::NEG_INFINITY {
                b.exp()
            } else if b == f64::NEG_INFINITY {
                f64::INFINITY
            } else {
                let d = b - a;
                if d.abs() < 0.5 {
                    a.exp() * (d.exp_m1() - d)
                } else {
                    b.exp() - a.exp() * (1.0 + d)
                }
            }
        })
        .sum()
}

pub fn l1_distance(p: &[f64], q: &[f64]) -> f64 {
    p.iter().zip(q).map(|(a, b)| (a - b).abs()).sum()
}

/// Max minus min.
pub fn oscillation(values: &[f64]) -> f64 {
    let (lo, hi) = values
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| {
            (lo.min(v), hi.max(v))
        });
    hi - lo
}

/// Equally spaced atoms `lo, ..., hi` on the line.
pub fn grid_1d(lo: f64, hi: f64, count: usize) -> Result<Tensor> {
    grid_box(&[lo], &[hi], &[count])
}

/// Tensor-product grid with `counts[i]` equally spaced points on
/// `[lo[i], hi[i]]`; the last coordinate varies fastest.
pub fn grid_box(lo: &[f64], hi: &[f64], counts: &[usize]) -> Result<Tensor> {
    let d = lo.len();
    if d == 0 || hi.len() != d || counts.len() != d {
        return Err(Error::shape(
            "grid",
            "bounds and counts must share a nonzero length",
        ));
    }
    if counts.contains(&0) {
        return Err(Error::contract("grid axis with zero points"));
    }
    let axes: Vec<Vec<f64>> = (0..d)
        .map(|i| {
            if counts[i] == 1 {
                vec![0.5 * (lo[i] + hi[i])]
            } else {
                (0..counts[i])
                    .map(|j| lo[i] + (hi[i] - lo[i]) * j as f64 / (counts[i] - 1) as f64)
                    .collect()
            }
        })
        .collect();
    let total: usize = counts.iter().product();
    let mut data = Vec::with_capacity(total * d);
    let mut idx = vec![0usize; d];
    for _ in 0..total {
        for (i, &j) in idx.iter().enumerate() {
            data.push(axes[i][j]);
        }
        for i in (0..d).rev() {
            idx[i] += 1;
            if idx[i] < counts[i] {
                break;
            }
            idx[i] = 0;
        }
    }
    Tensor::matrix(total, d, data)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_unnormalised_weights() {
        let atoms = grid_1d(0.0, 1.0, 2).unwrap();
        assert!(SimplexDistribution::new(atoms.clone(), vec![0.5, 0.6]).is_err());
        assert!(SimplexDistribution::new(atoms, vec![1.5, -0.5]).is_err());
    }

    #[test]
    fn kl_identities() {
        let p = [0.2, 0.3, 0.5];
        assert_eq!(kl_divergence(&p, &p), 0.0);
        assert_eq!(
            kl_divergence(&[0.5, 0.5, 0.0], &[1.0, 0.0, 0.0]),
            f64::INFINITY
        );
        let lp: Vec<f64> = p.iter().map(|v: &f64| v.ln()).collect();
        let lq: Vec<f64> = [0.4, 0.4, 0.2].iter().map(|v: &f64| v.ln()).collect();
        assert!((kl_from_logs(&lp, &lq) - kl_divergence(&p, &[0.4, 0.4, 0.2])).abs() < 1e-15);
    }

    #[test]
    fn box_grid_layout() {
        let g = grid_box(&[0.0, 10.0], &[1.0, 12.0], &[2, 3]).unwrap();
        assert_eq!(g.rows(), 6);
        assert_eq!(g.row_slice(1), &[0.0, 11.0]);
        assert_eq!(g.row_slice(5), &[1.0, 12.0]);
    }
}
