use std::f64::consts::PI;

use super::{Dataset, Functional};
use crate::error::{Error, Result};
use crate::tensor::{log_sum_exp, pairwise_sum, Tape, Tensor, Var};

/// Conditional density `p(x | theta)` of one observation.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum LikelihoodKernel {
    /// `N(theta, I_d)`; `theta` has the data dimension.
    GaussianLocation,
    /// `N(mu, diag(exp(v)))` with `theta = (mu, v)`, `v = log sigma^2`;
    /// `theta` has twice the data dimension.
    GaussianLocationScale,
}

impl LikelihoodKernel {
    /// Parameter dimension for observations of dimension `data_dim`.
    pub fn param_dim(self, data_dim: usize) -> usize {
        match self {
            Self::GaussianLocation => data_dim,
            Self::GaussianLocationScale => 2 * data_dim,
        }
    }

    /// `log p(X_i | theta_j)` as an `n × M` node; `x` is `n × d`, `theta` is `M × param_dim`.
    pub fn log_matrix_on(self, tape: &Tape, x: &Tensor, theta: Var) -> Result<Var> {
        let d = x.cols();
        let pd = tape.shape(theta)[1];
        if pd != self.param_dim(d) {
            return Err(Error::shape(
                "likelihood kernel",
                format!(
                    "parameters have {pd} columns, kernel needs {}",
                    self.param_dim(d)
                ),
            ));
        }
        let log_norm = -0.5 * d as f64 * (2.0 * PI).ln();
        match self {
            Self::GaussianLocation => {
                // log p = c - |x|^2/2 + x.theta - |theta|^2/2
                let xv = tape.constant(x.clone());
                let x_sq: Vec<f64> = (0..x.rows())
                    .map(|i| -0.5 * x.row_slice(i).iter().map(|v| v * v).sum::<f64>())
                    .collect();
                let x_sq = tape.constant(Tensor::column(x_sq));
                let tt = tape.transpose(theta)?;
                let cross = tape.matmul(xv, tt)?;
                let sq = tape.square(theta)?;
                let th_sq = tape.sum_cols(sq)?;
                let th_sq = tape.transpose(th_sq)?;
                let th_sq = tape.scale(th_sq, -0.5)?;
                let out = tape.add_col(cross, x_sq)?;
                let out = tape.add_row(out, th_sq)?;
                tape.offset(out, log_norm)
            }
            Self::GaussianLocationScale => {
                // quad_ij = sum_k (x_ik - mu_jk)^2 P_jk with P = exp(-v)
                //         = (x^2 P^T)_ij - 2 (x Q^T)_ij + R_j,  Q = mu P, R_j = sum_k mu_jk^2 P_jk
                let mu_idx: Vec<usize> = (0..d).collect();
                let v_idx: Vec<usize> = (d..2 * d).collect();
                let mu = tape.select_cols(theta, &mu_idx)?;
                let v = tape.select_cols(theta, &v_idx)?;
                let neg_v = tape.neg(v)?;
                let p = tape.exp(neg_v)?;
                let q = tape.mul(mu, p)?;
                let mu_q = tape.mul(mu, q)?;
                let r = tape.sum_cols(mu_q)?;
                let v_sum = tape.sum_cols(v)?;
                let per_particle = tape.add(r, v_sum)?;
                let per_particle = tape.transpose(per_particle)?;
                let per_particle = tape.scale(per_particle, -0.5)?;

                let xv = tape.constant(x.clone());
                let x2 = tape.constant(x.map(|a| a * a));
                let pt = tape.transpose(p)?;
                let qt = tape.transpose(q)?;
                let a = tape.matmul(x2, pt)?;
                let b = tape.matmul(xv, qt)?;
                let b = tape.scale(b, -2.0)?;
                let quad = tape.add(a, b)?;
                let quad = tape.scale(quad, -0.5)?;
                let out = tape.add_row(quad, per_particle)?;
                tape.offset(out, log_norm)
            }
        }
    }

    /// Plain `n × M` log-kernel matrix.
    pub fn log_matrix(self, x: &Tensor, theta: &Tensor) -> Result<Tensor> {
        let tape = Tape::new();
        let t = tape.constant(theta.clone());
        let out = self.log_matrix_on(&tape, x, t)?;
        Ok(tape.value(out))
    }
}

/// Averaged negative log-likelihood of a mixture,
/// `L_n(rho) = -(1/n) sum_i log int p(X_i | theta) d rho(theta)`.
#[derive(Clone, Debug)]
pub struct Npmle {
    data: Dataset,
    kernel: LikelihoodKernel,
}

impl Npmle {
    pub fn new(data: Dataset, kernel: LikelihoodKernel) -> Self {
        Self { data, kernel }
    }

    pub fn data(&self) -> &Dataset {
        &self.data
    }

    pub fn kernel(&self) -> LikelihoodKernel {
        self.kernel
    }

    /// The same objective on another dataset (a mini-batch, say).
    pub fn with_data(&self, data: Dataset) -> Self {
        Self {
            data,
            kernel: self.kernel,
        }
    }

    /// First variation at `eval` for the empirical measure on `particles`:
    /// `-(1/n) sum_i p(X_i | theta) / ((1/M) sum_j p(X_i | theta_j))`.
    pub fn first_variation_at(&self, eval: &Tensor, particles: &Tensor) -> Result<Vec<f64>> {
        let lp = self.kernel.log_matrix(self.data.matrix(), particles)?;
        let denom = self.log_denominators(&lp)?;
        let le = if std::ptr::eq(eval, particles) {
            lp
        } else {
            self.kernel.log_matrix(self.data.matrix(), eval)?
        };
        Ok(fv_from_log_matrix(&le, &denom))
    }

    /// `log((1/M) sum_j p(X_i | theta_j))` per observation.
    fn log_denominators(&self, lp: &Tensor) -> Result<Vec<f64>> {
        let log_m = (lp.cols() as f64).ln();
        (0..lp.rows())
            .map(|i| {
                let v = log_sum_exp(lp.row_slice(i)) - log_m;
                if v.is_finite() {
                    Ok(v)
                } else {
                    Err(Error::domain(
                        "npmle",
                        i,
                        "mixture density underflows for this observation",
                    ))
                }
            })
            .collect()
    }
}

fn fv_from_log_matrix(le: &Tensor, denom: &[f64]) -> Vec<f64> {
    let (n, e) = (le.rows(), le.cols());
    let mut acc = vec![0.0; e];
    for i in 0..n {
        let row = le.row_slice(i);
        for (a, &l) in acc.iter_mut().zip(row) {
            *a += (l - denom[i]).exp();
        }
    }
    acc.iter().map(|a| -a / n as f64).collect()
}

impl Functional for Npmle {
    fn param_dim(&self) -> usize {
        self.kernel.param_dim(self.data.dim())
    }

    fn strong_convexity(&self) -> f64 {
        0.0
    }

    fn loss_on(&self, tape: &Tape, theta: Var, _log_density: Var) -> Result<Var> {
        let lp = self.kernel.log_matrix_on(tape, self.data.matrix(), theta)?;
        let lpv = tape.value(lp);
        let m = lpv.cols();
        let mut row_max = Vec::with_capacity(lpv.rows());
        for i in 0..lpv.rows() {
            let mx = lpv
                .row_slice(i)
                .iter()
                .copied()
                .fold(f64::NEG_INFINITY, f64::max);
            if !mx.is_finite() {
                return Err(Error::domain(
                    "npmle",
                    i,
                    "mixture density underflows for this observation",
                ));
            }
            row_max.push(mx);
        }
        let mean_max = pairwise_sum(&row_max) / row_max.len() as f64;
        let shift = tape.constant(Tensor::column(row_max.iter().map(|v| -v).collect()));
        let shifted = tape.add_col(lp, shift)?;
        let e = tape.exp(shifted)?;
        let s = tape.sum_cols(e)?;
        let ls = tape.log(s)?;
        let avg = tape.mean(ls)?;
        let neg = tape.neg(avg)?;
        tape.offset(neg, (m as f64).ln() - mean_max)
    }

    fn value(&self, theta: &Tensor, _log_density: &[f64]) -> Result<f64> {
        let lp = self.kernel.log_matrix(self.data.matrix(), theta)?;
        let denom = self.log_denominators(&lp)?;
        Ok(-pairwise_sum(&denom) / denom.len() as f64)
    }

    fn first_variation(&self, theta: &Tensor, _log_density: &[f64]) -> Result<Vec<f64>> {
        self.first_variation_at(theta, theta)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn direct_log_p(kernel: LikelihoodKernel, x: &[f64], theta: &[f64]) -> f64 {
        let d = x.len();
        let mut density = 1.0;
        for k in 0..d {
            let (mu, var) = match kernel {
                LikelihoodKernel::GaussianLocation => (theta[k], 1.0),
                LikelihoodKernel::GaussianLocationScale => (theta[k], theta[d + k].exp()),
            };
            density *= (-(x[k] - mu).powi(2) / (2.0 * var)).exp() / (2.0 * PI * var).sqrt();
        }
        density.ln()
    }

    #[test]
    fn single_point_at_mode() {
        let f = Npmle::new(
            Dataset::from_rows(&[vec![0.0]]).unwrap(),
            LikelihoodKernel::GaussianLocation,
        );
        let v = f.value(&Tensor::zeros(&[1, 1]), &[0.0]).unwrap();
        assert!((v - 0.918_938_533_204_672_7).abs() < 1e-12);
    }

    #[test]
    fn kernel_matrices_match_direct_densities() {
        let x = Tensor::from_rows(&[vec![0.3, -1.0], vec![2.0, 0.5], vec![-0.7, 0.1]]).unwrap();
        let loc = Tensor::from_rows(&[vec![0.0, 0.0], vec![1.0, -2.0]]).unwrap();
        let ls =
            Tensor::from_rows(&[vec![0.0, 0.2, -0.5, 0.3], vec![1.0, -2.0, 0.7, 0.0]]).unwrap();
        for (kernel, theta) in [
            (LikelihoodKernel::GaussianLocation, &loc),
            (LikelihoodKernel::GaussianLocationScale, &ls),
        ] {
            let m = kernel.log_matrix(&x, theta).unwrap();
            for i in 0..3 {
                for j in 0..2 {
                    let expect = direct_log_p(kernel, x.row_slice(i), theta.row_slice(j));
                    assert!((m.at(i, j) - expect).abs() < 1e-12, "{kernel:?} {i} {j}");
                }
            }
        }
    }

    #[test]
    fn loss_matches_direct_sum() {
        let x = Tensor::from_rows(&[vec![0.3], vec![2.0], vec![-0.7]]).unwrap();
        let theta = Tensor::from_rows(&[vec![0.1], vec![1.2]]).unwrap();
        let f = Npmle::new(
            Dataset::new(x.clone()).unwrap(),
            LikelihoodKernel::GaussianLocation,
        );
        let mut expect = 0.0;
        for i in 0..3 {
            let mix: f64 = (0..2)
                .map(|j| {
                    0.5 * direct_log_p(
                        LikelihoodKernel::GaussianLocation,
                        x.row_slice(i),
                        theta.row_slice(j),
                    )
                    .exp()
                })
                .sum();
            expect -= mix.ln() / 3.0;
        }
        assert!((f.value(&theta, &[]).unwrap() - expect).abs() < 1e-12);
        let tape = Tape::new();
        let t = tape.constant(theta.clone());
        let z = tape.constant(Tensor::zeros(&[2, 1]));
        let l = f.loss_on(&tape, t, z).unwrap();
        assert!((tape.scalar_value(l) - expect).abs() < 1e-12);
    }

    #[test]
    fn first_variation_of_self_normalised_point_mass() {
        let f = Npmle::new(
            Dataset::from_rows(&[vec![0.0]]).unwrap(),
            LikelihoodKernel::GaussianLocation,
        );
        let fv = f.first_variation(&Tensor::zeros(&[1, 1]), &[]).unwrap();
        assert!((fv[0] + 1.0).abs() < 1e-15);
    }

    #[test]
    fn first_variation_matches_direct_evaluation() {
        let x = Tensor::from_rows(&[vec![0.3, 1.0], vec![-1.0, 0.5]]).unwrap();
        let theta = Tensor::from_rows(&[vec![0.0, 0.0], vec![1.0, 1.0], vec![-1.0, 2.0]]).unwrap();
        let f = Npmle::new(
            Dataset::new(x.clone()).unwrap(),
            LikelihoodKernel::GaussianLocation,
        );
        let fv = f.first_variation(&theta, &[]).unwrap();
        let p = |i: usize, j: usize| {
            direct_log_p(
                LikelihoodKernel::GaussianLocation,
                x.row_slice(i),
                theta.row_slice(j),
            )
            .exp()
        };
        for j in 0..3 {
            let mut expect = 0.0;
            for i in 0..2 {
                let denom = (p(i, 0) + p(i, 1) + p(i, 2)) / 3.0;
                expect -= p(i, j) / denom / 2.0;
            }
            assert!((fv[j] - expect).abs() < 1e-12);
        }
        let mean: f64 = fv.iter().sum::<f64>() / 3.0;
        assert!((mean + 1.0).abs() < 1e-12);
    }

    #[test]
    fn far_observation_does_not_underflow() {
        let f = Npmle::new(
            Dataset::from_rows(&[vec![60.0]]).unwrap(),
            LikelihoodKernel::GaussianLocation,
        );
        let v = f.value(&Tensor::zeros(&[1, 1]), &[]).unwrap();
        assert!((v - (0.5 * (2.0 * PI).ln() + 1800.0)).abs() < 1e-9);
        let fv = f.first_variation(&Tensor::zeros(&[1, 1]), &[]).unwrap();
        assert!((fv[0] + 1.0).abs() < 1e-12);
    }
}
