use super::Functional;
use crate::error::{Error, Result};
use crate::tensor::{pairwise_sum, Tape, Tensor, Var};

/// Potential `V(theta) = ||theta||^{2 alpha} / (2 alpha) + shift` of the
/// target `pi ∝ exp(-V)`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PotentialTarget {
    alpha: f64,
    shift: f64,
}

impl PotentialTarget {
    pub fn new(alpha: f64) -> Result<Self> {
        if !(alpha >= 1.0 && alpha.is_finite()) {
            return Err(Error::contract(format!(
                "potential exponent must be >= 1, got {alpha}"
            )));
        }
        Ok(Self { alpha, shift: 0.0 })
    }

    /// The same potential plus a constant.
    pub fn with_shift(self, shift: f64) -> Self {
        Self { shift, ..self }
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn shift(&self) -> f64 {
        self.shift
    }

    pub fn eval(&self, theta: &[f64]) -> f64 {
        let r2: f64 = theta.iter().map(|v| v * v).sum();
        r2.powf(self.alpha) / (2.0 * self.alpha) + self.shift
    }

    /// `∇V(theta) = ||theta||^{2 alpha - 2} theta`.
    pub fn grad(&self, theta: &[f64]) -> Vec<f64> {
        let r2: f64 = theta.iter().map(|v| v * v).sum();
        let c = if self.alpha == 1.0 {
            1.0
        } else {
            r2.powf(self.alpha - 1.0)
        };
        theta.iter().map(|v| c * v).collect()
    }

    /// `V` at every row of `theta`, as an `M × 1` node.
    pub fn eval_on(&self, tape: &Tape, theta: Var) -> Result<Var> {
        let sq = tape.square(theta)?;
        let r2 = tape.sum_cols(sq)?;
        let a = self.alpha;
        let pow = if a.fract() == 0.0 && a <= 16.0 {
            let mut acc = r2;
            for _ in 1..(a as usize) {
                acc = tape.mul(acc, r2)?;
            }
            acc
        } else {
            // tiny offset keeps log finite at the origin; r2^alpha there is 0 anyway
            let lifted = tape.offset(r2, f64::MIN_POSITIVE)?;
            let lg = tape.log(lifted)?;
            let scaled = tape.scale(lg, a)?;
            tape.exp(scaled)?
        };
        let v = tape.scale(pow, 1.0 / (2.0 * a))?;
        if self.shift == 0.0 {
            Ok(v)
        } else {
            tape.offset(v, self.shift)
        }
    }
}

/// `KL(rho || pi)` up to the constant `log Z`: `int V d rho + int rho log rho`.
#[derive(Clone, Debug)]
pub struct KlTarget {
    potential: PotentialTarget,
    dim: usize,
}

impl KlTarget {
    pub fn new(potential: PotentialTarget, dim: usize) -> Result<Self> {
        if dim == 0 {
            return Err(Error::contract("target dimension must be >= 1"));
        }
        Ok(Self { potential, dim })
    }

    pub fn potential(&self) -> &PotentialTarget {
        &self.potential
    }
}

impl Functional for KlTarget {
    fn param_dim(&self) -> usize {
        self.dim
    }

    fn strong_convexity(&self) -> f64 {
        1.0
    }

    fn uses_log_density(&self) -> bool {
        true
    }

    fn loss_on(&self, tape: &Tape, theta: Var, log_density: Var) -> Result<Var> {
        let v = self.potential.eval_on(tape, theta)?;
        let total = tape.add(v, log_density)?;
        tape.mean(total)
    }

    fn value(&self, theta: &Tensor, log_density: &[f64]) -> Result<f64> {
        check_log_density(theta, log_density)?;
        let terms: Vec<f64> = (0..theta.rows())
            .map(|j| self.potential.eval(theta.row_slice(j)) + log_density[j])
            .collect();
        Ok(pairwise_sum(&terms) / terms.len() as f64)
    }

    fn first_variation(&self, theta: &Tensor, log_density: &[f64]) -> Result<Vec<f64>> {
        check_log_density(theta, log_density)?;
        Ok((0..theta.rows())
            .map(|j| self.potential.eval(theta.row_slice(j)) + log_density[j] + 1.0)
            .collect())
    }
}

fn check_log_density(theta: &Tensor, log_density: &[f64]) -> Result<()> {
    if log_density.len() != theta.rows() {
        return Err(Error::contract(format!(
            "KL objective needs one log-density per particle ({} given for {})",
            log_density.len(),
            theta.rows()
        )));
    }
    Ok(())
}

/// `F ≡ 0`; the subproblem reduces to the proximal term alone.
#[derive(Clone, Copy, Debug)]
pub struct ZeroFunctional {
    pub dim: usize,
}

impl Functional for ZeroFunctional {
    fn param_dim(&self) -> usize {
        self.dim
    }

    fn strong_convexity(&self) -> f64 {
        0.0
    }

    fn loss_on(&self, tape: &Tape, _theta: Var, _log_density: Var) -> Result<Var> {
        Ok(tape.constant(Tensor::scalar(0.0)))
    }

    fn value(&self, _theta: &Tensor, _log_density: &[f64]) -> Result<f64> {
        Ok(0.0)
    }

    fn first_variation(&self, theta: &Tensor, _log_density: &[f64]) -> Result<Vec<f64>> {
        Ok(vec![0.0; theta.rows()])
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn potential_on_tape_matches_plain() {
        let theta = Tensor::from_rows(&[vec![0.5, -1.0], vec![0.0, 0.0], vec![1.5, 0.2]]).unwrap();
        for alpha in [1.0, 2.0, 3.0, 1.5] {
            let p = PotentialTarget::new(alpha).unwrap();
            let tape = Tape::new();
            let t = tape.constant(theta.clone());
            let v = tape.value(p.eval_on(&tape, t).unwrap());
            for j in 0..3 {
                assert!(
                    (v.data()[j] - p.eval(theta.row_slice(j))).abs() < 1e-12,
                    "alpha {alpha}"
                );
            }
        }
    }

    #[test]
    fn shift_moves_loss_by_constant() {
        let theta = Tensor::from_rows(&[vec![0.5], vec![-1.0]]).unwrap();
        let lp = [-1.0, -2.0];
        let p = PotentialTarget::new(2.0).unwrap();
        let a = KlTarget::new(p, 1).unwrap().value(&theta, &lp).unwrap();
        let b = KlTarget::new(p.with_shift(3.25), 1)
            .unwrap()
            .value(&theta, &lp)
            .unwrap();
        assert_eq!(b - a, 3.25);
    }

    #[test]
    fn missing_log_density_is_contract_violation() {
        let t = KlTarget::new(PotentialTarget::new(1.0).unwrap(), 1).unwrap();
        let theta = Tensor::from_rows(&[vec![0.5], vec![-1.0]]).unwrap();
        assert!(matches!(t.value(&theta, &[]), Err(Error::Contract(_))));
    }

    #[test]
    fn rejects_small_exponent() {
        assert!(PotentialTarget::new(0.5).is_err());
    }
}
