use crate::error::{Error, Result};
use crate::functional::{Dataset, LikelihoodKernel, PotentialTarget};
use crate::tensor::{log_sum_exp, Tensor};

use super::dist::SimplexDistribution;

/// An objective restricted to weight vectors over a fixed grid.
#[derive(Clone, Debug)]
pub enum GridObjective {
    /// Averaged negative log-likelihood of a mixture with grid support.
    Npmle {
        /// `n × G` likelihoods scaled by their row maximum.
        scaled: Vec<f64>,
        /// Row log-maxima.
        offsets: Vec<f64>,
        atoms: usize,
    },
    /// `KL(rho || pi)` with `pi` normalised on the grid.
    KlTarget { log_pi: Vec<f64> },
    /// A constant functional.
    Constant { value: f64, atoms: usize },
}

impl GridObjective {
    /// Likelihood objective for `data` under `kernel`; each atom is one
    /// kernel parameter row.
    pub fn npmle(data: &Dataset, kernel: LikelihoodKernel, atoms: &Tensor) -> Result<Self> {
        let log = kernel.log_matrix(data.matrix(), atoms)?;
        Ok(Self::from_log_likelihood(&log))
    }

    /// From an `n × G` matrix of log-likelihoods.
    pub fn from_log_likelihood(log: &Tensor) -> Self {
        let (n, g) = (log.rows(), log.cols());
        let mut scaled = Vec::with_capacity(n * g);
        let mut offsets = Vec::with_capacity(n);
        for i in 0..n {
            let row = log.row_slice(i);
            let m = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            offsets.push(m);
            scaled.extend(row.iter().map(|l| (l - m).exp()));
        }
        Self::Npmle {
            scaled,
            offsets,
            atoms: g,
        }
    }

    /// Grid restriction of `pi ∝ exp(-V)`.
    pub fn kl_target(potential: &PotentialTarget, atoms: &Tensor) -> Self {
        let unnorm: Vec<f64> = (0..atoms.rows())
            .map(|j| -potential.eval(atoms.row_slice(j)))
            .collect();
        Self::kl_target_from_log(&unnorm)
    }

    /// From unnormalised log target masses.
    pub fn kl_target_from_log(log_unnormalised: &[f64]) -> Self {
        let z = log_sum_exp(log_unnormalised);
        Self::KlTarget {
            log_pi: log_unnormalised.iter().map(|l| l - z).collect(),
        }
    }

    pub fn constant(value: f64, atoms: usize) -> Self {
        Self::Constant { value, atoms }
    }

    pub fn atoms(&self) -> usize {
        match self {
            Self::Npmle { atoms, .. } | Self::Constant { atoms, .. } => *atoms,
            Self::KlTarget { log_pi } => log_pi.len(),
        }
    }

    /// Observations behind a likelihood objective (0 otherwise).
    pub fn observations(&self) -> usize {
        match self {
            Self::Npmle { offsets, .. } => offsets.len(),
            _ => 0,
        }
    }

    /// Relative strong-convexity constant.
    pub fn lambda(&self) -> f64 {
        match self {
            Self::KlTarget { .. } => 1.0,
            _ => 0.0,
        }
    }

    /// The minimiser on the grid when it is known in closed form.
    pub fn known_minimizer(&self) -> Option<Vec<f64>> {
        match self {
            Self::KlTarget { log_pi } => Some(log_pi.iter().map(|l| l.exp()).collect()),
            _ => None,
        }
    }

    /// Likelihood objective over a subset of observations.
    pub fn rows(&self, idx: &[usize]) -> Result<Self> {
        match self {
            Self::Npmle {
                scaled,
                offsets,
                atoms,
            } => {
                if let Some(&bad) = idx.iter().find(|&&i| i >= offsets.len()) {
                    return Err(Error::contract(format!("observation {bad} out of range")));
                }
                Ok(Self::Npmle {
                    scaled: idx
                        .iter()
                        .flat_map(|&i| scaled[i * atoms..(i + 1) * atoms].iter().copied())
                        .collect(),
                    offsets: idx.iter().map(|&i| offsets[i]).collect(),
                    atoms: *atoms,
                })
            }
            _ => Err(Error::contract(
                "row subsets exist only for likelihood objectives",
            )),
        }
    }

    fn check(&self, g: usize) -> Result<()> {
        if g != self.atoms() {
            return Err(Error::shape(
                "grid objective",
                format!("{g} weights for {} atoms", self.atoms()),
            ));
        }
        Ok(())
    }

    fn denominators(scaled: &[f64], atoms: usize, w: &[f64]) -> Vec<f64> {
        scaled
            .chunks(atoms)
            .map(|row| row.iter().zip(w).map(|(l, w)| l * w).sum::<f64>())
            .collect()
    }

    /// Objective at weights given by their logarithms.
    pub fn value_log(&self, log_w: &[f64]) -> Result<f64> {
        self.check(log_w.len())?;
        match self {
            Self::Npmle {
                scaled,
                offsets,
                atoms,
            } => {
                let w: Vec<f64> = log_w.iter().map(|l| l.exp()).collect();
                let den = Self::denominators(scaled, *atoms, &w);
                let mut total = 0.0;
                for (i, (d, o)) in den.iter().zip(offsets).enumerate() {
                    if !(*d > 0.0) {
                        return Err(Error::domain(
                            "grid likelihood",
                            i,
                            "mixture density underflows",
                        ));
                    }
                    total += d.ln() + o;
                }
                Ok(-total / offsets.len() as f64)
            }
            Self::KlTarget { log_pi } => Ok(log_w
                .iter()
                .zip(log_pi)
                .map(|(&l, &p)| {
                    if l == f64::NEG_INFINITY {
                        0.0
                    } else {
                        l.exp() * (l - p)
                    }
                })
                .sum()),
            Self::Constant { value, .. } => Ok(*value),
        }
    }

    /// First variation at every atom, from log weights.
    pub fn first_variation_log(&self, log_w: &[f64]) -> Result<Vec<f64>> {
        self.check(log_w.len())?;
        match self {
            Self::Npmle {
                scaled,
                offsets,
                atoms,
            } => {
                let w: Vec<f64> = log_w.iter().map(|l| l.exp()).collect();
                let den = Self::denominators(scaled, *atoms, &w);
                let n = offsets.len() as f64;
                let mut fv = vec![0.0; *atoms];
                for (i, (row, d)) in scaled.chunks(*atoms).zip(&den).enumerate() {
                    if !(*d > 0.0) {
                        return Err(Error::domain(
                            "grid likelihood",
                            i,
                            "mixture density underflows",
                        ));
                    }
                    for (f, l) in fv.iter_mut().zip(row) {
                        *f -= l / d;
                    }
                }
                fv.iter_mut().for_each(|f| *f /= n);
                Ok(fv)
            }
            Self::KlTarget { log_pi } => {
                if let Some(j) = log_w.iter().position(|l| !l.is_finite()) {
                    return Err(Error::domain("grid KL first variation", j, "zero weight"));
                }
                Ok(log_w.iter().zip(log_pi).map(|(l, p)| l - p + 1.0).collect())
            }
            Self::Constant { atoms, .. } => Ok(vec![0.0; *atoms]),
        }
    }

    pub fn value(&self, rho: &SimplexDistribution) -> Result<f64> {
        self.value_log(&rho.log_weights())
    }

    /// `δF/δρ` at every atom.
    pub fn first_variation(&self, rho: &SimplexDistribution) -> Result<Vec<f64>> {
        self.first_variation_log(&rho.log_weights())
    }
}

/// [`GridObjective::first_variation`] as a free function.
pub fn simplex_fv(objective: &GridObjective, rho: &SimplexDistribution) -> Result<Vec<f64>> {
    objective.first_variation(rho)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::simplex::dist::grid_1d;

    fn small_npmle() -> (GridObjective, Tensor) {
        let atoms = grid_1d(-2.0, 2.0, 5).unwrap();
        let data = Dataset::from_rows(&[vec![-1.3], vec![0.2], vec![1.7]]).unwrap();
        (
            GridObjective::npmle(&data, LikelihoodKernel::GaussianLocation, &atoms).unwrap(),
            atoms,
        )
    }

    #[test]
    fn npmle_value_matches_direct_sum() {
        let (obj, atoms) = small_npmle();
        let w = [0.1, 0.2, 0.3, 0.25, 0.15];
        let rho = SimplexDistribution::new(atoms.clone(), w.to_vec()).unwrap();
        let xs = [-1.3, 0.2, 1.7];
        let mut direct = 0.0;
        for x in xs {
            let mix: f64 = (0..5)
                .map(|j| {
                    w[j] * (-(x - atoms.at(j, 0)).powi(2) / 2.0).exp()
                        / (2.0 * std::f64::consts::PI).sqrt()
                })
                .sum();
            direct -= mix.ln() / 3.0;
        }
        assert!((obj.value(&rho).unwrap() - direct).abs() < 1e-14);
    }

    #[test]
    fn npmle_fv_weighted_mean_is_minus_one() {
        let (obj, atoms) = small_npmle();
        let rho = SimplexDistribution::new(atoms, vec![0.05, 0.4, 0.1, 0.3, 0.15]).unwrap();
        let fv = obj.first_variation(&rho).unwrap();
        let mean: f64 = fv.iter().zip(rho.weights()).map(|(f, w)| f * w).sum();
        assert!((mean + 1.0).abs() < 1e-14);
    }

    #[test]
    fn kl_fv_is_one_at_target() {
        let atoms = grid_1d(-3.0, 3.0, 11).unwrap();
        let obj = GridObjective::kl_target(&PotentialTarget::new(1.0).unwrap(), &atoms);
        let pi = SimplexDistribution::new(atoms, obj.known_minimizer().unwrap()).unwrap();
        let fv = obj.first_variation(&pi).unwrap();
        assert!(fv.iter().all(|f| (f - 1.0).abs() < 1e-13));
        assert!(obj.value(&pi).unwrap().abs() < 1e-15);
    }

    #[test]
    fn kl_fv_rejects_zero_weight() {
        let atoms = grid_1d(-1.0, 1.0, 2).unwrap();
        let obj = GridObjective::kl_target(&PotentialTarget::new(1.0).unwrap(), &atoms);
        let rho = SimplexDistribution::new(atoms, vec![1.0, 0.0]).unwrap();
        assert!(matches!(
            obj.first_variation(&rho),
            Err(Error::Domain { index: 1, .. })
        ));
    }
}
