use crate::error::{Error, Result};

use super::dist::SimplexDistribution;
use super::objective::GridObjective;

/// Fixed-grid weight updates.
#[derive(Clone, Debug)]
pub struct KwRun {
    /// Objective at every iterate, starting from the uniform weights.
    pub losses: Vec<f64>,
    pub terminal: SimplexDistribution,
    /// Step halvings needed for feasibility or descent.
    pub backtracks: usize,
}

/// Explicit Fisher-Rao steps `w_j <- w_j (1 - tau (FV_j - <FV>))` from the
/// uniform weights, clipped at zero and renormalised. A step that would
/// leave the simplex or raise the objective is retried with half of `tau`.
pub fn kw_grid_solver(
    obj: &GridObjective,
    atoms: &crate::tensor::Tensor,
    tau: f64,
    steps: usize,
) -> Result<KwRun> {
    if !(tau > 0.0) {
        return Err(Error::contract(format!(
            "step size must be positive, got {tau}"
        )));
    }
    if atoms.rows() != obj.atoms() {
        return Err(Error::shape(
            "kw_grid_solver",
            "grid and objective sizes differ",
        ));
    }
    let mut rho = SimplexDistribution::uniform(atoms.clone());
    let mut loss = obj.value(&rho)?;
    let mut run = KwRun {
        losses: vec![loss],
        terminal: rho.clone(),
        backtracks: 0,
    };
    for _ in 0..steps {
        let fv = obj.first_variation(&rho)?;
        let mean: f64 = fv.iter().zip(rho.weights()).map(|(f, w)| f * w).sum();
        let mut t = tau;
        let mut accepted = false;
        for _ in 0..60 {
            let factors: Vec<f64> = fv.iter().map(|f| 1.0 - t * (f - mean)).collect();
            let feasible = factors
                .iter()
                .zip(rho.weights())
                .all(|(f, w)| *f >= 0.0 || *w == 0.0);
            if feasible {
                let masses: Vec<f64> = rho
                    .weights()
                    .iter()
                    .zip(&factors)
                    .map(|(w, f)| (w * f).max(0.0))
                    .collect();
                let cand = SimplexDistribution::from_masses(atoms.clone(), masses)?;
                let cand_loss = obj.value(&cand)?;
                if cand_loss <= loss {
                    rho = cand;
                    loss = cand_loss;
                    accepted = true;
                    break;
                }
            }
            t *= 0.5;
            run.backtracks += 1;
        }
        if !accepted {
            break;
        }
        run.losses.push(loss);
    }
    run.terminal = rho;
    Ok(run)
}

/// Grid maximum-likelihood weights by `steps` fixed-point updates
/// `w_j <- w_j (-FV_j)` from uniform weights. Returns the weights and objective.
pub fn grid_npmle_reference(
    obj: &GridObjective,
    atoms: &crate::tensor::Tensor,
    steps: usize,
) -> Result<(SimplexDistribution, f64)> {
    if !matches!(obj, GridObjective::Npmle { .. }) {
        return Err(Error::contract(
            "reference solve needs a likelihood objective",
        ));
    }
    let mut rho = SimplexDistribution::uniform(atoms.clone());
    for _ in 0..steps {
        let fv = obj.first_variation(&rho)?;
        let masses: Vec<f64> = rho
            .weights()
            .iter()
            .zip(&fv)
            .map(|(w, f)| w * (-f))
            .collect();
        rho = SimplexDistribution::from_masses(atoms.clone(), masses)?;
    }
    let value = obj.value(&rho)?;
    Ok((rho, value))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::functional::{Dataset, LikelihoodKernel};
    use crate::simplex::dist::grid_1d;

    #[test]
    fn weights_stay_on_simplex_and_loss_never_rises() {
        let atoms = grid_1d(-4.0, 4.0, 41).unwrap();
        let data = Dataset::from_rows(
            &(0..30)
                .map(|i| vec![(i as f64 * 0.37).sin() * 3.0])
                .collect::<Vec<_>>(),
        )
        .unwrap();
        let obj = GridObjective::npmle(&data, LikelihoodKernel::GaussianLocation, &atoms).unwrap();
        let run = kw_grid_solver(&obj, &atoms, 3.0, 200).unwrap();
        assert!(run.losses.windows(2).all(|w| w[1] <= w[0]));
        let total: f64 = run.terminal.weights().iter().sum();
        assert!((total - 1.0).abs() < 1e-12);
        assert!(run.terminal.weights().iter().all(|&w| w >= 0.0));
    }
}
