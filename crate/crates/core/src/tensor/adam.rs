use super::Tensor;
use crate::error::{Error, Result};

/// Adam moments for a fixed list of parameter tensors.
#[derive(Clone, Debug)]
pub struct AdamState {
    first_moment: Vec<Tensor>,
    second_moment: Vec<Tensor>,
    step_count: u64,
    pub beta_m: f64,
    pub beta_v: f64,
    pub eps: f64,
}

impl AdamState {
    /// Fresh state with the conventional constants (0.9, 0.999, 1e-8).
    pub fn new(params: &[Tensor]) -> Self {
        Self {
            first_moment: params.iter().map(|p| Tensor::zeros(p.shape())).collect(),
            second_moment: params.iter().map(|p| Tensor::zeros(p.shape())).collect(),
            step_count: 0,
            beta_m: 0.9,
            beta_v: 0.999,
            eps: 1e-8,
        }
    }

    pub fn step_count(&self) -> u64 {
        self.step_count
    }

    /// One bias-corrected Adam update of `params` in place.
    ///
    /// A non-finite gradient aborts the step before anything is modified.
    pub fn step(&mut self, params: &mut [Tensor], grads: &[Tensor], lr: f64) -> Result<()> {
        if !(lr > 0.0) {
            return Err(Error::contract(format!(
                "learning rate must be positive, got {lr}"
            )));
        }
        if params.len() != grads.len() || params.len() != self.first_moment.len() {
            return Err(Error::shape(
                "adam",
                format!(
                    "{} params, {} grads, {} moments",
                    params.len(),
                    grads.len(),
                    self.first_moment.len()
                ),
            ));
        }
        for (i, (p, g)) in params.iter().zip(grads).enumerate() {
            if p.shape() != g.shape() || p.shape() != self.first_moment[i].shape() {
                return Err(Error::shape(
                    "adam",
                    format!("parameter {i}: {:?} vs {:?}", p.shape(), g.shape()),
                ));
            }
            if let Some(j) = g.first_non_finite() {
                return Err(Error::NonFiniteGradient { param: i, index: j });
            }
        }

        self.step_count += 1;
        let t = self.step_count as i32;
        let bc_m = 1.0 - self.beta_m.powi(t);
        let bc_v = 1.0 - self.beta_v.powi(t);
        for ((p, g), (m, v)) in params.iter_mut().zip(grads).zip(
            self.first_moment
                .iter_mut()
                .zip(self.second_moment.iter_mut()),
        ) {
            for (((w, &gi), mi), vi) in p
                .data_mut()
                .iter_mut()
                .zip(g.data())
                .zip(m.data_mut())
                .zip(v.data_mut())
            {
                *mi = self.beta_m * *mi + (1.0 - self.beta_m) * gi;
                *vi = self.beta_v * *vi + (1.0 - self.beta_v) * gi * gi;
                let m_hat = *mi / bc_m;
                let v_hat = *vi / bc_v;
                *w -= lr * m_hat / (v_hat.sqrt() + self.eps);
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_gradient_leaves_params_unchanged() {
        let mut params = vec![Tensor::row(vec![1.0, -2.0])];
        let mut state = AdamState::new(&params);
        state
            .step(&mut params, &[Tensor::zeros(&[1, 2])], 0.1)
            .unwrap();
        assert_eq!(params[0].data(), &[1.0, -2.0]);
        assert_eq!(state.step_count(), 1);
    }

    #[test]
    fn first_step_moves_by_lr_times_sign() {
        let mut params = vec![Tensor::row(vec![1.0, 1.0])];
        let mut state = AdamState::new(&params);
        state
            .step(&mut params, &[Tensor::row(vec![0.3, -7.0])], 0.01)
            .unwrap();
        assert!((params[0].data()[0] - 0.99).abs() < 1e-9);
        assert!((params[0].data()[1] - 1.01).abs() < 1e-9);
    }

    #[test]
    fn scalar_quadratic_converges() {
        let mut params = vec![Tensor::scalar(0.0)];
        let mut state = AdamState::new(&params);
        for _ in 0..100 {
            let w = params[0].item();
            let g = Tensor::scalar(2.0 * (w - 2.0));
            state.step(&mut params, &[g], 0.1).unwrap();
        }
        assert!(
            (params[0].item() - 2.0).abs() < 0.05,
            "{}",
            params[0].item()
        );
    }

    #[test]
    fn non_finite_gradient_aborts_without_update() {
        let mut params = vec![Tensor::row(vec![1.0, 1.0])];
        let mut state = AdamState::new(&params);
        let err = state
            .step(&mut params, &[Tensor::row(vec![0.1, f64::NAN])], 0.1)
            .unwrap_err();
        assert!(matches!(
            err,
            Error::NonFiniteGradient { param: 0, index: 1 }
        ));
        assert_eq!(params[0].data(), &[1.0, 1.0]);
        assert_eq!(state.step_count(), 0);
    }

    #[test]
    fn rejects_non_positive_learning_rate() {
        let mut params = vec![Tensor::scalar(0.0)];
        let mut state = AdamState::new(&params);
        assert!(state
            .step(&mut params, &[Tensor::scalar(1.0)], 0.0)
            .is_err());
    }
}
