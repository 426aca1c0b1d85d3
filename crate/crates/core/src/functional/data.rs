use rand::Rng;

use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// Observations `X_1, ..., X_n` as an `n × d` matrix.
#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    x: Tensor,
}

impl Dataset {
    pub fn new(x: Tensor) -> Result<Self> {
        if x.shape().len() != 2 || x.rows() == 0 || x.cols() == 0 {
            return Err(Error::contract(format!(
                "dataset must be a non-empty n × d matrix, got {:?}",
                x.shape()
            )));
        }
        if let Some(i) = x.first_non_finite() {
            return Err(Error::domain(
                "dataset",
                i / x.cols(),
                "non-finite observation",
            ));
        }
        Ok(Self { x })
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        Self::new(Tensor::from_rows(rows)?)
    }

    pub fn len(&self) -> usize {
        self.x.rows()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn dim(&self) -> usize {
        self.x.cols()
    }

    pub fn matrix(&self) -> &Tensor {
        &self.x
    }

    /// Largest absolute coordinate, `||X||_inf`.
    pub fn sup_norm(&self) -> f64 {
        self.x.max_abs()
    }

    /// A uniformly drawn subset of `m` observations, without replacement.
    pub fn minibatch<R: Rng + ?Sized>(&self, m: usize, rng: &mut R) -> Result<Dataset> {
        if m == 0 || m > self.len() {
            return Err(Error::contract(format!(
                "mini-batch size {m} outside 1..={}",
                self.len()
            )));
        }
        if m == self.len() {
            return Ok(self.clone());
        }
        let mut idx = rand::seq::index::sample(rng, self.len(), m).into_vec();
        idx.sort_unstable();
        Ok(Dataset {
            x: self.x.select_rows(&idx),
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn minibatch_draws_distinct_rows() {
        let rows: Vec<Vec<f64>> = (0..20).map(|i| vec![i as f64]).collect();
        let d = Dataset::from_rows(&rows).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let b = d.minibatch(7, &mut rng).unwrap();
        let mut v = b.matrix().data().to_vec();
        v.dedup();
        assert_eq!(v.len(), 7);
        assert!(d.minibatch(21, &mut rng).is_err());
        assert_eq!(d.minibatch(20, &mut rng).unwrap(), d);
    }

    #[test]
    fn rejects_empty_and_non_finite() {
        assert!(Dataset::new(Tensor::zeros(&[0, 2])).is_err());
        assert!(Dataset::from_rows(&[vec![1.0], vec![f64::INFINITY]]).is_err());
    }
}
