use rand::seq::index::sample;
use rand::Rng;

use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// Sub-sample cap and repeat count used by [`w1_distance`].
pub const W1_CAP: usize = 512;
pub const W1_REPEATS: usize = 8;

/// Minimum-cost perfect matching on a square cost matrix (row-major `n × n`).
/// Returns `assignment[row] = col`.
///
/// Shortest augmenting paths with row/column potentials, `O(n^3)`.
pub fn min_cost_assignment(n: usize, cost: &[f64]) -> Vec<usize> {
    assert_eq!(cost.len(), n * n, "cost matrix must be n × n");
    // 1-based potentials; column 0 is the virtual source
    let mut u = vec![0.0; n + 1];
    let mut v = vec![0.0; n + 1];
    let mut matched_row = vec![0usize; n + 1];
    let mut way = vec![0usize; n + 1];
    let mut minv = vec![0.0; n + 1];
    let mut used = vec![false; n + 1];
    for i in 1..=n {
        matched_row[0] = i;
        let mut j0 = 0;
        minv.iter_mut().for_each(|m| *m = f64::INFINITY);
        used.iter_mut().for_each(|b| *b = false);
        loop {
            used[j0] = true;
            let i0 = matched_row[j0];
            let row = &cost[(i0 - 1) * n..i0 * n];
            let mut delta = f64::INFINITY;
            let mut j1 = 0;
            for j in 1..=n {
                if !used[j] {
                    let cur = row[j - 1] - u[i0] - v[j];
                    if cur < minv[j] {
                        minv[j] = cur;
                        way[j] = j0;
                    }
                    if minv[j] < delta {
                        delta = minv[j];
                        j1 = j;
                    }
                }
            }
            for j in 0..=n {
                if used[j] {
                    u[matched_row[j]] += delta;
                    v[j] -= delta;
                } else {
                    minv[j] -= delta;
                }
            }
            j0 = j1;
            if matched_row[j0] == 0 {
                break;
            }
        }
        loop {
            let j1 = way[j0];
            matched_row[j0] = matched_row[j1];
            j0 = j1;
            if j0 == 0 {
                break;
            }
        }
    }
    let mut assignment = vec![0; n];
    for j in 1..=n {
        if matched_row[j] > 0 {
            assignment[matched_row[j] - 1] = j - 1;
        }
    }
    assignment
}

/// Exact W1 between two equally sized uniform clouds.
pub fn w1_exact(a: &Tensor, b: &Tensor) -> Result<f64> {
    let n = a.rows();
    if n == 0 || b.rows() == 0 {
        return Err(Error::contract("W1 of an empty cloud"));
    }
    if b.rows() != n || a.cols() != b.cols() {
        return Err(Error::shape(
            "w1",
            format!("{:?} vs {:?}", a.shape(), b.shape()),
        ));
    }
    let mut cost = vec![0.0; n * n];
    for i in 0..n {
        let ai = a.row_slice(i);
        for j in 0..n {
            let bj = b.row_slice(j);
            cost[i * n + j] = ai
                .iter()
                .zip(bj)
                .map(|(x, y)| (x - y) * (x - y))
                .sum::<f64>()
                .sqrt();
        }
    }
    let assignment = min_cost_assignment(n, &cost);
    let total: f64 = assignment
        .iter()
        .enumerate()
        .map(|(i, &j)| cost[i * n + j])
        .sum();
    Ok(total / n as f64)
}

/// W1 estimate between two clouds: exact assignment on sub-samples of size
/// `min(|a|, |b|, cap)`, averaged over `repeats` draws. A cloud that already
/// has that size is used whole.
pub fn w1_subsampled<R: Rng + ?Sized>(
    a: &Tensor,
    b: &Tensor,
    cap: usize,
    repeats: usize,
    rng: &mut R,
) -> Result<f64> {
    if a.rows() == 0 || b.rows() == 0 {
        return Err(Error::contract("W1 of an empty cloud"));
    }
    let n = a.rows().min(b.rows()).min(cap.max(1));
    if n == a.rows() && n == b.rows() {
        return w1_exact(a, b);
    }
    let mut total = 0.0;
    for _ in 0..repeats.max(1) {
        let sa = subsample(a, n, rng);
        let sb = subsample(b, n, rng);
        total += w1_exact(sa.as_ref().unwrap_or(a), sb.as_ref().unwrap_or(b))?;
    }
    Ok(total / repeats.max(1) as f64)
}

/// Rows drawn without replacement, or `None` when the cloud already has `n` rows.
fn subsample<R: Rng + ?Sized>(cloud: &Tensor, n: usize, rng: &mut R) -> Option<Tensor> {
    (cloud.rows() > n).then(|| cloud.select_rows(&sample(rng, cloud.rows(), n).into_vec()))
}

/// [`w1_subsampled`] with the default cap (512) and repeat count (8).
pub fn w1_distance<R: Rng + ?Sized>(a: &Tensor, b: &Tensor, rng: &mut R) -> Result<f64> {
    w1_subsampled(a, b, W1_CAP, W1_REPEATS, rng)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn assignment_finds_known_optimum() {
        let cost = [4.0, 1.0, 3.0, 2.0, 0.0, 5.0, 3.0, 2.0, 2.0];
        let a = min_cost_assignment(3, &cost);
        let total: f64 = a.iter().enumerate().map(|(i, &j)| cost[i * 3 + j]).sum();
        assert_eq!(total, 5.0);
    }

    #[test]
    fn point_masses_one_apart() {
        let a = Tensor::from_rows(&[vec![0.0]]).unwrap();
        let b = Tensor::from_rows(&[vec![1.0]]).unwrap();
        assert_eq!(w1_exact(&a, &b).unwrap(), 1.0);
    }

    #[test]
    fn empty_cloud_rejected() {
        let a = Tensor::zeros(&[0, 2]);
        assert!(w1_exact(&a, &a).is_err());
    }
}
