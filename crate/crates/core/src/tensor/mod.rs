//! Dense `f64` tensors with a reverse-mode tape and an Adam updater.
//!
//! The tape records a fixed set of operations (matrix product, element-wise
//! arithmetic, `tanh`/`exp`/`log`, reductions and a few structural column
//! operations) which is all the coupling flows and the objective functionals
//! need. Every operation checks that its result is finite; a NaN or infinity
//! is reported as a domain error instead of propagating silently.

mod adam;
mod tape;

pub use adam::AdamState;
pub use tape::{Gradients, Tape, Var};

use crate::error::{Error, Result};

/// A dense row-major array of `f64`.
///
/// Rank 0 is a scalar, rank 1 a vector and rank 2 a matrix. The tape only
/// operates on rank ≤ 2; a vector is treated as a single row where a matrix
/// is expected.
#[derive(Clone, Debug, PartialEq)]
pub struct Tensor {
    shape: Vec<usize>,
    data: Vec<f64>,
}

impl Tensor {
    pub fn new(shape: Vec<usize>, data: Vec<f64>) -> Result<Self> {
        let numel: usize = shape.iter().product();
        if numel != data.len() {
            return Err(Error::shape(
                "tensor",
                format!("shape {shape:?} needs {numel} entries, got {}", data.len()),
            ));
        }
        Ok(Self { shape, data })
    }

    pub fn scalar(value: f64) -> Self {
        Self {
            shape: vec![],
            data: vec![value],
        }
    }

    pub fn zeros(shape: &[usize]) -> Self {
        let numel = shape.iter().product();
        Self {
            shape: shape.to_vec(),
            data: vec![0.0; numel],
        }
    }

    pub fn full(shape: &[usize], value: f64) -> Self {
        let numel = shape.iter().product();
        Self {
            shape: shape.to_vec(),
            data: vec![value; numel],
        }
    }

    /// A `rows × cols` matrix from row-major data.
    pub fn matrix(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        Self::new(vec![rows, cols], data)
    }

    /// A `n × 1` column.
    pub fn column(data: Vec<f64>) -> Self {
        Self {
            shape: vec![data.len(), 1],
            data,
        }
    }

    /// A `1 × n` row.
    pub fn row(data: Vec<f64>) -> Self {
        Self {
            shape: vec![1, data.len()],
            data,
        }
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let cols = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != cols) {
            return Err(Error::shape("from_rows", "ragged rows"));
        }
        Ok(Self {
            shape: vec![rows.len(), cols],
            data: rows.iter().flatten().copied().collect(),
        })
    }

    pub fn eye(n: usize) -> Self {
        let mut t = Self::zeros(&[n, n]);
        for i in 0..n {
            t.data[i * n + i] = 1.0;
        }
        t
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    pub fn numel(&self) -> usize {
        self.data.len()
    }

    pub fn is_scalar(&self) -> bool {
        self.data.len() == 1
    }

    /// Value of a single-entry tensor.
    pub fn item(&self) -> f64 {
        self.data[0]
    }

    /// Rows when viewed as a matrix (a vector is one row).
    pub fn rows(&self) -> usize {
        match self.shape.len() {
            0 => 1,
            1 => 1,
            _ => self.shape[0],
        }
    }

    /// Columns when viewed as a matrix.
    pub fn cols(&self) -> usize {
        match self.shape.len() {
            0 => 1,
            1 => self.shape[0],
            _ => self.shape[1],
        }
    }

    pub fn at(&self, r: usize, c: usize) -> f64 {
        self.data[r * self.cols() + c]
    }

    pub fn row_slice(&self, r: usize) -> &[f64] {
        let c = self.cols();
        &self.data[r * c..(r + 1) * c]
    }

    pub fn reshape(mut self, shape: Vec<usize>) -> Result<Self> {
        let numel: usize = shape.iter().product();
        if numel != self.data.len() {
            return Err(Error::shape(
                "reshape",
                format!("{:?} -> {shape:?}", self.shape),
            ));
        }
        self.shape = shape;
        Ok(self)
    }

    /// Index of the first non-finite entry, if any.
    pub fn first_non_finite(&self) -> Option<usize> {
        self.data.iter().position(|v| !v.is_finite())
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Self {
        Self {
            shape: self.shape.clone(),
            data: self.data.iter().map(|&v| f(v)).collect(),
        }
    }

    pub fn sum(&self) -> f64 {
        pairwise_sum(&self.data)
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    pub fn sup_dist(&self, other: &Tensor) -> f64 {
        self.data
            .iter()
            .zip(&other.data)
            .fold(0.0, |m, (a, b)| m.max((a - b).abs()))
    }

    /// Columns `idx` of a matrix, in the given order.
    pub fn select_cols(&self, idx: &[usize]) -> Tensor {
        let (r, c) = (self.rows(), self.cols());
        let mut data = Vec::with_capacity(r * idx.len());
        for i in 0..r {
            let row = &self.data[i * c..(i + 1) * c];
            data.extend(idx.iter().map(|&j| row[j]));
        }
        Tensor {
            shape: vec![r, idx.len()],
            data,
        }
    }

    /// Rows `idx` of a matrix, in the given order.
    pub fn select_rows(&self, idx: &[usize]) -> Tensor {
        let c = self.cols();
        let mut data = Vec::with_capacity(c * idx.len());
        for &i in idx {
            data.extend_from_slice(self.row_slice(i));
        }
        Tensor {
            shape: vec![idx.len(), c],
            data,
        }
    }

    pub fn transpose(&self) -> Tensor {
        let (r, c) = (self.rows(), self.cols());
        let mut data = vec![0.0; r * c];
        for i in 0..r {
            for j in 0..c {
                data[j * r + i] = self.data[i * c + j];
            }
        }
        Tensor {
            shape: vec![c, r],
            data,
        }
    }

    pub fn matmul(&self, other: &Tensor) -> Result<Tensor> {
        let (m, k) = (self.rows(), self.cols());
        let (k2, n) = (other.rows(), other.cols());
        if k != k2 {
            return Err(Error::shape(
                "matmul",
                format!("{:?} x {:?}", self.shape, other.shape),
            ));
        }
        let mut out = vec![0.0; m * n];
        gemm(
            m,
            k,
            n,
            &self.data,
            Layout::Normal,
            &other.data,
            Layout::Normal,
            &mut out,
            0.0,
        );
        Ok(Tensor {
            shape: vec![m, n],
            data: out,
        })
    }
}

#[derive(Clone, Copy)]
pub(crate) enum Layout {
    Normal,
    Transposed,
}

/// `c = beta * c + op(a) * op(b)` where `op(a)` is `m × k` and `op(b)` is
/// `k × n`; `a` and `b` are stored row-major in their *untransposed* form.
#[allow(clippy::too_many_arguments)]
pub(crate) fn gemm(
    m: usize,
    k: usize,
    n: usize,
    a: &[f64],
    la: Layout,
    b: &[f64],
    lb: Layout,
    c: &mut [f64],
    beta: f64,
) {
    if m == 0 || n == 0 {
        return;
    }
    if k == 0 {
        c.iter_mut().for_each(|v| *v *= beta);
        return;
    }
    let (rsa, csa) = match la {
        Layout::Normal => (k as isize, 1),
        Layout::Transposed => (1, m as isize),
    };
    let (rsb, csb) = match lb {
        Layout::Normal => (n as isize, 1),
        Layout::Transposed => (1, k as isize),
    };
    // SAFETY: the slices hold at least m*k, k*n and m*n entries and the
    // strides above address exactly those row-major layouts.
    unsafe {
        matrixmultiply::dgemm(
            m,
            k,
            n,
            1.0,
            a.as_ptr(),
            rsa,
            csa,
            b.as_ptr(),
            rsb,
            csb,
            beta,
            c.as_mut_ptr(),
            n as isize,
            1,
        );
    }
}

/// Pairwise (cascade) summation: fixed reduction order, O(log n) error growth.
pub fn pairwise_sum(xs: &[f64]) -> f64 {
    const BLOCK: usize = 64;
    if xs.len() <= BLOCK {
        xs.iter().sum()
    } else {
        let mid = xs.len() / 2;
        pairwise_sum(&xs[..mid]) + pairwise_sum(&xs[mid..])
    }
}

/// Log-sum-exp of a slice; `-inf` for an empty slice or all `-inf` entries.
pub fn log_sum_exp(xs: &[f64]) -> f64 {
    let m = xs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if !m.is_finite() {
        return m;
    }
    m + xs.iter().map(|&v| (v - m).exp()).sum::<f64>().ln()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn identity_matmul_preserves_matrix() {
        let x = Tensor::matrix(3, 4, (0..12).map(f64::from).collect()).unwrap();
        let y = Tensor::eye(3).matmul(&x).unwrap();
        assert_eq!(y.shape(), &[3, 4]);
        assert_eq!(y, x);
    }

    #[test]
    fn rejects_wrong_entry_count() {
        assert!(Tensor::new(vec![2, 2], vec![1.0; 3]).is_err());
    }

    #[test]
    fn pairwise_sum_matches_naive_on_integers() {
        let xs: Vec<f64> = (0..1000).map(f64::from).collect();
        assert_eq!(pairwise_sum(&xs), 499_500.0);
    }

    #[test]
    fn log_sum_exp_is_stable() {
        let v = log_sum_exp(&[1000.0, 1000.0]);
        assert!((v - (1000.0 + 2f64.ln())).abs() < 1e-12);
        assert_eq!(log_sum_exp(&[]), f64::NEG_INFINITY);
    }

    #[test]
    fn transposed_gemm_layouts() {
        let a = Tensor::matrix(2, 3, vec![1., 2., 3., 4., 5., 6.]).unwrap();
        let b = Tensor::matrix(2, 3, vec![1., 0., 2., 0., 1., 1.]).unwrap();
        // a * b^T
        let mut c = vec![0.0; 4];
        gemm(
            2,
            3,
            2,
            a.data(),
            Layout::Normal,
            b.data(),
            Layout::Transposed,
            &mut c,
            0.0,
        );
        let expect = a.matmul(&b.transpose()).unwrap();
        assert_eq!(c, expect.data());
        // a^T * b
        let mut c = vec![0.0; 9];
        gemm(
            3,
            2,
            3,
            a.data(),
            Layout::Transposed,
            b.data(),
            Layout::Normal,
            &mut c,
            0.0,
        );
        let expect = a.transpose().matmul(&b).unwrap();
        assert_eq!(c, expect.data());
    }
}
