use std::cell::{Ref, RefCell};

use super::{gemm, Layout, Tensor};
use crate::error::{Error, Result};

/// Handle to a node recorded on a [`Tape`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Var(usize);

impl Var {
    pub fn id(self) -> usize {
        self.0
    }
}

#[derive(Clone, Debug)]
enum Op {
    Leaf,
    MatMul(usize, usize),
    Add(usize, usize),
    Sub(usize, usize),
    Mul(usize, usize),
    AddRow(usize, usize),
    AddCol(usize, usize),
    Scale(usize, f64),
    Offset(usize),
    Tanh(usize),
    Exp(usize),
    Log(usize),
    Square(usize),
    Sum(usize),
    Mean(usize),
    SumCols(usize),
    Transpose(usize),
    SelectCols(usize, Vec<usize>),
    MergeCols {
        a: usize,
        b: usize,
        idx_a: Vec<usize>,
        idx_b: Vec<usize>,
    },
}

struct Node {
    op: Op,
    value: Tensor,
    requires_grad: bool,
}

/// Records a single forward evaluation for one reverse pass.
///
/// Nodes are appended in evaluation order, so node ids are already a
/// topological order and the backward pass is a single reverse sweep.
#[derive(Default)]
pub struct Tape {
    nodes: RefCell<Vec<Node>>,
}

/// Gradients of a scalar output with respect to every node of a tape.
pub struct Gradients {
    grads: Vec<Option<Tensor>>,
    shapes: Vec<Vec<usize>>,
}

impl Gradients {
    /// Gradient with respect to `v`; zeros when `v` does not influence the output.
    pub fn get(&self, v: Var) -> Tensor {
        match &self.grads[v.0] {
            Some(g) => g.clone(),
            None => Tensor::zeros(&self.shapes[v.0]),
        }
    }
}

fn check_finite(op: &'static str, t: Tensor) -> Result<Tensor> {
    match t.first_non_finite() {
        Some(i) => Err(Error::domain(
            op,
            i,
            format!("non-finite result {}", t.data()[i]),
        )),
        None => Ok(t),
    }
}

fn same_shape(op: &'static str, a: &Tensor, b: &Tensor) -> Result<()> {
    if a.rows() != b.rows() || a.cols() != b.cols() || a.numel() != b.numel() {
        return Err(Error::shape(
            op,
            format!("{:?} vs {:?}", a.shape(), b.shape()),
        ));
    }
    Ok(())
}

fn zip_map(a: &Tensor, b: &Tensor, f: impl Fn(f64, f64) -> f64) -> Tensor {
    let data = a
        .data()
        .iter()
        .zip(b.data())
        .map(|(&x, &y)| f(x, y))
        .collect();
    Tensor {
        shape: a.shape().to_vec(),
        data,
    }
}

impl Tape {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.borrow().len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    fn push(&self, op: Op, value: Tensor, requires_grad: bool) -> Var {
        let mut nodes = self.nodes.borrow_mut();
        nodes.push(Node {
            op,
            value,
            requires_grad,
        });
        Var(nodes.len() - 1)
    }

    fn rg(&self, v: Var) -> bool {
        self.nodes.borrow()[v.0].requires_grad
    }

    fn val(&self, v: Var) -> Ref<'_, Tensor> {
        Ref::map(self.nodes.borrow(), |n| &n[v.0].value)
    }

    /// A trainable leaf.
    pub fn param(&self, value: Tensor) -> Var {
        self.push(Op::Leaf, value, true)
    }

    /// A leaf that never receives a gradient.
    pub fn constant(&self, value: Tensor) -> Var {
        self.push(Op::Leaf, value, false)
    }

    pub fn value(&self, v: Var) -> Tensor {
        self.val(v).clone()
    }

    pub fn scalar_value(&self, v: Var) -> f64 {
        self.val(v).item()
    }

    pub fn shape(&self, v: Var) -> Vec<usize> {
        self.val(v).shape().to_vec()
    }

    pub fn requires_grad(&self, v: Var) -> bool {
        self.rg(v)
    }

    pub fn matmul(&self, a: Var, b: Var) -> Result<Var> {
        let out = self.val(a).matmul(&self.val(b))?;
        let out = check_finite("matmul", out)?;
        Ok(self.push(Op::MatMul(a.0, b.0), out, self.rg(a) || self.rg(b)))
    }

    pub fn add(&self, a: Var, b: Var) -> Result<Var> {
        let out = {
            let (x, y) = (self.val(a), self.val(b));
            same_shape("add", &x, &y)?;
            check_finite("add", zip_map(&x, &y, |p, q| p + q))?
        };
        Ok(self.push(Op::Add(a.0, b.0), out, self.rg(a) || self.rg(b)))
    }

    pub fn sub(&self, a: Var, b: Var) -> Result<Var> {
        let out = {
            let (x, y) = (self.val(a), self.val(b));
            same_shape("sub", &x, &y)?;
            check_finite("sub", zip_map(&x, &y, |p, q| p - q))?
        };
        Ok(self.push(Op::Sub(a.0, b.0), out, self.rg(a) || self.rg(b)))
    }

    /// Element-wise product.
    pub fn mul(&self, a: Var, b: Var) -> Result<Var> {
        let out = {
            let (x, y) = (self.val(a), self.val(b));
            same_shape("mul", &x, &y)?;
            check_finite("mul", zip_map(&x, &y, |p, q| p * q))?
        };
        Ok(self.push(Op::Mul(a.0, b.0), out, self.rg(a) || self.rg(b)))
    }

    /// Adds a `1 × n` row to every row of an `m × n` matrix.
    pub fn add_row(&self, a: Var, row: Var) -> Result<Var> {
        let out = {
            let (x, r) = (self.val(a), self.val(row));
            let n = x.cols();
            if r.numel() != n {
                return Err(Error::shape(
                    "add_row",
                    format!("{:?} + {:?}", x.shape(), r.shape()),
                ));
            }
            let mut data = x.data().to_vec();
            for chunk in data.chunks_mut(n.max(1)) {
                for (v, b) in chunk.iter_mut().zip(r.data()) {
                    *v += b;
                }
            }
            check_finite("add_row", Tensor::matrix(x.rows(), n, data)?)?
        };
        Ok(self.push(Op::AddRow(a.0, row.0), out, self.rg(a) || self.rg(row)))
    }

    /// Adds an `m × 1` column to every column of an `m × n` matrix.
    pub fn add_col(&self, a: Var, col: Var) -> Result<Var> {
        let out = {
            let (x, c) = (self.val(a), self.val(col));
            let (m, n) = (x.rows(), x.cols());
            if c.numel() != m {
                return Err(Error::shape(
                    "add_col",
                    format!("{:?} + {:?}", x.shape(), c.shape()),
                ));
            }
            let mut data = x.data().to_vec();
            for (i, chunk) in data.chunks_mut(n.max(1)).enumerate() {
                let b = c.data()[i];
                chunk.iter_mut().for_each(|v| *v += b);
            }
            check_finite("add_col", Tensor::matrix(m, n, data)?)?
        };
        Ok(self.push(Op::AddCol(a.0, col.0), out, self.rg(a) || self.rg(col)))
    }

    pub fn scale(&self, a: Var, c: f64) -> Result<Var> {
        let out = check_finite("scale", self.val(a).map(|v| v * c))?;
        Ok(self.push(Op::Scale(a.0, c), out, self.rg(a)))
    }

    /// Adds a constant to every entry.
    pub fn offset(&self, a: Var, c: f64) -> Result<Var> {
        let out = check_finite("offset", self.val(a).map(|v| v + c))?;
        Ok(self.push(Op::Offset(a.0), out, self.rg(a)))
    }

    pub fn neg(&self, a: Var) -> Result<Var> {
        self.scale(a, -1.0)
    }

    pub fn tanh(&self, a: Var) -> Result<Var> {
        let out = check_finite("tanh", self.val(a).map(f64::tanh))?;
        Ok(self.push(Op::Tanh(a.0), out, self.rg(a)))
    }

    pub fn exp(&self, a: Var) -> Result<Var> {
        let out = check_finite("exp", self.val(a).map(f64::exp))?;
        Ok(self.push(Op::Exp(a.0), out, self.rg(a)))
    }

    pub fn log(&self, a: Var) -> Result<Var> {
        let out = {
            let x = self.val(a);
            if let Some(i) = x.data().iter().position(|&v| v.is_nan() || v <= 0.0) {
                return Err(Error::domain(
                    "log",
                    i,
                    format!("log of non-positive value {}", x.data()[i]),
                ));
            }
            check_finite("log", x.map(f64::ln))?
        };
        Ok(self.push(Op::Log(a.0), out, self.rg(a)))
    }

    pub fn square(&self, a: Var) -> Result<Var> {
        let out = check_finite("square", self.val(a).map(|v| v * v))?;
        Ok(self.push(Op::Square(a.0), out, self.rg(a)))
    }

    /// Sum of all entries, as a scalar.
    pub fn sum(&self, a: Var) -> Result<Var> {
        let out = check_finite("sum", Tensor::scalar(self.val(a).sum()))?;
        Ok(self.push(Op::Sum(a.0), out, self.rg(a)))
    }

    /// Mean of all entries, as a scalar.
    pub fn mean(&self, a: Var) -> Result<Var> {
        let out = {
            let x = self.val(a);
            if x.numel() == 0 {
                return Err(Error::contract("mean of an empty tensor"));
            }
            check_finite("mean", Tensor::scalar(x.sum() / x.numel() as f64))?
        };
        Ok(self.push(Op::Mean(a.0), out, self.rg(a)))
    }

    /// Row sums of an `m × n` matrix, as an `m × 1` column.
    pub fn sum_cols(&self, a: Var) -> Result<Var> {
        let out = {
            let x = self.val(a);
            let n = x.cols();
            let data = if n == 0 {
                vec![0.0; x.rows()]
            } else {
                x.data().chunks(n).map(|r| r.iter().sum()).collect()
            };
            check_finite("sum_cols", Tensor::column(data))?
        };
        Ok(self.push(Op::SumCols(a.0), out, self.rg(a)))
    }

    pub fn transpose(&self, a: Var) -> Result<Var> {
        let out = self.val(a).transpose();
        Ok(self.push(Op::Transpose(a.0), out, self.rg(a)))
    }

    pub fn select_cols(&self, a: Var, idx: &[usize]) -> Result<Var> {
        let out = {
            let x = self.val(a);
            if let Some(&j) = idx.iter().find(|&&j| j >= x.cols()) {
                return Err(Error::shape(
                    "select_cols",
                    format!("column {j} of {:?}", x.shape()),
                ));
            }
            x.select_cols(idx)
        };
        Ok(self.push(Op::SelectCols(a.0, idx.to_vec()), out, self.rg(a)))
    }

    /// Interleaves the columns of `a` and `b` into a single matrix: column
    /// `idx_a[j]` of the output is column `j` of `a`, likewise for `b`.
    pub fn merge_cols(&self, a: Var, idx_a: &[usize], b: Var, idx_b: &[usize]) -> Result<Var> {
        let out = {
            let (x, y) = (self.val(a), self.val(b));
            let m = x.rows();
            let n = idx_a.len() + idx_b.len();
            if y.rows() != m || x.cols() != idx_a.len() || y.cols() != idx_b.len() {
                return Err(Error::shape(
                    "merge_cols",
                    format!("{:?} | {:?}", x.shape(), y.shape()),
                ));
            }
            let mut seen = vec![false; n];
            for &j in idx_a.iter().chain(idx_b) {
                if j >= n || std::mem::replace(&mut seen[j], true) {
                    return Err(Error::shape("merge_cols", "indices are not a partition"));
                }
            }
            let mut data = vec![0.0; m * n];
            for i in 0..m {
                let row = &mut data[i * n..(i + 1) * n];
                for (k, &j) in idx_a.iter().enumerate() {
                    row[j] = x.at(i, k);
                }
                for (k, &j) in idx_b.iter().enumerate() {
                    row[j] = y.at(i, k);
                }
            }
            Tensor::matrix(m, n, data)?
        };
        let op = Op::MergeCols {
            a: a.0,
            b: b.0,
            idx_a: idx_a.to_vec(),
            idx_b: idx_b.to_vec(),
        };
        Ok(self.push(op, out, self.rg(a) || self.rg(b)))
    }

    /// Reverse sweep from a scalar output.
    pub fn backward(&self, output: Var) -> Result<Gradients> {
        let nodes = self.nodes.borrow();
        let out = &nodes[output.0];
        if !out.value.is_scalar() {
            return Err(Error::contract(format!(
                "backward needs a scalar output, got shape {:?}",
                out.value.shape()
            )));
        }
        let mut grads: Vec<Option<Vec<f64>>> = vec![None; output.0 + 1];
        grads[output.0] = Some(vec![1.0]);

        for i in (0..=output.0).rev() {
            let node = &nodes[i];
            if !node.requires_grad {
                continue;
            }
            let Some(g) = grads[i].take() else { continue };
            let wants = |j: usize| nodes[j].requires_grad;
            match &node.op {
                Op::Leaf => {
                    grads[i] = Some(g);
                    continue;
                }
                Op::MatMul(a, b) => {
                    let (va, vb) = (&nodes[*a].value, &nodes[*b].value);
                    let (m, k, n) = (va.rows(), va.cols(), vb.cols());
                    if wants(*a) {
                        let acc = slot(&mut grads, *a, m * k);
                        gemm(
                            m,
                            n,
                            k,
                            &g,
                            Layout::Normal,
                            vb.data(),
                            Layout::Transposed,
                            acc,
                            1.0,
                        );
                    }
                    if wants(*b) {
                        let acc = slot(&mut grads, *b, k * n);
                        gemm(
                            k,
                            m,
                            n,
                            va.data(),
                            Layout::Transposed,
                            &g,
                            Layout::Normal,
                            acc,
                            1.0,
                        );
                    }
                }
                Op::Add(a, b) => {
                    if wants(*a) {
                        axpy(slot(&mut grads, *a, g.len()), &g, 1.0);
                    }
                    if wants(*b) {
                        axpy(slot(&mut grads, *b, g.len()), &g, 1.0);
                    }
                }
                Op::Sub(a, b) => {
                    if wants(*a) {
                        axpy(slot(&mut grads, *a, g.len()), &g, 1.0);
                    }
                    if wants(*b) {
                        axpy(slot(&mut grads, *b, g.len()), &g, -1.0);
                    }
                }
                Op::Mul(a, b) => {
                    if wants(*a) {
                        let vb = nodes[*b].value.data();
                        let acc = slot(&mut grads, *a, g.len());
                        for ((s, gi), bi) in acc.iter_mut().zip(&g).zip(vb) {
                            *s += gi * bi;
                        }
                    }
                    if wants(*b) {
                        let va = nodes[*a].value.data();
                        let acc = slot(&mut grads, *b, g.len());
                        for ((s, gi), ai) in acc.iter_mut().zip(&g).zip(va) {
                            *s += gi * ai;
                        }
                    }
                }
                Op::AddRow(a, r) => {
                    let n = node.value.cols();
                    if wants(*a) {
                        axpy(slot(&mut grads, *a, g.len()), &g, 1.0);
                    }
                    if wants(*r) {
                        let acc = slot(&mut grads, *r, n);
                        for chunk in g.chunks(n.max(1)) {
                            for (s, gi) in acc.iter_mut().zip(chunk) {
                                *s += gi;
                            }
                        }
                    }
                }
                Op::AddCol(a, c) => {
                    let (m, n) = (node.value.rows(), node.value.cols());
                    if wants(*a) {
                        axpy(slot(&mut grads, *a, g.len()), &g, 1.0);
                    }
                    if wants(*c) {
                        let acc = slot(&mut grads, *c, m);
                        for (s, chunk) in acc.iter_mut().zip(g.chunks(n.max(1))) {
                            *s += chunk.iter().sum::<f64>();
                        }
                    }
                }
                Op::Scale(a, c) => axpy(slot(&mut grads, *a, g.len()), &g, *c),
                Op::Offset(a) => axpy(slot(&mut grads, *a, g.len()), &g, 1.0),
                Op::Tanh(a) => {
                    let y = node.value.data();
                    let acc = slot(&mut grads, *a, g.len());
                    for ((s, gi), yi) in acc.iter_mut().zip(&g).zip(y) {
                        *s += gi * (1.0 - yi * yi);
                    }
                }
                Op::Exp(a) => {
                    let y = node.value.data();
                    let acc = slot(&mut grads, *a, g.len());
                    for ((s, gi), yi) in acc.iter_mut().zip(&g).zip(y) {
                        *s += gi * yi;
                    }
                }
                Op::Log(a) => {
                    let x = nodes[*a].value.data();
                    let acc = slot(&mut grads, *a, g.len());
                    for ((s, gi), xi) in acc.iter_mut().zip(&g).zip(x) {
                        *s += gi / xi;
                    }
                }
                Op::Square(a) => {
                    let x = nodes[*a].value.data();
                    let acc = slot(&mut grads, *a, g.len());
                    for ((s, gi), xi) in acc.iter_mut().zip(&g).zip(x) {
                        *s += 2.0 * gi * xi;
                    }
                }
                Op::Sum(a) => {
                    let n = nodes[*a].value.numel();
                    slot(&mut grads, *a, n).iter_mut().for_each(|s| *s += g[0]);
                }
                Op::Mean(a) => {
                    let n = nodes[*a].value.numel();
                    let w = g[0] / n as f64;
                    slot(&mut grads, *a, n).iter_mut().for_each(|s| *s += w);
                }
                Op::SumCols(a) => {
                    let src = &nodes[*a].value;
                    let n = src.cols();
                    let acc = slot(&mut grads, *a, src.numel());
                    for (chunk, gi) in acc.chunks_mut(n.max(1)).zip(&g) {
                        chunk.iter_mut().for_each(|s| *s += gi);
                    }
                }
                Op::Transpose(a) => {
                    let (r, c) = (node.value.rows(), node.value.cols());
                    let acc = slot(&mut grads, *a, r * c);
                    // output is r × c, input is c × r
                    for i in 0..r {
                        for j in 0..c {
                            acc[j * r + i] += g[i * c + j];
                        }
                    }
                }
                Op::SelectCols(a, idx) => {
                    let src = &nodes[*a].value;
                    let n = src.cols();
                    let k = idx.len();
                    let acc = slot(&mut grads, *a, src.numel());
                    for (row, grow) in acc.chunks_mut(n.max(1)).zip(g.chunks(k.max(1))) {
                        for (&j, gi) in idx.iter().zip(grow) {
                            row[j] += gi;
                        }
                    }
                }
                Op::MergeCols { a, b, idx_a, idx_b } => {
                    let n = node.value.cols();
                    for (src, idx) in [(*a, idx_a), (*b, idx_b)] {
                        if !wants(src) {
                            continue;
                        }
                        let k = idx.len();
                        let acc = slot(&mut grads, src, node.value.rows() * k);
                        for (arow, grow) in acc.chunks_mut(k.max(1)).zip(g.chunks(n.max(1))) {
                            for (s, &j) in arow.iter_mut().zip(idx) {
                                *s += grow[j];
                            }
                        }
                    }
                }
            }
        }

        let shapes: Vec<Vec<usize>> = nodes.iter().map(|n| n.value.shape().to_vec()).collect();
        let grads = grads
            .into_iter()
            .enumerate()
            .map(|(i, g)| {
                g.map(|data| Tensor {
                    shape: shapes[i].clone(),
                    data,
                })
            })
            .chain(std::iter::repeat_n(None, nodes.len() - output.0 - 1))
            .collect();
        Ok(Gradients { grads, shapes })
    }
}

fn slot(grads: &mut [Option<Vec<f64>>], j: usize, n: usize) -> &mut [f64] {
    grads[j].get_or_insert_with(|| vec![0.0; n])
}

fn axpy(acc: &mut [f64], g: &[f64], c: f64) {
    for (s, gi) in acc.iter_mut().zip(g) {
        *s += c * gi;
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn square_gradient() {
        let tape = Tape::new();
        let x = tape.param(Tensor::scalar(3.0));
        let y = tape.square(x).unwrap();
        let g = tape.backward(y).unwrap();
        assert_eq!(g.get(x).item(), 6.0);
    }

    #[test]
    fn sum_log_gradient() {
        let tape = Tape::new();
        let x = tape.param(Tensor::row(vec![1.0, 2.0]));
        let l = tape.log(x).unwrap();
        let s = tape.sum(l).unwrap();
        let g = tape.backward(s).unwrap();
        assert_eq!(g.get(x).data(), &[1.0, 0.5]);
    }

    #[test]
    fn tanh_at_zero() {
        let tape = Tape::new();
        let x = tape.param(Tensor::scalar(0.0));
        let y = tape.tanh(x).unwrap();
        assert_eq!(tape.scalar_value(y), 0.0);
        assert_eq!(tape.backward(y).unwrap().get(x).item(), 1.0);
    }

    #[test]
    fn log_of_non_positive_names_index() {
        let tape = Tape::new();
        let x = tape.param(Tensor::row(vec![1.0, 0.5, -2.0]));
        match tape.log(x) {
            Err(Error::Domain {
                op: "log",
                index: 2,
                ..
            }) => {}
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn overflow_is_a_domain_error() {
        let tape = Tape::new();
        let x = tape.param(Tensor::row(vec![0.0, 1e4]));
        assert!(matches!(tape.exp(x), Err(Error::Domain { index: 1, .. })));
    }

    #[test]
    fn non_scalar_backward_is_rejected() {
        let tape = Tape::new();
        let x = tape.param(Tensor::row(vec![1.0, 2.0]));
        let y = tape.square(x).unwrap();
        assert!(matches!(tape.backward(y), Err(Error::Contract(_))));
    }

    #[test]
    fn shape_mismatch_is_rejected() {
        let tape = Tape::new();
        let a = tape.param(Tensor::zeros(&[2, 3]));
        let b = tape.param(Tensor::zeros(&[2, 3]));
        assert!(matches!(tape.matmul(a, b), Err(Error::Shape { .. })));
        let c = tape.param(Tensor::zeros(&[3, 2]));
        assert!(matches!(tape.add(a, c), Err(Error::Shape { .. })));
    }

    #[test]
    fn unreachable_leaf_gets_zero_gradient() {
        let tape = Tape::new();
        let x = tape.param(Tensor::scalar(2.0));
        let unused = tape.param(Tensor::row(vec![1.0, 1.0]));
        let y = tape.square(x).unwrap();
        let g = tape.backward(y).unwrap();
        assert_eq!(g.get(unused).data(), &[0.0, 0.0]);
    }

    #[test]
    fn constants_receive_no_gradient() {
        let tape = Tape::new();
        let x = tape.param(Tensor::scalar(2.0));
        let c = tape.constant(Tensor::scalar(5.0));
        let y = tape.mul(x, c).unwrap();
        let g = tape.backward(y).unwrap();
        assert_eq!(g.get(x).item(), 5.0);
        assert_eq!(g.get(c).item(), 0.0);
    }

    #[test]
    fn merge_then_select_round_trips() {
        let tape = Tape::new();
        let a = tape.param(Tensor::matrix(2, 1, vec![1.0, 3.0]).unwrap());
        let b = tape.param(Tensor::matrix(2, 1, vec![2.0, 4.0]).unwrap());
        let m = tape.merge_cols(a, &[0], b, &[1]).unwrap();
        assert_eq!(tape.value(m).data(), &[1.0, 2.0, 3.0, 4.0]);
        let back = tape.select_cols(m, &[1]).unwrap();
        assert_eq!(tape.value(back).data(), &[2.0, 4.0]);
        let s = tape.sum(back).unwrap();
        let g = tape.backward(s).unwrap();
        assert_eq!(g.get(a).data(), &[0.0, 0.0]);
        assert_eq!(g.get(b).data(), &[1.0, 1.0]);
    }
}
