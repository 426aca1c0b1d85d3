use rand::Rng;

use crate::error::{Error, Result};
use crate::tensor::{Tape, Tensor, Var};

/// Bound on the log-scale output: `s = bound * tanh(s_raw / bound)`.
pub const DEFAULT_SCALE_BOUND: f64 = 5.0;

/// One dense layer, `x -> x W + b` with `W: in × out`.
#[derive(Clone, Debug, PartialEq)]
pub struct Layer {
    pub weight: Tensor,
    pub bias: Tensor,
}

impl Layer {
    fn uniform<R: Rng + ?Sized>(fan_in: usize, fan_out: usize, rng: &mut R) -> Self {
        let bound = 1.0 / (fan_in as f64).sqrt();
        let mut draw =
            |n: usize| -> Vec<f64> { (0..n).map(|_| rng.random_range(-bound..bound)).collect() };
        Self {
            weight: Tensor::matrix(fan_in, fan_out, draw(fan_in * fan_out)).expect("sized"),
            bias: Tensor::row(draw(fan_out)),
        }
    }

    fn zeros(fan_in: usize, fan_out: usize) -> Self {
        Self {
            weight: Tensor::zeros(&[fan_in, fan_out]),
            bias: Tensor::zeros(&[1, fan_out]),
        }
    }

    pub fn fan_in(&self) -> usize {
        self.weight.rows()
    }

    pub fn fan_out(&self) -> usize {
        self.weight.cols()
    }
}

/// Affine coupling block.
///
/// Coordinates split into a pass-through set `A` and a transformed set `B`
/// by index parity. A conditioner MLP (tanh hidden layers) reads `x_A` and
/// emits `2|B|` outputs: the first `|B|` are the raw log-scales, the rest the
/// shifts. Then
///
/// ```text
/// y_A = x_A,    y_B = x_B * exp(s(x_A)) + t(x_A),    log|det J| = sum s(x_A)
/// ```
///
/// For a one-dimensional flow `A` is empty and the conditioner reads a
/// constant zero input, so `s` and `t` are learned constants.
#[derive(Clone, Debug, PartialEq)]
pub struct CouplingBlock {
    dim: usize,
    parity: usize,
    pass: Vec<usize>,
    transformed: Vec<usize>,
    layers: Vec<Layer>,
    scale_bound: f64,
    trainable: bool,
}

/// Tape handles for one block's parameters, in `(weight, bias)` layer order.
#[derive(Clone, Debug)]
pub struct BlockVars {
    pub layers: Vec<(Var, Var)>,
}

fn partition(dim: usize, parity: usize) -> (Vec<usize>, Vec<usize>) {
    if dim == 1 {
        return (vec![], vec![0]);
    }
    (0..dim).partition(|i| i % 2 == parity % 2)
}

impl CouplingBlock {
    /// A block whose final layer is zero, so `s ≡ t ≡ 0` and the block is the
    /// identity; hidden layers are drawn uniformly in `±1/sqrt(fan_in)`.
    pub fn identity<R: Rng + ?Sized>(
        dim: usize,
        parity: usize,
        width: usize,
        hidden_layers: usize,
        rng: &mut R,
    ) -> Result<Self> {
        if dim == 0 {
            return Err(Error::contract("coupling block needs dimension >= 1"));
        }
        if width == 0 {
            return Err(Error::contract("conditioner width must be >= 1"));
        }
        let (pass, transformed) = partition(dim, parity);
        let input = pass.len().max(1);
        let mut layers = Vec::with_capacity(hidden_layers + 1);
        let mut fan_in = input;
        for _ in 0..hidden_layers {
            layers.push(Layer::uniform(fan_in, width, rng));
            fan_in = width;
        }
        layers.push(Layer::zeros(fan_in, 2 * transformed.len()));
        Ok(Self {
            dim,
            parity: parity % 2,
            pass,
            transformed,
            layers,
            scale_bound: DEFAULT_SCALE_BOUND,
            trainable: true,
        })
    }

    /// A block with constant log-scale and shift on every transformed
    /// coordinate, independent of the input.
    pub fn constant(dim: usize, parity: usize, log_scale: f64, shift: f64) -> Result<Self> {
        if log_scale.abs() >= DEFAULT_SCALE_BOUND {
            return Err(Error::contract(format!(
                "|log_scale| must be below {DEFAULT_SCALE_BOUND}, got {log_scale}"
            )));
        }
        let (pass, transformed) = partition(dim, parity);
        let nb = transformed.len();
        let raw = DEFAULT_SCALE_BOUND * (log_scale / DEFAULT_SCALE_BOUND).atanh();
        let mut out = Layer::zeros(pass.len().max(1), 2 * nb);
        for j in 0..nb {
            out.bias.data_mut()[j] = raw;
            out.bias.data_mut()[nb + j] = shift;
        }
        Ok(Self {
            dim,
            parity: parity % 2,
            pass,
            transformed,
            layers: vec![out],
            scale_bound: DEFAULT_SCALE_BOUND,
            trainable: true,
        })
    }

    /// Rebuilds a block from stored layers (checkpoint loading).
    pub fn from_layers(
        dim: usize,
        parity: usize,
        layers: Vec<Layer>,
        scale_bound: f64,
        trainable: bool,
    ) -> Result<Self> {
        let (pass, transformed) = partition(dim, parity);
        let mut fan_in = pass.len().max(1);
        for (i, l) in layers.iter().enumerate() {
            if l.fan_in() != fan_in || l.bias.numel() != l.fan_out() {
                return Err(Error::shape(
                    "coupling block",
                    format!("layer {i} does not chain"),
                ));
            }
            fan_in = l.fan_out();
        }
        if layers.is_empty() || fan_in != 2 * transformed.len() {
            return Err(Error::shape(
                "coupling block",
                "conditioner output must be 2|B|",
            ));
        }
        if !(scale_bound > 0.0) {
            return Err(Error::contract("scale bound must be positive"));
        }
        Ok(Self {
            dim,
            parity: parity % 2,
            pass,
            transformed,
            layers,
            scale_bound,
            trainable,
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn parity(&self) -> usize {
        self.parity
    }

    pub fn pass_through(&self) -> &[usize] {
        &self.pass
    }

    pub fn transformed(&self) -> &[usize] {
        &self.transformed
    }

    pub fn layers(&self) -> &[Layer] {
        &self.layers
    }

    pub fn scale_bound(&self) -> f64 {
        self.scale_bound
    }

    pub fn is_trainable(&self) -> bool {
        self.trainable
    }

    pub fn set_trainable(&mut self, trainable: bool) {
        self.trainable = trainable;
    }

    pub fn param_count(&self) -> usize {
        self.layers
            .iter()
            .map(|l| l.weight.numel() + l.bias.numel())
            .sum()
    }

    /// Parameter tensors in `(weight, bias)` layer order.
    pub fn params(&self) -> impl Iterator<Item = &Tensor> {
        self.layers.iter().flat_map(|l| [&l.weight, &l.bias])
    }

    pub fn params_mut(&mut self) -> impl Iterator<Item = &mut Tensor> {
        self.layers
            .iter_mut()
            .flat_map(|l| [&mut l.weight, &mut l.bias])
    }

    /// Registers the parameters on `tape`, as trainable leaves when `train`
    /// is set, as constants otherwise.
    pub fn bind(&self, tape: &Tape, train: bool) -> BlockVars {
        let leaf = |t: &Tensor| {
            if train {
                tape.param(t.clone())
            } else {
                tape.constant(t.clone())
            }
        };
        BlockVars {
            layers: self
                .layers
                .iter()
                .map(|l| (leaf(&l.weight), leaf(&l.bias)))
                .collect(),
        }
    }

    fn conditioner_input(&self, tape: &Tape, x: Var) -> Result<Var> {
        if self.pass.is_empty() {
            let m = tape.shape(x)[0];
            Ok(tape.constant(Tensor::zeros(&[m, 1])))
        } else {
            tape.select_cols(x, &self.pass)
        }
    }

    /// Bounded log-scale and shift, each `M × |B|`.
    fn scale_shift(&self, tape: &Tape, vars: &BlockVars, xa: Var) -> Result<(Var, Var)> {
        let mut h = xa;
        let last = vars.layers.len() - 1;
        for (i, &(w, b)) in vars.layers.iter().enumerate() {
            let z = tape.matmul(h, w)?;
            let z = tape.add_row(z, b)?;
            h = if i < last { tape.tanh(z)? } else { z };
        }
        let nb = self.transformed.len();
        let s_idx: Vec<usize> = (0..nb).collect();
        let t_idx: Vec<usize> = (nb..2 * nb).collect();
        let s_raw = tape.select_cols(h, &s_idx)?;
        let t = tape.select_cols(h, &t_idx)?;
        let s = tape.scale(s_raw, 1.0 / self.scale_bound)?;
        let s = tape.tanh(s)?;
        let s = tape.scale(s, self.scale_bound)?;
        Ok((s, t))
    }

    /// `(y, log|det J|)` with the log-determinant as an `M × 1` column.
    pub fn forward_on(&self, tape: &Tape, vars: &BlockVars, x: Var) -> Result<(Var, Var)> {
        let xa = self.conditioner_input(tape, x)?;
        let (s, t) = self.scale_shift(tape, vars, xa)?;
        let xb = tape.select_cols(x, &self.transformed)?;
        let es = tape.exp(s)?;
        let yb = tape.mul(xb, es)?;
        let yb = tape.add(yb, t)?;
        let y = if self.pass.is_empty() {
            yb
        } else {
            tape.merge_cols(xa, &self.pass, yb, &self.transformed)?
        };
        Ok((y, tape.sum_cols(s)?))
    }

    /// `(x, log|det J|(x))` for `y = block(x)`; the log-determinant is that
    /// of the forward map at the recovered point.
    pub fn inverse_on(&self, tape: &Tape, vars: &BlockVars, y: Var) -> Result<(Var, Var)> {
        let ya = self.conditioner_input(tape, y)?;
        let (s, t) = self.scale_shift(tape, vars, ya)?;
        let yb = tape.select_cols(y, &self.transformed)?;
        let diff = tape.sub(yb, t)?;
        let neg = tape.neg(s)?;
        let es = tape.exp(neg)?;
        let xb = tape.mul(diff, es)?;
        let x = if self.pass.is_empty() {
            xb
        } else {
            tape.merge_cols(ya, &self.pass, xb, &self.transformed)?
        };
        Ok((x, tape.sum_cols(s)?))
    }

    /// Plain forward evaluation.
    pub fn forward(&self, x: &Tensor) -> Result<(Tensor, Vec<f64>)> {
        self.check_input(x)?;
        let tape = Tape::new();
        let vars = self.bind(&tape, false);
        let xv = tape.constant(x.clone());
        let (y, ld) = self.forward_on(&tape, &vars, xv)?;
        Ok((tape.value(y), tape.value(ld).into_data()))
    }

    /// Plain inverse evaluation.
    pub fn inverse(&self, y: &Tensor) -> Result<Tensor> {
        self.check_input(y)?;
        let tape = Tape::new();
        let vars = self.bind(&tape, false);
        let yv = tape.constant(y.clone());
        let (x, _) = self.inverse_on(&tape, &vars, yv)?;
        Ok(tape.value(x))
    }

    fn check_input(&self, x: &Tensor) -> Result<()> {
        if x.cols() != self.dim || x.shape().len() != 2 {
            return Err(Error::shape(
                "coupling block",
                format!("expected M × {}, got {:?}", self.dim, x.shape()),
            ));
        }
        if let Some(i) = x.first_non_finite() {
            return Err(Error::domain("coupling block", i, "non-finite input"));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn identity_block_is_identity() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let b = CouplingBlock::identity(3, 0, 8, 2, &mut rng).unwrap();
        let x = Tensor::matrix(2, 3, vec![0.3, -1.0, 2.0, 4.0, 0.0, -0.5]).unwrap();
        let (y, ld) = b.forward(&x).unwrap();
        assert_eq!(y, x);
        assert_eq!(ld, vec![0.0, 0.0]);
        assert_eq!(b.inverse(&x).unwrap(), x);
    }

    #[test]
    fn constant_scale_doubles_transformed_coordinate() {
        let b = CouplingBlock::constant(2, 0, 2f64.ln(), 0.0).unwrap();
        assert_eq!(b.pass_through(), &[0]);
        let x = Tensor::matrix(1, 2, vec![1.0, 1.0]).unwrap();
        let (y, ld) = b.forward(&x).unwrap();
        assert!((y.data()[0] - 1.0).abs() < 1e-12);
        assert!((y.data()[1] - 2.0).abs() < 1e-12);
        assert!((ld[0] - 2f64.ln()).abs() < 1e-12);
        let back = b.inverse(&y).unwrap();
        assert!(back.sup_dist(&x) < 1e-12);
    }

    #[test]
    fn parity_alternates_partition() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let b0 = CouplingBlock::identity(4, 0, 4, 1, &mut rng).unwrap();
        let b1 = CouplingBlock::identity(4, 1, 4, 1, &mut rng).unwrap();
        assert_eq!(b0.pass_through(), &[0, 2]);
        assert_eq!(b0.transformed(), &[1, 3]);
        assert_eq!(b1.pass_through(), &[1, 3]);
        assert_eq!(b1.transformed(), &[0, 2]);
    }

    #[test]
    fn one_dimensional_block_is_constant_affine() {
        let b = CouplingBlock::constant(1, 0, 0.5, -1.0).unwrap();
        let x = Tensor::matrix(3, 1, vec![0.0, 1.0, -2.0]).unwrap();
        let (y, ld) = b.forward(&x).unwrap();
        for i in 0..3 {
            let expect = x.data()[i] * 0.5f64.exp() - 1.0;
            assert!((y.data()[i] - expect).abs() < 1e-12);
            assert!((ld[i] - 0.5).abs() < 1e-12);
        }
    }

    #[test]
    fn rejects_wrong_dimension_and_non_finite_input() {
        let b = CouplingBlock::constant(2, 0, 0.1, 0.0).unwrap();
        assert!(b.forward(&Tensor::zeros(&[2, 3])).is_err());
        let bad = Tensor::matrix(1, 2, vec![f64::NAN, 0.0]).unwrap();
        assert!(matches!(b.forward(&bad), Err(Error::Domain { .. })));
    }
}
