use rand::Rng;

use super::base::BaseDistribution;
use super::coupling::{BlockVars, CouplingBlock};
use crate::error::{Error, Result};
use crate::tensor::{Tape, Tensor, Var};

/// A stack of coupling blocks `T = T_L ∘ ... ∘ T_1` over a Gaussian base.
#[derive(Clone, Debug, PartialEq)]
pub struct FlowModel {
    base: BaseDistribution,
    blocks: Vec<CouplingBlock>,
}

/// Pushforward draws with the base points they came from.
#[derive(Clone, Debug)]
pub struct Particles {
    pub base: Tensor,
    pub theta: Tensor,
    /// `log|det J_T|` at each base point.
    pub logdet: Vec<f64>,
    /// `log rho(theta_j)`, computed pathwise as `log rho_0(base_j) - logdet_j`.
    pub log_density: Vec<f64>,
}

impl Particles {
    pub fn len(&self) -> usize {
        self.theta.rows()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// Tape handles for every block of a flow.
#[derive(Clone, Debug)]
pub struct BoundFlow<'f> {
    flow: &'f FlowModel,
    vars: Vec<BlockVars>,
}

fn in_block(index: usize, err: Error) -> Error {
    match err {
        Error::Domain { op, detail, .. } => Error::Domain {
            op: "flow block",
            index,
            detail: format!("{op}: {detail}"),
        },
        other => other,
    }
}

impl FlowModel {
    pub fn new(base: BaseDistribution, blocks: Vec<CouplingBlock>) -> Result<Self> {
        if let Some((i, b)) = blocks
            .iter()
            .enumerate()
            .find(|(_, b)| b.dim() != base.dim())
        {
            return Err(Error::shape(
                "flow",
                format!(
                    "block {i} has dimension {}, base has {}",
                    b.dim(),
                    base.dim()
                ),
            ));
        }
        Ok(Self { base, blocks })
    }

    /// `count` identity blocks with alternating parity.
    pub fn identity<R: Rng + ?Sized>(
        base: BaseDistribution,
        count: usize,
        width: usize,
        hidden_layers: usize,
        rng: &mut R,
    ) -> Result<Self> {
        let blocks = identity_blocks(base.dim(), count, width, hidden_layers, 0, rng)?;
        Self::new(base, blocks)
    }

    pub fn base(&self) -> &BaseDistribution {
        &self.base
    }

    pub fn dim(&self) -> usize {
        self.base.dim()
    }

    pub fn blocks(&self) -> &[CouplingBlock] {
        &self.blocks
    }

    pub fn blocks_mut(&mut self) -> &mut [CouplingBlock] {
        &mut self.blocks
    }

    pub fn len(&self) -> usize {
        self.blocks.len()
    }

    pub fn is_empty(&self) -> bool {
        self.blocks.is_empty()
    }

    /// Marks every block non-trainable.
    pub fn freeze(&mut self) {
        self.blocks.iter_mut().for_each(|b| b.set_trainable(false));
    }

    pub fn unfreeze(&mut self) {
        self.blocks.iter_mut().for_each(|b| b.set_trainable(true));
    }

    /// `back ∘ self`: applies `self` first, frozen, then the trainable `back` blocks.
    pub fn compose(&self, back: Vec<CouplingBlock>) -> Result<FlowModel> {
        let mut front = self.clone();
        front.freeze();
        for b in back {
            if b.dim() != self.dim() {
                return Err(Error::shape(
                    "compose",
                    format!("block dimension {} vs flow {}", b.dim(), self.dim()),
                ));
            }
            let mut b = b;
            b.set_trainable(true);
            front.blocks.push(b);
        }
        Ok(front)
    }

    /// Copies of the trainable parameter tensors, in block order.
    pub fn trainable_params(&self) -> Vec<Tensor> {
        self.blocks
            .iter()
            .filter(|b| b.is_trainable())
            .flat_map(|b| b.params().cloned())
            .collect()
    }

    pub fn trainable_count(&self) -> usize {
        self.blocks
            .iter()
            .filter(|b| b.is_trainable())
            .map(|b| b.params().count())
            .sum()
    }

    /// Overwrites the trainable parameters from `params` (same order as
    /// [`FlowModel::trainable_params`]).
    pub fn set_trainable_params(&mut self, params: &[Tensor]) -> Result<()> {
        if params.len() != self.trainable_count() {
            return Err(Error::shape(
                "set_trainable_params",
                format!(
                    "{} tensors for {} parameters",
                    params.len(),
                    self.trainable_count()
                ),
            ));
        }
        let mut it = params.iter();
        for b in self.blocks.iter_mut().filter(|b| b.is_trainable()) {
            for p in b.params_mut() {
                let src = it.next().expect("counted");
                if src.shape() != p.shape() {
                    return Err(Error::shape(
                        "set_trainable_params",
                        format!("{:?} vs {:?}", src.shape(), p.shape()),
                    ));
                }
                p.data_mut().copy_from_slice(src.data());
            }
        }
        Ok(())
    }

    /// Registers parameters on `tape`; trainable blocks become gradient leaves
    /// unless `all_constant` is set.
    pub fn bind(&self, tape: &Tape, all_constant: bool) -> BoundFlow<'_> {
        BoundFlow {
            flow: self,
            vars: self
                .blocks
                .iter()
                .map(|b| b.bind(tape, b.is_trainable() && !all_constant))
                .collect(),
        }
    }

    /// `(T(x), log|det J_T(x)|)`.
    pub fn forward(&self, x: &Tensor) -> Result<(Tensor, Vec<f64>)> {
        self.check_points("flow forward", x)?;
        let tape = Tape::new();
        let bound = self.bind(&tape, true);
        let xv = tape.constant(x.clone());
        let (y, ld) = bound.forward(&tape, xv)?;
        Ok((tape.value(y), tape.value(ld).into_data()))
    }

    /// `T^{-1}(y)`.
    pub fn inverse(&self, y: &Tensor) -> Result<Tensor> {
        self.check_points("flow inverse", y)?;
        let tape = Tape::new();
        let bound = self.bind(&tape, true);
        let yv = tape.constant(y.clone());
        let (x, _) = bound.inverse(&tape, yv)?;
        Ok(tape.value(x))
    }

    /// Change-of-variables log-density at each row of `theta`.
    pub fn log_density(&self, theta: &Tensor) -> Result<Vec<f64>> {
        self.check_points("flow log_density", theta)?;
        let tape = Tape::new();
        let bound = self.bind(&tape, true);
        let tv = tape.constant(theta.clone());
        let lp = bound.log_density(&tape, tv)?;
        Ok(tape.value(lp).into_data())
    }

    /// `count` reparametrised draws with their base points retained.
    pub fn sample<R: Rng + ?Sized>(&self, count: usize, rng: &mut R) -> Result<Particles> {
        if count == 0 {
            return Err(Error::contract("sample needs at least one particle"));
        }
        let base = self.base.sample(count, rng);
        self.push_forward(base)
    }

    /// Pushes given base points through the flow.
    pub fn push_forward(&self, base: Tensor) -> Result<Particles> {
        let (theta, logdet) = self.forward(&base)?;
        let log_density = self
            .base
            .log_density(&base)
            .iter()
            .zip(&logdet)
            .map(|(lp, ld)| lp - ld)
            .collect();
        Ok(Particles {
            base,
            theta,
            logdet,
            log_density,
        })
    }

    fn check_points(&self, op: &'static str, x: &Tensor) -> Result<()> {
        if x.shape().len() != 2 || x.cols() != self.dim() {
            return Err(Error::shape(
                op,
                format!("expected M × {}, got {:?}", self.dim(), x.shape()),
            ));
        }
        if let Some(i) = x.first_non_finite() {
            return Err(Error::domain(op, i / self.dim(), "non-finite input point"));
        }
        Ok(())
    }
}

impl BoundFlow<'_> {
    pub fn flow(&self) -> &FlowModel {
        self.flow
    }

    /// Gradient leaves, in [`FlowModel::trainable_params`] order.
    pub fn trainable_vars(&self, tape: &Tape) -> Vec<Var> {
        self.vars
            .iter()
            .flat_map(|bv| bv.layers.iter().flat_map(|&(w, b)| [w, b]))
            .filter(|&v| tape.requires_grad(v))
            .collect()
    }

    /// `(T(x), log|det J_T(x)|)` as `M × d` and `M × 1`.
    pub fn forward(&self, tape: &Tape, x: Var) -> Result<(Var, Var)> {
        let mut h = x;
        let mut total: Option<Var> = None;
        for (i, (block, vars)) in self.flow.blocks.iter().zip(&self.vars).enumerate() {
            let (y, ld) = block
                .forward_on(tape, vars, h)
                .map_err(|e| in_block(i, e))?;
            total = Some(match total {
                None => ld,
                Some(t) => tape.add(t, ld)?,
            });
            h = y;
        }
        let total = match total {
            Some(t) => t,
            None => tape.constant(Tensor::zeros(&[tape.shape(x)[0], 1])),
        };
        Ok((h, total))
    }

    /// `(T^{-1}(y), log|det J_T(T^{-1}(y))|)`.
    pub fn inverse(&self, tape: &Tape, y: Var) -> Result<(Var, Var)> {
        let mut h = y;
        let mut total: Option<Var> = None;
        for (i, (block, vars)) in self.flow.blocks.iter().zip(&self.vars).enumerate().rev() {
            let (x, ld) = block
                .inverse_on(tape, vars, h)
                .map_err(|e| in_block(i, e))?;
            total = Some(match total {
                None => ld,
                Some(t) => tape.add(t, ld)?,
            });
            h = x;
        }
        let total = match total {
            Some(t) => t,
            None => tape.constant(Tensor::zeros(&[tape.shape(y)[0], 1])),
        };
        Ok((h, total))
    }

    /// `log rho_0(T^{-1}(theta)) - log|det J_T(T^{-1}(theta))|` as `M × 1`.
    pub fn log_density(&self, tape: &Tape, theta: Var) -> Result<Var> {
        let (x, ld) = self.inverse(tape, theta)?;
        let lp0 = self.flow.base.log_density_on(tape, x)?;
        tape.sub(lp0, ld)
    }
}

/// `count` identity blocks; parities alternate starting from `first_parity`.
pub fn identity_blocks<R: Rng + ?Sized>(
    dim: usize,
    count: usize,
    width: usize,
    hidden_layers: usize,
    first_parity: usize,
    rng: &mut R,
) -> Result<Vec<CouplingBlock>> {
    (0..count)
        .map(|i| CouplingBlock::identity(dim, first_parity + i, width, hidden_layers, rng))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn random_flow(dim: usize, blocks: usize, seed: u64) -> FlowModel {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut flow = FlowModel::identity(
            BaseDistribution::centered(dim, 1.0).unwrap(),
            blocks,
            8,
            2,
            &mut rng,
        )
        .unwrap();
        for b in flow.blocks_mut() {
            for p in b.params_mut() {
                for v in p.data_mut() {
                    *v = rng.random_range(-0.5..0.5);
                }
            }
        }
        flow
    }

    #[test]
    fn identity_flow_density_at_origin() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let flow = FlowModel::identity(
            BaseDistribution::centered(2, 1.0).unwrap(),
            3,
            4,
            1,
            &mut rng,
        )
        .unwrap();
        let lp = flow.log_density(&Tensor::zeros(&[1, 2])).unwrap();
        assert!((lp[0] + 1.837_877_066_409_345_5).abs() < 1e-12);
    }

    #[test]
    fn scaling_flow_matches_wider_gaussian() {
        let block = CouplingBlock::constant(1, 0, 2f64.ln(), 0.0).unwrap();
        let flow =
            FlowModel::new(BaseDistribution::centered(1, 1.0).unwrap(), vec![block]).unwrap();
        let wide = BaseDistribution::centered(1, 4.0).unwrap();
        let pts = Tensor::matrix(3, 1, vec![-1.3, 0.0, 2.7]).unwrap();
        let lp = flow.log_density(&pts).unwrap();
        let expect = wide.log_density(&pts);
        for (a, b) in lp.iter().zip(&expect) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn ten_block_round_trip() {
        let flow = random_flow(3, 10, 5);
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let x = flow.base().sample(1000, &mut rng);
        let (y, _) = flow.forward(&x).unwrap();
        let back = flow.inverse(&y).unwrap();
        assert!(back.sup_dist(&x) < 1e-6, "{}", back.sup_dist(&x));
    }

    #[test]
    fn pathwise_and_inverse_log_density_agree() {
        let flow = random_flow(2, 4, 7);
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let p = flow.sample(50, &mut rng).unwrap();
        let lp = flow.log_density(&p.theta).unwrap();
        for (a, b) in lp.iter().zip(&p.log_density) {
            assert!((a - b).abs() < 1e-9);
        }
    }

    #[test]
    fn shift_block_shifts_samples() {
        let block = CouplingBlock::constant(1, 0, 0.0, 1.5).unwrap();
        let flow =
            FlowModel::new(BaseDistribution::centered(1, 1.0).unwrap(), vec![block]).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let p = flow.sample(20, &mut rng).unwrap();
        for i in 0..20 {
            assert!((p.theta.data()[i] - p.base.data()[i] - 1.5).abs() < 1e-12);
        }
    }

    #[test]
    fn zero_particles_rejected() {
        let flow = random_flow(2, 2, 1);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        assert!(matches!(flow.sample(0, &mut rng), Err(Error::Contract(_))));
    }

    #[test]
    fn compose_freezes_front() {
        let flow = random_flow(2, 2, 3);
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let back = identity_blocks(2, 2, 4, 1, 0, &mut rng).unwrap();
        let composed = flow.compose(back).unwrap();
        assert!(composed.blocks()[..2].iter().all(|b| !b.is_trainable()));
        assert!(composed.blocks()[2..].iter().all(|b| b.is_trainable()));
        let x = Tensor::matrix(2, 2, vec![0.1, 0.2, -0.3, 1.0]).unwrap();
        assert!(
            composed
                .forward(&x)
                .unwrap()
                .0
                .sup_dist(&flow.forward(&x).unwrap().0)
                < 1e-15
        );
    }

    #[test]
    fn overflowing_block_is_named() {
        let blocks = vec![
            CouplingBlock::constant(1, 0, 4.9, 0.0).unwrap(),
            CouplingBlock::constant(1, 1, 4.9, 0.0).unwrap(),
        ];
        let mut blocks = blocks;
        for _ in 0..200 {
            blocks.push(CouplingBlock::constant(1, 0, 4.9, 0.0).unwrap());
        }
        let flow = FlowModel::new(BaseDistribution::centered(1, 1.0).unwrap(), blocks).unwrap();
        let err = flow
            .forward(&Tensor::matrix(1, 1, vec![1.0]).unwrap())
            .unwrap_err();
        match err {
            Error::Domain { op, index, .. } => {
                assert_eq!(op, "flow block");
                assert!(index > 1);
            }
            other => panic!("unexpected {other:?}"),
        }
    }
}
