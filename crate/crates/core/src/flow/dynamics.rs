//! The conditional velocity field `f(x; z)`.

use rand::Rng;

use super::field::{integrate, VectorField};
use super::{FlowConfig, FlowError};
use crate::autodiff::{named_leaves, replace_leaves, AutodiffError, Linear, ParamTree, Tensor, Var};

/// `h <- tanh(h + second(tanh(first(h))))`.
#[derive(Debug, Clone, PartialEq)]
pub struct ResBlock<P = Tensor> {
    pub first: Linear<P>,
    pub second: Linear<P>,
}

impl<P> ParamTree<P> for ResBlock<P> {
    type With<Q> = ResBlock<Q>;

    fn map_leaves<Q>(&self, prefix: &str, f: &mut dyn FnMut(&str, &P) -> Q) -> ResBlock<Q> {
        ResBlock {
            first: self.first.map_leaves(&format!("{prefix}.first"), f),
            second: self.second.map_leaves(&format!("{prefix}.second"), f),
        }
    }
}

impl<'t> ResBlock<Var<'t>> {
    pub fn forward(&self, h: &Var<'t>) -> Result<Var<'t>, AutodiffError> {
        let inner = self.second.forward(&self.first.forward(h)?.tanh())?;
        Ok(h.add(&inner)?.tanh())
    }
}

/// Point lift `n -> w`, shape feature `k -> w`, two residual blocks of width
/// `w`, and an output layer `w -> n`.
#[derive(Debug, Clone, PartialEq)]
pub struct DynamicsParams<P = Tensor> {
    pub lift: Linear<P>,
    pub shape: Linear<P>,
    pub blocks: Vec<ResBlock<P>>,
    pub out: Linear<P>,
}

impl<P> ParamTree<P> for DynamicsParams<P> {
    type With<Q> = DynamicsParams<Q>;

    fn map_leaves<Q>(&self, prefix: &str, f: &mut dyn FnMut(&str, &P) -> Q) -> DynamicsParams<Q> {
        let name = |s: &str| if prefix.is_empty() { s.to_string() } else { format!("{prefix}.{s}") };
        DynamicsParams {
            lift: self.lift.map_leaves(&name("lift"), f),
            shape: self.shape.map_leaves(&name("shape"), f),
            blocks: self.blocks.iter().enumerate().map(|(i, b)| b.map_leaves(&name(&format!("res{i}")), f)).collect(),
            out: self.out.map_leaves(&name("out"), f),
        }
    }
}

impl DynamicsParams<Tensor> {
    /// Glorot-initialised layers; the output layer is multiplied by
    /// `out_scale` so that freshly initialised flows stay close to identity.
    pub fn init<R: Rng>(n: usize, k: usize, width: usize, out_scale: f64, rng: &mut R) -> Self {
        let lift = Linear::init(n, width, rng);
        let shape = Linear::init(k, width, rng);
        let blocks = (0..2)
            .map(|_| ResBlock { first: Linear::init(width, width, rng), second: Linear::init(width, width, rng) })
            .collect();
        let out = Linear::init(width, n, rng).scaled(out_scale);
        Self { lift, shape, blocks, out }
    }

    pub fn zeros(n: usize, k: usize, width: usize) -> Self {
        Self {
            lift: Linear::zeros(n, width),
            shape: Linear::zeros(k, width),
            blocks: (0..2)
                .map(|_| ResBlock { first: Linear::zeros(width, width), second: Linear::zeros(width, width) })
                .collect(),
            out: Linear::zeros(width, n),
        }
    }

    /// Same structure with every weight multiplied by `s`.
    pub fn scaled(&self, s: f64) -> Self {
        self.map_leaves("", &mut |_, t| t.map(|x| x * s))
    }

    pub fn point_dim(&self) -> usize {
        self.lift.in_dim()
    }

    pub fn embedding_dim(&self) -> usize {
        self.shape.in_dim()
    }
}

/// Velocity at each point of `x: [N, n]` given the shape embedding `z: [k]`.
pub fn dynamics_eval<'t>(x: &Var<'t>, z: &Var<'t>, p: &DynamicsParams<Var<'t>>) -> Result<Var<'t>, AutodiffError> {
    let k = z.shape().iter().product::<usize>();
    let shape_feature = p.shape.forward(&z.reshape(vec![1, k])?)?;
    let width = shape_feature.shape()[1];
    let mut h = p.lift.forward(x)?.mul_row(&shape_feature.reshape(vec![width])?)?;
    for block in &p.blocks {
        h = block.forward(&h)?;
    }
    p.out.forward(&h)
}

/// [`dynamics_eval`] as a [`VectorField`] whose parameters are
/// `[z, dynamics leaves...]` in visiting order.
#[derive(Debug, Clone)]
pub struct ConditionedDynamics {
    structure: DynamicsParams<()>,
}

impl ConditionedDynamics {
    pub fn new<P>(params: &DynamicsParams<P>) -> Self {
        Self { structure: params.map_leaves("", &mut |_, _| ()) }
    }

    /// Parameter list for `z` and `p` in the order the field expects.
    pub fn pack<'t>(z: &Var<'t>, p: &DynamicsParams<Var<'t>>) -> Vec<Var<'t>> {
        let mut out = vec![z.clone()];
        out.extend(named_leaves(p).into_iter().map(|(_, v)| v));
        out
    }

    /// Tensor version of [`Self::pack`].
    pub fn pack_values(z: &Tensor, p: &DynamicsParams<Tensor>) -> Vec<Tensor> {
        let mut out = vec![z.clone()];
        out.extend(named_leaves(p).into_iter().map(|(_, v)| v));
        out
    }
}

impl VectorField for ConditionedDynamics {
    fn eval<'t>(&self, x: &Var<'t>, params: &[Var<'t>]) -> Result<Var<'t>, AutodiffError> {
        let (z, rest) = params.split_first().ok_or(AutodiffError::BadShape(vec![0]))?;
        let p = replace_leaves(&self.structure, rest.iter().cloned());
        dynamics_eval(x, z, &p)
    }
}

/// Flows `points` for time `cfg.time` under the dynamics conditioned on `z`,
/// which is held fixed over the whole solve.
pub fn node_block<'t>(
    points: &Var<'t>,
    z: &Var<'t>,
    p: &DynamicsParams<Var<'t>>,
    cfg: &FlowConfig,
) -> Result<Var<'t>, FlowError> {
    integrate(&ConditionedDynamics::new(p), points, &ConditionedDynamics::pack(z, p), cfg)
}
