//! Parameter containers and the small networks built from them.

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{AutodiffError, Tape, Tensor, Var};

/// A tree of parameters of type `P` that can be rebuilt with another leaf type.
///
/// `map` visits leaves in a fixed order, passing a dotted path name; the same
/// order is used for flattening, optimiser state and checkpoints.
pub trait ParamTree<P> {
    type With<Q>;

    fn map_leaves<Q>(&self, prefix: &str, f: &mut dyn FnMut(&str, &P) -> Q) -> Self::With<Q>;
}

fn join(prefix: &str, name: &str) -> String {
    if prefix.is_empty() {
        name.to_string()
    } else {
        format!("{prefix}.{name}")
    }
}

/// Named leaves in visiting order.
pub fn named_leaves<P: Clone, T: ParamTree<P>>(tree: &T) -> Vec<(String, P)> {
    let mut out = Vec::new();
    tree.map_leaves("", &mut |name, p| out.push((name.to_string(), p.clone())));
    out
}

/// Rebuilds `tree`'s shape with leaves taken from `values` in visiting order.
///
/// # Panics
/// If `values` yields fewer leaves than the tree has.
pub fn replace_leaves<P, Q, T: ParamTree<P>>(tree: &T, values: impl IntoIterator<Item = Q>) -> T::With<Q> {
    let mut it = values.into_iter();
    tree.map_leaves("", &mut |_, _| it.next().expect("not enough leaf values"))
}

/// Puts every tensor on the tape as a tracked leaf.
pub fn bind<'t, T: ParamTree<Tensor>>(tree: &T, tape: &'t Tape) -> T::With<Var<'t>> {
    tree.map_leaves("", &mut |_, t| tape.leaf(t.clone()))
}

/// Puts every tensor on the tape as a constant.
pub fn bind_constant<'t, T: ParamTree<Tensor>>(tree: &T, tape: &'t Tape) -> T::With<Var<'t>> {
    tree.map_leaves("", &mut |_, t| tape.constant(t.clone()))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    Relu,
    Tanh,
    None,
}

impl Activation {
    pub fn apply<'t>(self, x: &Var<'t>) -> Var<'t> {
        match self {
            Activation::Relu => x.relu(),
            Activation::Tanh => x.tanh(),
            Activation::None => x.clone(),
        }
    }
}

/// Affine layer with weight `[d_in, d_out]` and bias `[d_out]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Linear<P = Tensor> {
    pub weight: P,
    pub bias: P,
}

impl<P> ParamTree<P> for Linear<P> {
    type With<Q> = Linear<Q>;

    fn map_leaves<Q>(&self, prefix: &str, f: &mut dyn FnMut(&str, &P) -> Q) -> Linear<Q> {
        Linear { weight: f(&join(prefix, "weight"), &self.weight), bias: f(&join(prefix, "bias"), &self.bias) }
    }
}

impl Linear<Tensor> {
    /// Glorot-uniform weights in `±sqrt(6 / (d_in + d_out))`, zero bias.
    pub fn init<R: Rng>(d_in: usize, d_out: usize, rng: &mut R) -> Self {
        let bound = (6.0 / (d_in + d_out) as f64).sqrt();
        let w = (0..d_in * d_out).map(|_| rng.gen_range(-bound..=bound)).collect();
        Self { weight: Tensor::matrix(d_in, d_out, w).unwrap(), bias: Tensor::zeros(&[d_out]) }
    }

    pub fn zeros(d_in: usize, d_out: usize) -> Self {
        Self { weight: Tensor::zeros(&[d_in, d_out]), bias: Tensor::zeros(&[d_out]) }
    }

    pub fn in_dim(&self) -> usize {
        self.weight.shape()[0]
    }

    pub fn out_dim(&self) -> usize {
        self.weight.shape()[1]
    }

    pub fn scaled(&self, s: f64) -> Self {
        Self { weight: self.weight.map(|x| x * s), bias: self.bias.map(|x| x * s) }
    }
}

impl<'t> Linear<Var<'t>> {
    pub fn forward(&self, x: &Var<'t>) -> Result<Var<'t>, AutodiffError> {
        x.linear(&self.weight, &self.bias)
    }
}

/// Multi-layer perceptron: one activation per layer, applied after the layer.
#[derive(Debug, Clone, PartialEq)]
pub struct Mlp<P = Tensor> {
    pub layers: Vec<Linear<P>>,
    pub activations: Vec<Activation>,
}

impl<P> ParamTree<P> for Mlp<P> {
    type With<Q> = Mlp<Q>;

    fn map_leaves<Q>(&self, prefix: &str, f: &mut dyn FnMut(&str, &P) -> Q) -> Mlp<Q> {
        Mlp {
            layers: self
                .layers
                .iter()
                .enumerate()
                .map(|(i, l)| l.map_leaves(&join(prefix, &i.to_string()), f))
                .collect(),
            activations: self.activations.clone(),
        }
    }
}

impl Mlp<Tensor> {
    /// Layers chaining `dims[0] -> dims[1] -> ...`.
    pub fn init<R: Rng>(dims: &[usize], activations: &[Activation], rng: &mut R) -> Result<Self, AutodiffError> {
        if dims.len() < 2 || activations.len() != dims.len() - 1 {
            return Err(AutodiffError::BadShape(dims.to_vec()));
        }
        let layers = dims.windows(2).map(|w| Linear::init(w[0], w[1], rng)).collect();
        Ok(Self { layers, activations: activations.to_vec() })
    }

    /// `true` when each layer's output width is the next layer's input width.
    pub fn dims_chain(&self) -> bool {
        self.layers.windows(2).all(|w| w[0].out_dim() == w[1].in_dim())
            && self.layers.iter().all(|l| l.bias.shape() == [l.out_dim()])
    }
}

impl<'t> Mlp<Var<'t>> {
    pub fn forward(&self, x: &Var<'t>) -> Result<Var<'t>, AutodiffError> {
        let mut h = x.clone();
        for (layer, act) in self.layers.iter().zip(&self.activations) {
            h = act.apply(&layer.forward(&h)?);
        }
        Ok(h)
    }
}

/// Point-cloud encoder: shared per-point MLP then a column-wise max over
/// points. The result does not depend on point order.
pub fn pointnet_encode<'t>(points: &Var<'t>, encoder: &Mlp<Var<'t>>) -> Result<Var<'t>, AutodiffError> {
    if points.shape().len() != 2 || points.shape()[1] != 3 {
        return Err(AutodiffError::ShapeMismatch { op: "pointnet_encode", lhs: points.shape().to_vec(), rhs: vec![3] });
    }
    encoder.forward(points)?.max_pool_rows()
}

/// PointNet-style encoder `3 -> widths... -> k`, relu between layers and no
/// activation on the embedding layer.
pub fn pointnet_params<R: Rng>(hidden: &[usize], k: usize, rng: &mut R) -> Result<Mlp, AutodiffError> {
    let mut dims = vec![3];
    dims.extend_from_slice(hidden);
    dims.push(k);
    let mut acts = vec![Activation::Relu; dims.len() - 2];
    acts.push(Activation::None);
    Mlp::init(&dims, &acts, rng)
}
