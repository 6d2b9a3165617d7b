//! Instance normalisation, deformation blocks and the three-block pipeline.

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::dynamics::{node_block, DynamicsParams};
use super::{FlowConfig, FlowError};
use crate::autodiff::{
    bind_constant, pointnet_encode, pointnet_params, Activation, AutodiffError, Linear, Mlp, ParamTree, Tape, Tensor,
    Var,
};
use crate::mesh::{Mesh, PointCloud};

/// Lower bound added to the softplus scale so it stays strictly positive.
pub const SCALE_FLOOR: f64 = 1e-3;

/// Widths of every network in the pipeline.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct NmfArch {
    /// Point dimension.
    pub n: usize,
    /// Embedding size.
    pub k: usize,
    /// Width of the dynamics networks.
    pub width: usize,
    /// Hidden widths of the point-cloud encoder.
    pub encoder_hidden: Vec<usize>,
    /// Hidden width of each scale network.
    pub delta_hidden: usize,
    /// Multiplier on the dynamics output layer at initialisation.
    pub out_scale: f64,
}

impl Default for NmfArch {
    fn default() -> Self {
        Self { n: 3, k: 128, width: 128, encoder_hidden: vec![64, 128], delta_hidden: 256, out_scale: 0.1 }
    }
}

impl NmfArch {
    /// Widths matching the original large configuration.
    pub fn paper_scale() -> Self {
        Self { k: 1000, width: 512, encoder_hidden: vec![64, 128, 128], ..Self::default() }
    }

    pub fn validate(&self) -> Result<(), FlowError> {
        if !(2..=3).contains(&self.n) {
            return Err(FlowError::Config(format!("point dimension must be 2 or 3, got {}", self.n)));
        }
        if self.k == 0 || self.width == 0 || self.delta_hidden == 0 || self.encoder_hidden.contains(&0) {
            return Err(FlowError::Config("network widths must be positive".into()));
        }
        Ok(())
    }
}

/// One deformation block: two NODE blocks and the scale network `Δ`.
#[derive(Debug, Clone, PartialEq)]
pub struct BlockParams<P = Tensor> {
    pub flows: Vec<DynamicsParams<P>>,
    pub delta: Mlp<P>,
}

impl<P> ParamTree<P> for BlockParams<P> {
    type With<Q> = BlockParams<Q>;

    fn map_leaves<Q>(&self, prefix: &str, f: &mut dyn FnMut(&str, &P) -> Q) -> BlockParams<Q> {
        BlockParams {
            flows: self.flows.iter().enumerate().map(|(i, d)| d.map_leaves(&format!("{prefix}.node{i}"), f)).collect(),
            delta: self.delta.map_leaves(&format!("{prefix}.delta"), f),
        }
    }
}

/// Encoder and three deformation blocks.
#[derive(Debug, Clone, PartialEq)]
pub struct NmfParams<P = Tensor> {
    pub encoder: Mlp<P>,
    pub blocks: Vec<BlockParams<P>>,
}

impl<P> ParamTree<P> for NmfParams<P> {
    type With<Q> = NmfParams<Q>;

    fn map_leaves<Q>(&self, prefix: &str, f: &mut dyn FnMut(&str, &P) -> Q) -> NmfParams<Q> {
        let name = |s: &str| if prefix.is_empty() { s.to_string() } else { format!("{prefix}.{s}") };
        NmfParams {
            encoder: self.encoder.map_leaves(&name("encoder"), f),
            blocks: self.blocks.iter().enumerate().map(|(i, b)| b.map_leaves(&name(&format!("block{i}")), f)).collect(),
        }
    }
}

/// Bias making `softplus(b) + SCALE_FLOOR == 1`.
fn unit_scale_bias() -> f64 {
    let target: f64 = 1.0 - SCALE_FLOOR;
    target.exp_m1().ln()
}

fn delta_net(arch: &NmfArch, weights: Option<&mut dyn FnMut(usize, usize) -> Linear>) -> Mlp {
    let (first, mut last) = match weights {
        Some(init) => (init(arch.k, arch.delta_hidden), init(arch.delta_hidden, arch.n)),
        None => (Linear::zeros(arch.k, arch.delta_hidden), Linear::zeros(arch.delta_hidden, arch.n)),
    };
    last.bias = Tensor::filled(&[arch.n], unit_scale_bias());
    Mlp { layers: vec![first, last], activations: vec![Activation::Relu, Activation::None] }
}

impl NmfParams<Tensor> {
    /// Random initialisation. Scale networks start at `Δ ≈ 1` for typical
    /// embeddings.
    pub fn init<R: Rng>(arch: &NmfArch, rng: &mut R) -> Result<Self, FlowError> {
        arch.validate()?;
        let encoder = pointnet_params(&arch.encoder_hidden, arch.k, rng)?;
        let mut blocks = Vec::with_capacity(3);
        for _ in 0..3 {
            let flows =
                (0..2).map(|_| DynamicsParams::init(arch.n, arch.k, arch.width, arch.out_scale, rng)).collect();
            let mut init = |a: usize, b: usize| Linear::init(a, b, rng).scaled(0.1);
            let delta = delta_net(arch, Some(&mut init));
            blocks.push(BlockParams { flows, delta });
        }
        Ok(Self { encoder, blocks })
    }

    /// Zero dynamics and `Δ ≡ 1`: the pipeline only centres the template.
    pub fn identity(arch: &NmfArch) -> Result<Self, FlowError> {
        arch.validate()?;
        let mut dims = vec![3];
        dims.extend_from_slice(&arch.encoder_hidden);
        dims.push(arch.k);
        let encoder = Mlp {
            layers: dims.windows(2).map(|w| Linear::zeros(w[0], w[1])).collect(),
            activations: {
                let mut a = vec![Activation::Relu; dims.len() - 2];
                a.push(Activation::None);
                a
            },
        };
        let blocks = (0..3)
            .map(|_| BlockParams {
                flows: (0..2).map(|_| DynamicsParams::zeros(arch.n, arch.k, arch.width)).collect(),
                delta: delta_net(arch, None),
            })
            .collect();
        Ok(Self { encoder, blocks })
    }

    pub fn leaf_count(&self) -> usize {
        let mut n = 0;
        self.map_leaves("", &mut |_, _| n += 1);
        n
    }

    pub fn parameter_count(&self) -> usize {
        let mut n = 0;
        self.map_leaves("", &mut |_, t| n += t.len());
        n
    }
}

/// `(x - mean(x)) ⊙ (softplus(Δ(z)) + SCALE_FLOOR)`, per axis.
pub fn instance_norm<'t>(points: &Var<'t>, z: &Var<'t>, delta: &Mlp<Var<'t>>) -> Result<Var<'t>, AutodiffError> {
    let k = z.shape().iter().product::<usize>();
    let n = points.value().cols();
    let scale = delta.forward(&z.reshape(vec![1, k])?)?.reshape(vec![n])?.softplus().add_scalar(SCALE_FLOOR);
    let centred = points.sub_row(&points.mean_rows()?)?;
    centred.mul_row(&scale)
}

/// Two NODE blocks followed by instance normalisation.
pub fn deformation_block<'t>(
    points: &Var<'t>,
    z: &Var<'t>,
    block: &BlockParams<Var<'t>>,
    cfg: &FlowConfig,
) -> Result<Var<'t>, FlowError> {
    let mut x = points.clone();
    for flow in &block.flows {
        x = node_block(&x, z, flow, cfg)?;
    }
    Ok(instance_norm(&x, z, &block.delta)?)
}

/// Vertex positions after each of the three deformation blocks, recorded on
/// the tape of `params`.
pub fn nmf_forward_on_tape<'t>(
    template: &Var<'t>,
    target_points: &Var<'t>,
    params: &NmfParams<Var<'t>>,
    cfg: &FlowConfig,
) -> Result<Vec<Var<'t>>, FlowError> {
    let z = pointnet_encode(target_points, &params.encoder)?;
    let mut x = template.clone();
    let mut outputs = Vec::with_capacity(params.blocks.len());
    for block in &params.blocks {
        x = deformation_block(&x, &z, block, cfg)?;
        outputs.push(x.clone());
    }
    Ok(outputs)
}

/// Deforms `template` toward the shape encoded from `target`, returning the
/// mesh after each block. Faces are copied from the template unchanged.
pub fn nmf_forward(
    template: &Mesh<f64>,
    target: &PointCloud<f64>,
    params: &NmfParams,
    cfg: &FlowConfig,
) -> Result<[Mesh<f64>; 3], FlowError> {
    let tape = Tape::no_grad();
    let p = bind_constant(params, &tape);
    let x = tape.constant(Tensor::from_points(template.vertices())?);
    let target = tape.constant(Tensor::from_points(target.points())?);
    let outs = nmf_forward_on_tape(&x, &target, &p, cfg)?;
    let mesh = |v: &Var| template.with_vertices(v.value().to_points());
    Ok([mesh(&outs[0]), mesh(&outs[1]), mesh(&outs[2])])
}
