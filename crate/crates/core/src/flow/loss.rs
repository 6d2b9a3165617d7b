//! Chamfer losses recorded on the tape.

use std::rc::Rc;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::{FlowError, LossWeights};
use crate::autodiff::{weighted_sum, AutodiffError, Tape, Tensor, Var};
use crate::mesh::{draw_face_samples, sample_surface, Mesh};
use crate::metrics::nearest_neighbors;
use crate::scalar;

/// Bidirectional Chamfer distance between `[N, 3]` and `[M, 3]` point sets.
/// Nearest-neighbour assignments are fixed from the current values; the
/// gradient flows through the paired positions.
pub fn chamfer_on_tape<'t>(p: &Var<'t>, q: &Var<'t>) -> Result<Var<'t>, AutodiffError> {
    let (pp, qp) = (p.value().to_points(), q.value().to_points());
    if pp.is_empty() || qp.is_empty() {
        return Err(AutodiffError::BadShape(vec![0, 3]));
    }
    if !p.value().is_finite() || !q.value().is_finite() {
        return Err(AutodiffError::NonFinite("chamfer_on_tape"));
    }
    let direction = |a: &Var<'t>, b: &Var<'t>, ap: &[[f64; 3]], bp: &[[f64; 3]]| -> Result<Var<'t>, AutodiffError> {
        let index: Vec<usize> = nearest_neighbors(ap, bp).into_iter().map(|(j, _)| j).collect();
        let paired = b.gather_rows(Rc::new(index))?;
        Ok(a.sub(&paired)?.square().sum().scale(1.0 / ap.len() as f64))
    };
    direction(p, q, &pp, &qp)?.add(&direction(q, p, &qp, &pp)?)
}

/// Face choices and barycentric weights for `n` area-weighted draws on the
/// surface given by `vertices` and `faces`, as sparse row combinations.
pub fn frozen_sample_terms(
    vertices: &Tensor,
    faces: &[[usize; 3]],
    n: usize,
    seed: u64,
) -> Result<Rc<Vec<Vec<(usize, f64)>>>, FlowError> {
    if !vertices.is_finite() {
        return Err(AutodiffError::NonFinite("differentiable_sample").into());
    }
    let pts = vertices.to_points();
    let areas: Vec<f64> = faces
        .iter()
        .map(|&[a, b, c]| 0.5 * scalar::norm(scalar::cross(scalar::sub(pts[b], pts[a]), scalar::sub(pts[c], pts[a]))))
        .collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let draws = draw_face_samples(&areas, n, &mut rng)?;
    Ok(Rc::new(
        draws
            .into_iter()
            .map(|s| {
                let f = faces[s.face];
                vec![(f[0], s.barycentric[0]), (f[1], s.barycentric[1]), (f[2], s.barycentric[2])]
            })
            .collect(),
    ))
}

/// Samples `n` surface points as barycentric combinations of `vertices`.
/// The draws themselves are constants; the points are differentiable in the
/// vertex positions.
pub fn differentiable_sample<'t>(
    vertices: &Var<'t>,
    faces: &[[usize; 3]],
    n: usize,
    seed: u64,
) -> Result<Var<'t>, FlowError> {
    let terms = frozen_sample_terms(vertices.value(), faces, n, seed)?;
    Ok(vertices.combine_rows(terms)?)
}

/// Values of the weighted loss and its three terms.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossParts {
    pub total: f64,
    pub vertex: f64,
    pub surface1: f64,
    pub surface2: f64,
}

/// `w0 · CD(V(M0), T) + w1 · CD(S(M1), T) + w2 · CD(S(M2), T)` where `T` is
/// the sampled target cloud and `S` draws `sample_n` points differentiably.
pub fn nmf_loss_on_tape<'t>(
    predictions: &[Var<'t>],
    faces: &[[usize; 3]],
    target_points: &Var<'t>,
    weights: &LossWeights,
    sample_n: usize,
    seed: u64,
) -> Result<(Var<'t>, LossParts), FlowError> {
    weights.validate()?;
    let [m0, m1, m2] = predictions else {
        return Err(FlowError::Config(format!("expected 3 predictions, got {}", predictions.len())));
    };
    let lv = chamfer_on_tape(m0, target_points)?;
    let lp1 = chamfer_on_tape(&differentiable_sample(m1, faces, sample_n, seed)?, target_points)?;
    let lp2 = chamfer_on_tape(&differentiable_sample(m2, faces, sample_n, seed)?, target_points)?;
    let total = weighted_sum(&[(weights.w0, &lv), (weights.w1, &lp1), (weights.w2, &lp2)])?;
    let parts = LossParts {
        total: total.value().item(),
        vertex: lv.value().item(),
        surface1: lp1.value().item(),
        surface2: lp2.value().item(),
    };
    Ok((total, parts))
}

/// Loss of three predicted meshes against `target`, sampled with `seed`.
pub fn nmf_loss(
    predictions: [&Mesh<f64>; 3],
    target: &Mesh<f64>,
    weights: &LossWeights,
    sample_n: usize,
    seed: u64,
) -> Result<LossParts, FlowError> {
    let tape = Tape::no_grad();
    let target = sample_surface(target, sample_n, seed)?;
    let target = tape.constant(Tensor::from_points(target.points())?);
    let preds = predictions
        .iter()
        .map(|m| Ok(tape.constant(Tensor::from_points(m.vertices())?)))
        .collect::<Result<Vec<_>, AutodiffError>>()?;
    let faces = predictions[1].faces();
    Ok(nmf_loss_on_tape(&preds, faces, &target, weights, sample_n, seed)?.1)
}
