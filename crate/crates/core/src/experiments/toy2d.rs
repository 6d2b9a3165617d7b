//! Circle-to-star fitting in 2D: a displacement MLP with and without explicit
//! regularisers, against the same MLP integrated as a velocity field.

use std::fmt::Write as _;
use std::rc::Rc;
use std::str::FromStr;
use std::sync::atomic::{AtomicUsize, Ordering};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::polygon::{circle_polygon, intersecting_edge_pairs, star_polygon, Point2, Polygon2D};
use super::ExperimentError;
use crate::autodiff::{
    bind, named_leaves, replace_leaves, Activation, Adam, AdamConfig, AutodiffError, Linear, Mlp, ParamTree, Tape,
    Tensor, Var,
};
use crate::flow::{integrate, FlowConfig, VectorField};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum ToyVariant {
    #[serde(rename = "chamfer")]
    Chamfer,
    #[serde(rename = "chamfer+edge")]
    ChamferEdge,
    #[serde(rename = "chamfer+edge+laplacian")]
    ChamferEdgeLaplacian,
    #[serde(rename = "node")]
    Node,
}

impl ToyVariant {
    pub const ALL: [ToyVariant; 4] =
        [ToyVariant::Chamfer, ToyVariant::ChamferEdge, ToyVariant::ChamferEdgeLaplacian, ToyVariant::Node];

    pub fn tag(self) -> &'static str {
        match self {
            ToyVariant::Chamfer => "chamfer",
            ToyVariant::ChamferEdge => "chamfer+edge",
            ToyVariant::ChamferEdgeLaplacian => "chamfer+edge+laplacian",
            ToyVariant::Node => "node",
        }
    }
}

impl std::fmt::Display for ToyVariant {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.tag())
    }
}

impl FromStr for ToyVariant {
    type Err = ExperimentError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Self::ALL
            .into_iter()
            .find(|v| v.tag() == s)
            .ok_or_else(|| ExperimentError::Config(format!("unknown toy variant `{s}`")))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ToyConfig {
    pub steps: usize,
    pub lr: f64,
    pub hidden: usize,
    /// Vertices of the circle template.
    pub template_vertices: usize,
    pub star_points_per_side: usize,
    pub star_arms: usize,
    pub star_r_in: f64,
    pub star_r_out: f64,
    /// Weight of the edge-length regulariser in the regularised variants.
    pub edge_weight: f64,
    /// Weight of the Laplacian regulariser in the last regularised variant.
    pub laplacian_weight: f64,
    /// Points drawn from each outline per training step.
    pub samples: usize,
    /// Evenly spaced outline points used for the reported Chamfer distance.
    pub eval_samples: usize,
    /// Integration of the velocity-field variant.
    pub flow: FlowConfig,
}

impl Default for ToyConfig {
    fn default() -> Self {
        Self {
            steps: 1000,
            lr: 1e-3,
            hidden: 256,
            template_vertices: 100,
            star_points_per_side: 10,
            star_arms: 5,
            star_r_in: 0.45,
            star_r_out: 1.0,
            edge_weight: 0.5,
            laplacian_weight: 0.5,
            samples: 200,
            eval_samples: 1000,
            flow: FlowConfig::fixed(1.0, 16),
        }
    }
}

impl ToyConfig {
    pub fn template(&self) -> Result<Polygon2D, ExperimentError> {
        circle_polygon(self.template_vertices, 1.0)
    }

    pub fn target(&self) -> Result<Polygon2D, ExperimentError> {
        star_polygon(self.star_points_per_side, self.star_arms, self.star_r_in, self.star_r_out)
    }
}

/// Outcome of one variant on one seed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ToyResult {
    pub variant: ToyVariant,
    pub seed: u64,
    pub vertices: Vec<Point2>,
    pub intersections: usize,
    pub chamfer: f64,
    /// Set when training stopped on a non-finite loss; the vertices are then
    /// those of the last finite step.
    pub diverged: Option<String>,
}

/// Velocity field given by an MLP on point coordinates.
#[derive(Debug, Clone)]
struct MlpField {
    structure: Mlp<()>,
}

impl VectorField for MlpField {
    fn eval<'t>(&self, x: &Var<'t>, params: &[Var<'t>]) -> Result<Var<'t>, AutodiffError> {
        replace_leaves(&self.structure, params.iter().cloned()).forward(x)
    }
}

/// `2 -> hidden (relu) -> 2 (tanh)` with a zero output layer, so every
/// variant starts from the undeformed template.
pub fn toy_mlp(hidden: usize, seed: u64) -> Mlp {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let first = Linear::init(2, hidden, &mut rng);
    Mlp { layers: vec![first, Linear::zeros(hidden, 2)], activations: vec![Activation::Relu, Activation::Tanh] }
}

fn points_tensor(points: &[Point2]) -> Tensor {
    Tensor::matrix(points.len(), 2, points.iter().flatten().copied().collect()).expect("2 columns")
}

fn tensor_points(t: &Tensor) -> Vec<Point2> {
    t.data().chunks_exact(2).map(|c| [c[0], c[1]]).collect()
}

fn nearest(from: &[Point2], to: &[Point2]) -> Vec<usize> {
    from.iter()
        .map(|p| {
            let mut best = (0, f64::INFINITY);
            for (j, q) in to.iter().enumerate() {
                let d = (p[0] - q[0]).powi(2) + (p[1] - q[1]).powi(2);
                if d < best.1 {
                    best = (j, d);
                }
            }
            best.0
        })
        .collect()
}

/// Mean-per-direction Chamfer distance between two 2D point sets.
pub fn chamfer_2d(p: &[Point2], q: &[Point2]) -> f64 {
    let dir = |a: &[Point2], b: &[Point2]| {
        let nn = nearest(a, b);
        a.iter().zip(nn).map(|(x, j)| (x[0] - b[j][0]).powi(2) + (x[1] - b[j][1]).powi(2)).sum::<f64>()
            / a.len() as f64
    };
    dir(p, q) + dir(q, p)
}

fn chamfer_2d_on_tape<'t>(p: &Var<'t>, q: &Var<'t>) -> Result<Var<'t>, AutodiffError> {
    let (pp, qp) = (tensor_points(p.value()), tensor_points(q.value()));
    let dir = |a: &Var<'t>, b: &Var<'t>, ap: &[Point2], bp: &[Point2]| -> Result<Var<'t>, AutodiffError> {
        let paired = b.gather_rows(Rc::new(nearest(ap, bp)))?;
        Ok(a.sub(&paired)?.square().sum().scale(1.0 / ap.len() as f64))
    };
    dir(p, q, &pp, &qp)?.add(&dir(q, p, &qp, &pp)?)
}

fn perimeter(poly: &Polygon2D) -> (Vec<f64>, f64) {
    let mut cumulative = Vec::with_capacity(poly.len());
    let mut total = 0.0;
    for i in 0..poly.len() {
        let (a, b) = poly.edge(i);
        total += ((b[0] - a[0]).powi(2) + (b[1] - a[1]).powi(2)).sqrt();
        cumulative.push(total);
    }
    (cumulative, total)
}

fn point_at(poly: &Polygon2D, cumulative: &[f64], s: f64) -> Point2 {
    let i = cumulative.partition_point(|&c| c <= s).min(poly.len() - 1);
    let start = if i == 0 { 0.0 } else { cumulative[i - 1] };
    let (a, b) = poly.edge(i);
    let t = ((s - start) / (cumulative[i] - start)).clamp(0.0, 1.0);
    [a[0] + t * (b[0] - a[0]), a[1] + t * (b[1] - a[1])]
}

/// `n` points uniformly distributed by arc length along the outline.
pub fn sample_outline<R: Rng>(poly: &Polygon2D, n: usize, rng: &mut R) -> Vec<Point2> {
    let (cumulative, total) = perimeter(poly);
    (0..n).map(|_| point_at(poly, &cumulative, rng.gen::<f64>() * total)).collect()
}

/// `n` points at equal arc-length spacing, starting at vertex 0.
pub fn even_outline(poly: &Polygon2D, n: usize) -> Vec<Point2> {
    let (cumulative, total) = perimeter(poly);
    (0..n).map(|i| point_at(poly, &cumulative, total * i as f64 / n as f64)).collect()
}

fn shifted<'t>(x: &Var<'t>, by: usize) -> Result<Var<'t>, AutodiffError> {
    let n = x.value().rows();
    x.gather_rows(Rc::new((0..n).map(|i| (i + by) % n).collect()))
}

/// Mean squared deviation of the closed loop's edge lengths from their mean.
pub fn edge_length_regularizer<'t>(x: &Var<'t>) -> Result<Var<'t>, AutodiffError> {
    let ones = x.tape().constant(Tensor::ones(&[2, 1]));
    let len2 = shifted(x, 1)?.sub(x)?.square().matmul(&ones)?;
    let len = len2.sqrt();
    Ok(len2.mean().sub(&len.mean().square())?)
}

/// Mean squared norm of the uniform Laplacian `x_i - (x_{i-1} + x_{i+1}) / 2`.
pub fn laplacian_regularizer<'t>(x: &Var<'t>) -> Result<Var<'t>, AutodiffError> {
    let n = x.value().rows();
    let avg = shifted(x, 1)?.add(&shifted(x, n - 1)?)?.scale(0.5);
    Ok(x.sub(&avg)?.square().sum().scale(1.0 / n as f64))
}

fn predict<'t>(
    variant: ToyVariant,
    x: &Var<'t>,
    mlp: &Mlp<Var<'t>>,
    field: &MlpField,
    flow: &FlowConfig,
) -> Result<Var<'t>, ExperimentError> {
    match variant {
        ToyVariant::Node => {
            let params: Vec<Var<'t>> = named_leaves(mlp).into_iter().map(|(_, v)| v).collect();
            Ok(integrate(field, x, &params, flow)?)
        }
        _ => Ok(x.add(&mlp.forward(x)?)?),
    }
}

/// Trains one variant from the MLP initialised with `seed`.
pub fn run_variant(variant: ToyVariant, seed: u64, cfg: &ToyConfig) -> Result<ToyResult, ExperimentError> {
    let template = cfg.template()?;
    let target = cfg.target()?;
    let x0 = points_tensor(template.vertices());
    let mut params = toy_mlp(cfg.hidden, seed);
    let field = MlpField { structure: params.map_leaves("", &mut |_, _| ()) };
    let mut flat: Vec<Tensor> = named_leaves(&params).into_iter().map(|(_, t)| t).collect();
    let mut adam = Adam::new(AdamConfig { lr: cfg.lr, decay_every: 0, ..AdamConfig::default() }, &flat);
    let (edge_w, lap_w) = match variant {
        ToyVariant::Chamfer | ToyVariant::Node => (0.0, 0.0),
        ToyVariant::ChamferEdge => (cfg.edge_weight, 0.0),
        ToyVariant::ChamferEdgeLaplacian => (cfg.edge_weight, cfg.laplacian_weight),
    };
    let mut diverged = None;
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5EED_0F_7041);
    for step in 0..cfg.steps {
        let from = points_tensor(&sample_outline(&template, cfg.samples, &mut rng));
        let to = points_tensor(&sample_outline(&target, cfg.samples, &mut rng));
        let tape = Tape::new();
        let mlp = bind(&params, &tape);
        let y = predict(variant, &tape.constant(from), &mlp, &field, &cfg.flow)?;
        if !y.value().is_finite() {
            diverged = Some(format!("non-finite prediction at step {step}"));
            break;
        }
        let mut loss = chamfer_2d_on_tape(&y, &tape.constant(to))?;
        if edge_w != 0.0 || lap_w != 0.0 {
            let verts = predict(variant, &tape.constant(x0.clone()), &mlp, &field, &cfg.flow)?;
            if edge_w != 0.0 {
                loss = loss.add(&edge_length_regularizer(&verts)?.scale(edge_w))?;
            }
            if lap_w != 0.0 {
                loss = loss.add(&laplacian_regularizer(&verts)?.scale(lap_w))?;
            }
        }
        let grads = tape.backward(&loss)?;
        let grads: Vec<Tensor> = named_leaves(&mlp).iter().map(|(_, v)| grads.get(v)).collect();
        if !loss.value().is_finite() || grads.iter().any(|g| !g.is_finite()) {
            diverged = Some(format!("non-finite loss at step {step}"));
            break;
        }
        adam.step(&mut flat, &grads)?;
        params = replace_leaves(&params, flat.iter().cloned());
    }
    let tape = Tape::no_grad();
    let mlp = bind(&params, &tape);
    let y = predict(variant, &tape.constant(x0.clone()), &mlp, &field, &cfg.flow)?;
    let vertices = tensor_points(y.value());
    let (intersections, chamfer) = match Polygon2D::new(vertices.clone()) {
        Ok(poly) => (
            intersecting_edge_pairs(&poly).len(),
            chamfer_2d(&even_outline(&poly, cfg.eval_samples), &even_outline(&target, cfg.eval_samples)),
        ),
        Err(e) => {
            diverged.get_or_insert_with(|| format!("degenerate prediction: {e}"));
            (0, f64::NAN)
        }
    };
    Ok(ToyResult { variant, seed, vertices, intersections, chamfer, diverged })
}

/// Every variant on every seed, in seed-major order.
pub fn toy2d(seeds: &[u64], variants: &[ToyVariant], cfg: &ToyConfig) -> Result<Vec<ToyResult>, ExperimentError> {
    if cfg.steps > 0 && !(cfg.lr > 0.0) {
        return Err(ExperimentError::Config("learning rate must be positive".into()));
    }
    let jobs: Vec<(u64, ToyVariant)> = seeds.iter().flat_map(|&s| variants.iter().map(move |&v| (s, v))).collect();
    let workers = std::thread::available_parallelism().map_or(1, |n| n.get()).min(jobs.len()).max(1);
    let next = AtomicUsize::new(0);
    let mut slots: Vec<Option<Result<ToyResult, ExperimentError>>> = (0..jobs.len()).map(|_| None).collect();
    std::thread::scope(|scope| {
        let handles: Vec<_> = (0..workers)
            .map(|_| {
                scope.spawn(|| {
                    let mut done = Vec::new();
                    loop {
                        let i = next.fetch_add(1, Ordering::Relaxed);
                        let Some(&(seed, variant)) = jobs.get(i) else { break };
                        done.push((i, run_variant(variant, seed, cfg)));
                    }
                    done
                })
            })
            .collect();
        for h in handles {
            for (i, r) in h.join().expect("toy worker panicked") {
                slots[i] = Some(r);
            }
        }
    });
    slots.into_iter().map(|r| r.expect("every job ran")).collect()
}

/// `variant,seed,intersections,chamfer` rows.
pub fn results_csv(results: &[ToyResult]) -> String {
    let mut out = String::from("variant,seed,intersections,chamfer\n");
    for r in results {
        let _ = writeln!(out, "{},{},{},{:e}", r.variant, r.seed, r.intersections, r.chamfer);
    }
    out
}

/// Overlay of template (grey), target (green) and prediction (black), with
/// intersecting predicted edges in red.
pub fn overlay_svg(template: &Polygon2D, target: &Polygon2D, result: &ToyResult) -> String {
    const SIZE: f64 = 400.0;
    let extent = template
        .vertices()
        .iter()
        .chain(target.vertices())
        .chain(&result.vertices)
        .flatten()
        .fold(1.0f64, |m, x| if x.is_finite() { m.max(x.abs()) } else { m })
        * 1.1;
    let map = |p: &Point2| (SIZE / 2.0 * (1.0 + p[0] / extent), SIZE / 2.0 * (1.0 - p[1] / extent));
    let path = |pts: &[Point2]| {
        pts.iter()
            .map(|p| {
                let (x, y) = map(p);
                format!("{x:.3},{y:.3}")
            })
            .collect::<Vec<_>>()
            .join(" ")
    };
    let mut svg = format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{SIZE}\" height=\"{SIZE}\" viewBox=\"0 0 {SIZE} {SIZE}\">\n"
    );
    let _ = writeln!(svg, "<title>{} seed {}</title>", result.variant, result.seed);
    let _ = writeln!(svg, "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>");
    for (pts, colour) in [(template.vertices(), "grey"), (target.vertices(), "green"), (&result.vertices[..], "black")] {
        let _ = writeln!(svg, "<polygon points=\"{}\" fill=\"none\" stroke=\"{colour}\" stroke-width=\"1\"/>", path(pts));
    }
    if let Ok(poly) = Polygon2D::new(result.vertices.clone()) {
        let mut bad: Vec<usize> = intersecting_edge_pairs(&poly).into_iter().flat_map(|(i, j)| [i, j]).collect();
        bad.sort_unstable();
        bad.dedup();
        for i in bad {
            let (a, b) = poly.edge(i);
            let ((x1, y1), (x2, y2)) = (map(&a), map(&b));
            let _ = writeln!(
                svg,
                "<line x1=\"{x1:.3}\" y1=\"{y1:.3}\" x2=\"{x2:.3}\" y2=\"{y2:.3}\" stroke=\"red\" stroke-width=\"2\"/>"
            );
        }
    }
    svg.push_str("</svg>\n");
    svg
}
