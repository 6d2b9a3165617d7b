mod common;

use common::{gradcheck, random_tensor, rel_err, rng};
use nmf_core::autodiff::{bind, bind_constant, named_leaves, replace_leaves, AutodiffError, Tape, Tensor, Var};
use nmf_core::flow::{
    adjoint_grad, chamfer_on_tape, deformation_block, dynamics_eval, frozen_sample_terms,
    instance_norm, integrate, nmf_forward, nmf_forward_on_tape, nmf_loss_on_tape, node_block, solve_values,
    ConditionedDynamics, DynamicsParams, FlowConfig, FlowError, GradientMode, LinearField, LossWeights, NmfArch,
    NmfParams, Reversed, VectorField, ZeroField,
};
use nmf_core::mesh::{icosphere, sample_surface};
use nmf_core::metrics::{nm_edges, nm_vertices};
use nmf_core::{fixtures, scalar};
use proptest::prelude::*;
use rand_chacha::ChaCha8Rng;

#[derive(Clone)]
struct Rotation;

impl VectorField for Rotation {
    fn eval<'t>(&self, x: &Var<'t>, _params: &[Var<'t>]) -> Result<Var<'t>, AutodiffError> {
        let m = x.tape().constant(Tensor::matrix(2, 2, vec![0.0, 1.0, -1.0, 0.0]).unwrap());
        x.matmul(&m)
    }
}

fn small_arch() -> NmfArch {
    NmfArch { k: 8, width: 8, encoder_hidden: vec![8], delta_hidden: 8, ..NmfArch::default() }
}

fn random_dynamics(seed: u64, k: usize, width: usize) -> (DynamicsParams, Tensor) {
    let mut r = rng(seed);
    let p = DynamicsParams::init(3, k, width, 1.0, &mut r);
    let z = random_tensor(&mut r, &[k], 1.0);
    (p, z)
}

fn sphere_points(subdiv: u32, n: usize) -> Tensor {
    let s = icosphere::<f64>(subdiv).unwrap();
    Tensor::from_points(&s.vertices()[..n.min(s.vertex_count())]).unwrap()
}

fn flow_points(p: &DynamicsParams, z: &Tensor, x: &Tensor, cfg: &FlowConfig) -> Tensor {
    solve_values(&ConditionedDynamics::new(p), x, &ConditionedDynamics::pack_values(z, p), cfg).unwrap()
}

#[test]
fn zero_field_is_the_identity() {
    let x = sphere_points(1, 42);
    for cfg in [FlowConfig::fixed(0.2, 16), FlowConfig::adaptive(0.2, 1e-5)] {
        assert_eq!(solve_values(&ZeroField, &x, &[], &cfg).unwrap(), x);
    }
}

#[test]
fn closed_form_solutions() {
    let one = Tensor::matrix(1, 1, vec![1.0]).unwrap();
    let e = solve_values(&LinearField, &one, &[Tensor::vector(vec![1.0])], &FlowConfig::adaptive(1.0, 1e-5)).unwrap();
    assert!((e.item() - std::f64::consts::E).abs() < 1e-4);
    let start = Tensor::matrix(1, 2, vec![1.0, 0.0]).unwrap();
    let end = solve_values(&Rotation, &start, &[], &FlowConfig::adaptive(std::f64::consts::FRAC_PI_2, 1e-5)).unwrap();
    assert!(end.data()[0].abs() < 1e-4 && (end.data()[1] - 1.0).abs() < 1e-4);
}

#[test]
fn zero_params_node_block_is_identity() {
    let tape = Tape::no_grad();
    let p = bind_constant(&DynamicsParams::zeros(3, 4, 8), &tape);
    let x = tape.constant(sphere_points(1, 42));
    let z = tape.constant(Tensor::vector(vec![1.0, 2.0, 3.0, 4.0]));
    let y = node_block(&x, &z, &p, &FlowConfig::default()).unwrap();
    assert_eq!(y.value(), x.value());
}

#[test]
fn forward_then_reversed_flow_returns_to_start() {
    let cfg = FlowConfig::adaptive(0.2, 1e-5);
    let x = sphere_points(2, 162);
    for seed in 0..10 {
        let (p, z) = random_dynamics(seed, 16, 32);
        let params = ConditionedDynamics::pack_values(&z, &p);
        let field = ConditionedDynamics::new(&p);
        let there = solve_values(&field, &x, &params, &cfg).unwrap();
        let back = solve_values(&Reversed(field), &there, &params, &cfg).unwrap();
        let moved = there.zip_map(&x, |a, b| a - b).max_abs();
        let err = back.zip_map(&x, |a, b| a - b).max_abs();
        assert!(moved > 1e-3, "seed {seed}: flow barely moves ({moved:e})");
        assert!(err <= 1e-3, "seed {seed}: round trip error {err:e}");
    }
}

#[test]
fn flowed_points_stay_distinct() {
    let x = sphere_points(3, 500);
    let pts = x.to_points();
    let min_pair = |p: &[[f64; 3]]| {
        let mut m = f64::INFINITY;
        for i in 0..p.len() {
            for j in i + 1..p.len() {
                m = m.min(scalar::dist2(p[i], p[j]).sqrt());
            }
        }
        m
    };
    assert!(min_pair(&pts) >= 1e-2);
    for seed in 0..10 {
        let (p, z) = random_dynamics(100 + seed, 16, 32);
        let y = flow_points(&p, &z, &x, &FlowConfig::adaptive(0.2, 1e-5));
        assert!(min_pair(&y.to_points()) > 1e-8, "seed {seed}");
    }
}

#[test]
fn conditioning_changes_the_flow() {
    let x = sphere_points(2, 162);
    let (p, z1) = random_dynamics(7, 16, 32);
    let z2 = random_tensor(&mut rng(8), &[16], 1.0);
    let cfg = FlowConfig::default();
    let a = flow_points(&p, &z1, &x, &cfg);
    let b = flow_points(&p, &z1, &x, &cfg);
    let c = flow_points(&p, &z2, &x, &cfg);
    assert_eq!(a, b);
    assert!(a.zip_map(&c, |u, v| u - v).max_abs() > 1e-6);
}

#[test]
fn tighter_tolerance_changes_little() {
    let x = sphere_points(2, 162);
    for seed in 0..5 {
        let (p, z) = random_dynamics(200 + seed, 16, 32);
        let loose = flow_points(&p, &z, &x, &FlowConfig::adaptive(0.2, 1e-3));
        let tight = flow_points(&p, &z, &x, &FlowConfig::adaptive(0.2, 1e-5));
        assert!(loose.zip_map(&tight, |a, b| a - b).max_abs() <= 1e-3);
    }
}

#[test]
fn adaptive_backprop_matches_fixed_step_gradients() {
    let (p, z) = random_dynamics(300, 8, 16);
    let x = sphere_points(1, 42);
    let grad = |cfg: FlowConfig| {
        let tape = Tape::new();
        let pv = bind(&p, &tape);
        let xv = tape.leaf(x.clone());
        let zv = tape.leaf(z.clone());
        let y = node_block(&xv, &zv, &pv, &cfg).unwrap();
        let g = tape.backward(&y.square().sum()).unwrap();
        (g.get(&xv), g.get(&zv))
    };
    let (gx1, gz1) = grad(FlowConfig::fixed(0.2, 64));
    let (gx2, gz2) = grad(FlowConfig::adaptive(0.2, 1e-7));
    assert!(rel_err(&gx1, &gx2) < 1e-4);
    assert!(rel_err(&gz1, &gz2) < 1e-4);
}

#[test]
fn adjoint_of_zero_field() {
    let x = sphere_points(0, 12);
    let g = random_tensor(&mut rng(1), &[12, 3], 1.0);
    let out = adjoint_grad(&ZeroField, &x, &[], &FlowConfig::default(), &g).unwrap();
    assert_eq!(out.x0, g);
    assert!(out.params.is_empty());
}

#[test]
fn adjoint_of_linear_field_matches_closed_form() {
    let (a, t, x0) = (0.7, 1.0, 1.3);
    let cfg = FlowConfig { gradient: GradientMode::Adjoint, ..FlowConfig::fixed(t, 32) };
    let g = Tensor::matrix(1, 1, vec![1.0]).unwrap();
    let out = adjoint_grad(&LinearField, &Tensor::matrix(1, 1, vec![x0]).unwrap(), &[Tensor::vector(vec![a])], &cfg, &g)
        .unwrap();
    assert!((out.x0.item() - (a * t).exp()).abs() < 1e-4);
    assert!((out.params[0].item() - t * x0 * (a * t).exp()).abs() < 1e-4);
}

#[test]
fn adjoint_rejects_adaptive_solver() {
    let x = sphere_points(0, 12);
    let err = adjoint_grad(&ZeroField, &x, &[], &FlowConfig::adaptive(0.2, 1e-5), &x).unwrap_err();
    assert!(matches!(err, FlowError::UnsupportedAdjoint));
}

#[test]
fn adjoint_matches_backprop_through_solver() {
    let x = sphere_points(1, 42);
    for seed in 0..10 {
        let (p, z) = random_dynamics(400 + seed, 8, 16);
        let w = random_tensor(&mut rng(500 + seed), &[42, 3], 1.0);
        let cfg = FlowConfig::fixed(0.2, 16);
        let backprop = {
            let tape = Tape::new();
            let pv = bind(&p, &tape);
            let xv = tape.leaf(x.clone());
            let zv = tape.leaf(z.clone());
            let y = node_block(&xv, &zv, &pv, &cfg).unwrap();
            let g = tape.backward(&y.mul(&tape.constant(w.clone())).unwrap().sum()).unwrap();
            let mut all = vec![g.get(&xv), g.get(&zv)];
            all.extend(named_leaves(&pv).iter().map(|(_, v)| g.get(v)));
            all
        };
        let adj_cfg = FlowConfig { gradient: GradientMode::Adjoint, ..cfg };
        let params = ConditionedDynamics::pack_values(&z, &p);
        let adj = adjoint_grad(&ConditionedDynamics::new(&p), &x, &params, &adj_cfg, &w).unwrap();
        assert!(rel_err(&adj.x0, &backprop[0]) < 1e-3, "seed {seed}: x0");
        for (i, (a, b)) in adj.params.iter().zip(&backprop[1..]).enumerate() {
            assert!(rel_err(a, b) < 1e-3, "seed {seed}: param {i} error {:e}", rel_err(a, b));
        }
        // the same gradients through the tape when the block runs in adjoint mode
        let tape = Tape::new();
        let pv = bind(&p, &tape);
        let xv = tape.leaf(x.clone());
        let zv = tape.leaf(z.clone());
        let y = node_block(&xv, &zv, &pv, &adj_cfg).unwrap();
        let g = tape.backward(&y.mul(&tape.constant(w.clone())).unwrap().sum()).unwrap();
        assert!(rel_err(&g.get(&xv), &backprop[0]) < 1e-3);
        assert!(rel_err(&g.get(&zv), &backprop[1]) < 1e-3);
    }
}

#[test]
fn dynamics_gradients_match_finite_differences() {
    for seed in 0..10 {
        let (p, z) = random_dynamics(600 + seed, 4, 8);
        let x = random_tensor(&mut rng(700 + seed), &[5, 3], 1.0);
        let err = gradcheck(&[x, z], &|v| {
            let pv = bind_constant(&p, v[0].tape());
            dynamics_eval(&v[0], &v[1], &pv).unwrap().square().sum()
        });
        assert!(err < 1e-5, "seed {seed}: {err:e}");
    }
}

#[test]
fn node_block_gradients_match_finite_differences() {
    for seed in 0..10 {
        let (p, z) = random_dynamics(800 + seed, 4, 8);
        let x = random_tensor(&mut rng(900 + seed), &[6, 3], 1.0);
        let w = p.out.weight.clone();
        let err = gradcheck(&[x, z, w], &|v| {
            let mut pv = bind_constant(&p, v[0].tape());
            pv.out.weight = v[2].clone();
            node_block(&v[0], &v[1], &pv, &FlowConfig::fixed(0.2, 4)).unwrap().square().sum()
        });
        assert!(err < 1e-5, "seed {seed}: {err:e}");
    }
}

#[test]
fn instance_norm_gradients_match_finite_differences() {
    let arch = small_arch();
    for seed in 0..10 {
        let params = NmfParams::init(&arch, &mut rng(seed)).unwrap();
        let delta = params.blocks[0].delta.clone();
        let x = random_tensor(&mut rng(50 + seed), &[7, 3], 1.0);
        let z = random_tensor(&mut rng(60 + seed), &[arch.k], 1.0);
        let err = gradcheck(&[x, z, delta.layers[1].weight.clone()], &|v| {
            let mut d = bind_constant(&delta, v[0].tape());
            d.layers[1].weight = v[2].clone();
            instance_norm(&v[0], &v[1], &d).unwrap().tanh().sum()
        });
        assert!(err < 1e-5, "seed {seed}: {err:e}");
    }
}

#[test]
fn forced_barycentric_sample_has_identity_gradient() {
    let tape = Tape::new();
    let v = tape.leaf(Tensor::from_points(fixtures::triangle().vertices()).unwrap());
    let s = v.combine_rows(std::rc::Rc::new(vec![vec![(0, 1.0), (1, 0.0), (2, 0.0)]])).unwrap();
    for axis in 0..3 {
        let mut seed = Tensor::zeros(&[1, 3]);
        seed.data_mut()[axis] = 1.0;
        let g = tape.backward_from(&s, seed).unwrap().get(&v);
        let mut expect = Tensor::zeros(&[3, 3]);
        expect.data_mut()[axis] = 1.0;
        assert_eq!(g, expect);
    }
}

#[test]
fn sampled_chamfer_gradients_match_finite_differences() {
    let mesh = fixtures::blob(1);
    let target = sample_surface(&fixtures::cube(), 60, 3).unwrap();
    let target = Tensor::from_points(target.points()).unwrap();
    for seed in 0..10 {
        let terms = frozen_sample_terms(&Tensor::from_points(mesh.vertices()).unwrap(), mesh.faces(), 50, seed).unwrap();
        let err = gradcheck(&[Tensor::from_points(mesh.vertices()).unwrap()], &|v| {
            let s = v[0].combine_rows(terms.clone()).unwrap();
            chamfer_on_tape(&s, &v[0].tape().constant(target.clone())).unwrap()
        });
        assert!(err < 1e-5, "seed {seed}: {err:e}");
    }
}

#[test]
fn loss_gradient_wrt_final_vertices_matches_finite_differences() {
    let template = icosphere::<f64>(1).unwrap();
    let target = Tensor::from_points(sample_surface(&fixtures::blob(2), 80, 1).unwrap().points()).unwrap();
    for seed in 0..10 {
        let mut r = rng(seed);
        let base = Tensor::from_points(template.vertices()).unwrap();
        let jitter = |r: &mut ChaCha8Rng| base.zip_map(&random_tensor(r, base.shape(), 0.05), |a, b| a + b);
        let (m0, m1, m2) = (jitter(&mut r), jitter(&mut r), jitter(&mut r));
        let err = gradcheck(&[m2], &|v| {
            let tape = v[0].tape();
            let preds = [tape.constant(m0.clone()), tape.constant(m1.clone()), v[0].clone()];
            let t = tape.constant(target.clone());
            nmf_loss_on_tape(&preds, template.faces(), &t, &LossWeights::default(), 60, seed).unwrap().0
        });
        assert!(err < 1e-4, "seed {seed}: {err:e}");
    }
}

#[test]
fn full_loss_gradients_match_finite_differences() {
    let arch = small_arch();
    let template = icosphere::<f64>(0).unwrap();
    let x = Tensor::from_points(template.vertices()).unwrap();
    let target = Tensor::from_points(sample_surface(&fixtures::blob(1), 40, 2).unwrap().points()).unwrap();
    let cfg = FlowConfig::fixed(0.2, 2);
    for seed in 0..10 {
        let params = NmfParams::init(&arch, &mut rng(seed)).unwrap();
        let leaves = named_leaves(&params);
        // the last encoder bias, a dynamics weight in each block, and a scale bias
        let chosen: Vec<usize> = leaves
            .iter()
            .enumerate()
            .filter(|(_, (n, _))| {
                n == "encoder.1.bias"
                    || n == "block0.node0.out.weight"
                    || n == "block1.node1.lift.weight"
                    || n == "block2.delta.1.bias"
            })
            .map(|(i, _)| i)
            .collect();
        assert_eq!(chosen.len(), 4);
        let inputs: Vec<Tensor> = chosen.iter().map(|&i| leaves[i].1.clone()).collect();
        let err = gradcheck(&inputs, &|v| {
            let tape = v[0].tape();
            let bound: Vec<Var> = leaves
                .iter()
                .enumerate()
                .map(|(i, (_, t))| match chosen.iter().position(|&c| c == i) {
                    Some(j) => v[j].clone(),
                    None => tape.constant(t.clone()),
                })
                .collect();
            let p = replace_leaves(&params, bound);
            let preds = nmf_forward_on_tape(&tape.constant(x.clone()), &tape.constant(target.clone()), &p, &cfg).unwrap();
            nmf_loss_on_tape(&preds, template.faces(), &tape.constant(target.clone()), &LossWeights::default(), 30, seed)
                .unwrap()
                .0
        });
        assert!(err < 1e-4, "seed {seed}: {err:e}");
    }
}

#[test]
fn deformation_block_equals_its_stages() {
    let arch = small_arch();
    let params = NmfParams::init(&arch, &mut rng(11)).unwrap();
    let tape = Tape::no_grad();
    let p = bind_constant(&params, &tape);
    let x = tape.constant(sphere_points(1, 42));
    let z = tape.constant(random_tensor(&mut rng(12), &[arch.k], 1.0));
    let cfg = FlowConfig::default();
    let fused = deformation_block(&x, &z, &p.blocks[1], &cfg).unwrap();
    let a = node_block(&x, &z, &p.blocks[1].flows[0], &cfg).unwrap();
    let b = node_block(&a, &z, &p.blocks[1].flows[1], &cfg).unwrap();
    let staged = instance_norm(&b, &z, &p.blocks[1].delta).unwrap();
    assert_eq!(fused.value(), staged.value());
    assert_eq!(fused.shape(), x.shape());
}

#[test]
fn integrate_records_through_the_tape() {
    let tape = Tape::new();
    let x = tape.leaf(Tensor::matrix(1, 1, vec![1.0]).unwrap());
    let a = tape.leaf(Tensor::vector(vec![0.5]));
    let y = integrate(&LinearField, &x, &[a.clone()], &FlowConfig::fixed(1.0, 32)).unwrap();
    let g = tape.backward(&y.sum()).unwrap();
    assert!((g.get(&x).item() - 0.5f64.exp()).abs() < 1e-6);
    assert!((g.get(&a).item() - 0.5f64.exp()).abs() < 1e-6);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    #[test]
    fn instance_norm_output_has_zero_mean(seed in 0u64..1000, rows in 1usize..40) {
        let arch = small_arch();
        let params = NmfParams::init(&arch, &mut rng(seed)).unwrap();
        let tape = Tape::no_grad();
        let d = bind_constant(&params.blocks[2].delta, &tape);
        let x = tape.constant(random_tensor(&mut rng(seed + 1), &[rows, 3], 5.0));
        let z = tape.constant(random_tensor(&mut rng(seed + 2), &[arch.k], 1.0));
        let y = instance_norm(&x, &z, &d).unwrap();
        let mean = y.mean_rows().unwrap();
        prop_assert!(mean.value().max_abs() <= 1e-12);
    }

    #[test]
    fn outputs_keep_template_topology(seed in 0u64..1000) {
        let arch = small_arch();
        let params = NmfParams::init(&arch, &mut rng(seed)).unwrap();
        let template = icosphere::<f64>(1).unwrap();
        let target = sample_surface(&fixtures::blob(1), 50, seed).unwrap();
        let outs = nmf_forward(&template, &target, &params, &FlowConfig::fixed(0.2, 2)).unwrap();
        for m in &outs {
            prop_assert_eq!(m.faces(), template.faces());
            prop_assert_eq!(nm_edges(m), 0.0);
            prop_assert_eq!(nm_vertices(m), 0.0);
        }
    }
}
