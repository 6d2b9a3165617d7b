#![allow(dead_code)]

use nmf_core::autodiff::{Tape, Tensor, Var};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn random_tensor(rng: &mut ChaCha8Rng, shape: &[usize], scale: f64) -> Tensor {
    let n = shape.iter().product();
    Tensor::new(shape.to_vec(), (0..n).map(|_| rng.gen_range(-scale..scale)).collect()).unwrap()
}

/// Norm-wise relative error `max|a - b| / max(max|a|, max|b|)`.
pub fn rel_err(a: &Tensor, b: &Tensor) -> f64 {
    assert_eq!(a.shape(), b.shape());
    let diff = a.data().iter().zip(b.data()).fold(0.0f64, |m, (x, y)| m.max((x - y).abs()));
    let scale = a.max_abs().max(b.max_abs());
    if scale == 0.0 {
        diff
    } else {
        diff / scale
    }
}

/// Central differences of a scalar function of several tensors.
pub fn numeric_grads(inputs: &[Tensor], eps: f64, f: &dyn Fn(&[Tensor]) -> f64) -> Vec<Tensor> {
    let mut grads = Vec::new();
    for (k, input) in inputs.iter().enumerate() {
        let mut g = vec![0.0; input.len()];
        for i in 0..input.len() {
            let mut plus = inputs.to_vec();
            plus[k].data_mut()[i] += eps;
            let mut minus = inputs.to_vec();
            minus[k].data_mut()[i] -= eps;
            g[i] = (f(&plus) - f(&minus)) / (2.0 * eps);
        }
        grads.push(Tensor::new(input.shape().to_vec(), g).unwrap());
    }
    grads
}

/// Analytic gradients of `build` (run on a fresh recording tape) against
/// central differences with step 1e-5. Returns the worst relative error.
pub fn gradcheck(inputs: &[Tensor], build: &dyn for<'t> Fn(&[Var<'t>]) -> Var<'t>) -> f64 {
    let tape = Tape::new();
    let vars: Vec<Var> = inputs.iter().map(|t| tape.leaf(t.clone())).collect();
    let loss = build(&vars);
    let grads = tape.backward(&loss).unwrap();
    let analytic: Vec<Tensor> = vars.iter().map(|v| grads.get(v)).collect();
    let numeric = numeric_grads(inputs, 1e-5, &|ts| {
        let tape = Tape::no_grad();
        let vars: Vec<Var> = ts.iter().map(|t| tape.constant(t.clone())).collect();
        build(&vars).value().item()
    });
    analytic.iter().zip(&numeric).map(|(a, n)| rel_err(a, n)).fold(0.0, f64::max)
}
