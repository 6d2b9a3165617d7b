//! Integration of parameterised vector fields on the tape, and the adjoint
//! method for their gradients.

use std::rc::Rc;

use super::ode::{self, dp};
use super::{FlowConfig, FlowError, GradientMode, SolverKind};
use crate::autodiff::{AutodiffError, Tape, Tensor, Var};

/// Autonomous velocity field `dx/dt = f(x; params)` over `[N, n]` point sets.
pub trait VectorField {
    fn eval<'t>(&self, x: &Var<'t>, params: &[Var<'t>]) -> Result<Var<'t>, AutodiffError>;
}

/// Field that is identically zero.
#[derive(Debug, Clone, Copy)]
pub struct ZeroField;

impl VectorField for ZeroField {
    fn eval<'t>(&self, x: &Var<'t>, _params: &[Var<'t>]) -> Result<Var<'t>, AutodiffError> {
        Ok(x.scale(0.0))
    }
}

/// `f(x) = x ⊙ a` with a per-column rate vector `a`, the single parameter.
#[derive(Debug, Clone, Copy)]
pub struct LinearField;

impl VectorField for LinearField {
    fn eval<'t>(&self, x: &Var<'t>, params: &[Var<'t>]) -> Result<Var<'t>, AutodiffError> {
        x.mul_row(&params[0])
    }
}

/// Same field with the velocity negated, which runs the flow backwards.
#[derive(Debug, Clone)]
pub struct Reversed<F>(pub F);

impl<F: VectorField> VectorField for Reversed<F> {
    fn eval<'t>(&self, x: &Var<'t>, params: &[Var<'t>]) -> Result<Var<'t>, AutodiffError> {
        Ok(self.0.eval(x, params)?.neg())
    }
}

fn axpy<'t>(x: &Var<'t>, a: f64, k: &Var<'t>) -> Result<Var<'t>, AutodiffError> {
    x.add(&k.scale(a))
}

/// Integrates from 0 to `cfg.time` starting at `x`, recording on `x`'s tape
/// so gradients reach `x` and `params` under `cfg.gradient`.
pub fn integrate<'t, F: VectorField + Clone + 'static>(
    field: &F,
    x: &Var<'t>,
    params: &[Var<'t>],
    cfg: &FlowConfig,
) -> Result<Var<'t>, FlowError> {
    cfg.validate()?;
    // shape check before any solver runs
    let probe = field.eval(&x.detach(), &detached(params))?;
    if probe.shape() != x.shape() {
        return Err(FlowError::Autodiff(AutodiffError::ShapeMismatch {
            op: "vector field",
            lhs: x.shape().to_vec(),
            rhs: probe.shape().to_vec(),
        }));
    }
    match (cfg.gradient, cfg.solver) {
        (GradientMode::Backprop, SolverKind::Rk4Fixed) => rk4_on_tape(field, x, params, cfg.time, cfg.steps),
        (GradientMode::Backprop, SolverKind::Dopri5Adaptive) => {
            let steps = adaptive_steps(field, x.value(), &detached_values(params), cfg)?;
            dopri5_on_tape(field, x, params, &steps)
        }
        (GradientMode::Adjoint, _) => adjoint_op(field, x, params, cfg),
    }
}

fn detached<'t>(params: &[Var<'t>]) -> Vec<Var<'t>> {
    params.iter().map(Var::detach).collect()
}

fn detached_values(params: &[Var<'_>]) -> Vec<Rc<Tensor>> {
    params.iter().map(Var::value_rc).collect()
}

fn rk4_on_tape<'t, F: VectorField + ?Sized>(
    field: &F,
    x: &Var<'t>,
    params: &[Var<'t>],
    time: f64,
    steps: usize,
) -> Result<Var<'t>, FlowError> {
    let h = time / steps as f64;
    let mut x = x.clone();
    for _ in 0..steps {
        let k1 = field.eval(&x, params)?;
        let k2 = field.eval(&axpy(&x, h / 2.0, &k1)?, params)?;
        let k3 = field.eval(&axpy(&x, h / 2.0, &k2)?, params)?;
        let k4 = field.eval(&axpy(&x, h, &k3)?, params)?;
        let incr = k1.add(&k2.scale(2.0))?.add(&k3.scale(2.0))?.add(&k4)?;
        x = axpy(&x, h / 6.0, &incr)?;
    }
    Ok(x)
}

fn dopri5_on_tape<'t, F: VectorField + ?Sized>(
    field: &F,
    x: &Var<'t>,
    params: &[Var<'t>],
    steps: &[f64],
) -> Result<Var<'t>, FlowError> {
    let mut x = x.clone();
    for &h in steps {
        let mut k: Vec<Var<'t>> = vec![field.eval(&x, params)?];
        for s in 1..7 {
            let mut xs = x.clone();
            for (j, kj) in k.iter().enumerate() {
                if dp::A[s][j] != 0.0 {
                    xs = axpy(&xs, dp::A[s][j] * h, kj)?;
                }
            }
            if s == 6 {
                x = xs;
                break;
            }
            k.push(field.eval(&xs, params)?);
        }
    }
    Ok(x)
}

/// Runs `f` over flat row-major buffers with constant parameters.
fn with_flat_field<F: VectorField + ?Sized, R>(
    field: &F,
    shape: &[usize],
    params: &[Rc<Tensor>],
    body: impl FnOnce(&mut dyn FnMut(&[f64]) -> Vec<f64>) -> R,
) -> R {
    let tape = Tape::no_grad();
    let pv: Vec<Var> = params.iter().map(|p| tape.constant_rc(Rc::clone(p))).collect();
    let mut f = |x: &[f64]| {
        let xv = tape.constant(Tensor::new(shape.to_vec(), x.to_vec()).expect("state shape"));
        field.eval(&xv, &pv).expect("field shapes validated").value().data().to_vec()
    };
    body(&mut f)
}

fn adaptive_steps<F: VectorField + ?Sized>(
    field: &F,
    x0: &Tensor,
    params: &[Rc<Tensor>],
    cfg: &FlowConfig,
) -> Result<Vec<f64>, FlowError> {
    with_flat_field(field, x0.shape(), params, |f| {
        let mut f = |x: &[f64]| f(x);
        ode::dopri5(&mut f, x0.data(), cfg.time, cfg.rtol, cfg.atol).map(|(_, stats)| stats.steps)
    })
    .map_err(FlowError::from)
}

/// Forward solution without recording anything.
pub fn solve_values<F: VectorField + ?Sized>(
    field: &F,
    x0: &Tensor,
    params: &[Tensor],
    cfg: &FlowConfig,
) -> Result<Tensor, FlowError> {
    let params: Vec<Rc<Tensor>> = params.iter().cloned().map(Rc::new).collect();
    solve_values_rc(field, x0, &params, cfg)
}

fn solve_values_rc<F: VectorField + ?Sized>(
    field: &F,
    x0: &Tensor,
    params: &[Rc<Tensor>],
    cfg: &FlowConfig,
) -> Result<Tensor, FlowError> {
    cfg.validate()?;
    let tape = Tape::no_grad();
    let pv: Vec<Var> = params.iter().map(|p| tape.constant_rc(Rc::clone(p))).collect();
    let x = tape.constant(x0.clone());
    let probe = field.eval(&x, &pv)?;
    if probe.shape() != x0.shape() {
        return Err(FlowError::Autodiff(AutodiffError::ShapeMismatch {
            op: "vector field",
            lhs: x0.shape().to_vec(),
            rhs: probe.shape().to_vec(),
        }));
    }
    let data = with_flat_field(field, x0.shape(), params, |f| {
        let mut f = |x: &[f64]| f(x);
        match cfg.solver {
            SolverKind::Rk4Fixed => Ok(ode::rk4(&mut f, x0.data(), cfg.time, cfg.steps)),
            SolverKind::Dopri5Adaptive => ode::dopri5(&mut f, x0.data(), cfg.time, cfg.rtol, cfg.atol).map(|r| r.0),
        }
    })?;
    Ok(Tensor::new(x0.shape().to_vec(), data)?)
}

/// Input and parameter gradients produced by [`adjoint_grad`].
#[derive(Debug, Clone)]
pub struct AdjointGradients {
    pub x0: Tensor,
    pub params: Vec<Tensor>,
}

/// `f(x)`, `aᵀ ∂f/∂x` and `aᵀ ∂f/∂θ` for each parameter.
fn vjp<F: VectorField + ?Sized>(
    field: &F,
    params: &[Rc<Tensor>],
    x: &Tensor,
    a: &Tensor,
) -> Result<(Tensor, Tensor, Vec<Tensor>), FlowError> {
    let tape = Tape::new();
    let xv = tape.leaf(x.clone());
    let pv: Vec<Var> = params.iter().map(|p| tape.leaf_rc(Rc::clone(p))).collect();
    let out = field.eval(&xv, &pv)?;
    let grads = tape.backward_from(&out, a.clone())?;
    Ok((out.value().clone(), grads.get(&xv), pv.iter().map(|p| grads.get(p)).collect()))
}

fn combine(x: &Tensor, a: f64, k: &Tensor) -> Tensor {
    x.zip_map(k, |x, k| x + a * k)
}

/// Gradients of a loss with respect to the initial state and the parameters,
/// given `dL/dx(T)`, by integrating the adjoint system from `T` back to 0
/// with the same fixed RK4 grid. The forward state is re-integrated backwards
/// alongside the adjoint rather than stored.
pub fn adjoint_grad<F: VectorField + ?Sized>(
    field: &F,
    x0: &Tensor,
    params: &[Tensor],
    cfg: &FlowConfig,
    dl_dxt: &Tensor,
) -> Result<AdjointGradients, FlowError> {
    let params: Vec<Rc<Tensor>> = params.iter().cloned().map(Rc::new).collect();
    let fwd_cfg = FlowConfig { gradient: GradientMode::Backprop, ..*cfg };
    if cfg.solver != SolverKind::Rk4Fixed {
        return Err(FlowError::UnsupportedAdjoint);
    }
    let xt = solve_values_rc(field, x0, &params, &fwd_cfg)?;
    adjoint_from_final(field, &xt, &params, cfg, dl_dxt)
}

fn adjoint_from_final<F: VectorField + ?Sized>(
    field: &F,
    xt: &Tensor,
    params: &[Rc<Tensor>],
    cfg: &FlowConfig,
    dl_dxt: &Tensor,
) -> Result<AdjointGradients, FlowError> {
    if cfg.solver != SolverKind::Rk4Fixed {
        return Err(FlowError::UnsupportedAdjoint);
    }
    if dl_dxt.shape() != xt.shape() {
        return Err(FlowError::Autodiff(AutodiffError::ShapeMismatch {
            op: "adjoint_grad",
            lhs: xt.shape().to_vec(),
            rhs: dl_dxt.shape().to_vec(),
        }));
    }
    let dt = -cfg.time / cfg.steps as f64;
    let mut x = xt.clone();
    let mut a = dl_dxt.clone();
    let mut g: Vec<Tensor> = params.iter().map(|p| Tensor::zeros(p.shape())).collect();
    // augmented dynamics: (f(x), -aᵀ∂f/∂x, -aᵀ∂f/∂θ)
    let aug = |x: &Tensor, a: &Tensor| -> Result<(Tensor, Tensor, Vec<Tensor>), FlowError> {
        let (fx, ax, ap) = vjp(field, params, x, a)?;
        Ok((fx, ax.map(|v| -v), ap.into_iter().map(|t| t.map(|v| -v)).collect()))
    };
    for _ in 0..cfg.steps {
        let (k1x, k1a, k1g) = aug(&x, &a)?;
        let (k2x, k2a, k2g) = aug(&combine(&x, dt / 2.0, &k1x), &combine(&a, dt / 2.0, &k1a))?;
        let (k3x, k3a, k3g) = aug(&combine(&x, dt / 2.0, &k2x), &combine(&a, dt / 2.0, &k2a))?;
        let (k4x, k4a, k4g) = aug(&combine(&x, dt, &k3x), &combine(&a, dt, &k3a))?;
        let blend = |v: &Tensor, k1: &Tensor, k2: &Tensor, k3: &Tensor, k4: &Tensor| {
            let mut out = v.clone();
            for (i, o) in out.data_mut().iter_mut().enumerate() {
                *o += dt / 6.0 * (k1.data()[i] + 2.0 * k2.data()[i] + 2.0 * k3.data()[i] + k4.data()[i]);
            }
            out
        };
        x = blend(&x, &k1x, &k2x, &k3x, &k4x);
        a = blend(&a, &k1a, &k2a, &k3a, &k4a);
        for (j, gj) in g.iter_mut().enumerate() {
            *gj = blend(gj, &k1g[j], &k2g[j], &k3g[j], &k4g[j]);
        }
    }
    Ok(AdjointGradients { x0: a, params: g })
}

/// Forward solve recorded as a single tape node whose backward pass runs the
/// adjoint integration.
fn adjoint_op<'t, F: VectorField + Clone + 'static>(
    field: &F,
    x: &Var<'t>,
    params: &[Var<'t>],
    cfg: &FlowConfig,
) -> Result<Var<'t>, FlowError> {
    let values = detached_values(params);
    let fwd_cfg = FlowConfig { gradient: GradientMode::Backprop, ..*cfg };
    let xt = solve_values_rc(field, x.value(), &values, &fwd_cfg)?;
    let tape = x.tape();
    if !tape.is_recording() {
        return Ok(tape.constant(xt));
    }
    let owned = field.clone();
    let final_state = xt.clone();
    let cfg = *cfg;
    let mut inputs: Vec<&Var<'t>> = vec![x];
    inputs.extend(params.iter());
    Ok(tape.record(&inputs, xt, move |g| {
        let grads = adjoint_from_final(&owned, &final_state, &values, &cfg, g).expect("adjoint pass on validated shapes");
        let mut out = vec![Some(grads.x0)];
        out.extend(grads.params.into_iter().map(Some));
        out
    }))
}
