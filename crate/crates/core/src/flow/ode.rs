//! Explicit solvers for autonomous systems `dx/dt = f(x)` on flat state
//! vectors: fixed-step classical RK4 and adaptive Dormand–Prince 5(4).

use thiserror::Error;

use crate::scalar::Real;

/// Smallest step the adaptive solver may take before giving up.
pub const MIN_STEP: f64 = 1e-10;
const MAX_STEPS: usize = 1_000_000;

#[derive(Debug, Error, PartialEq)]
pub enum OdeError {
    #[error("step size fell below {MIN_STEP:e} at t = {t}; the solution is diverging")]
    StepUnderflow { t: f64 },
    #[error("non-finite state at t = {t}")]
    NonFinite { t: f64 },
    #[error("adaptive solver exceeded {MAX_STEPS} steps")]
    TooManySteps,
}

fn axpy<T: Real>(x: &[T], a: T, k: &[T]) -> Vec<T> {
    x.iter().zip(k).map(|(&x, &k)| x + a * k).collect()
}

/// Classical RK4 from 0 to `t_end` with `steps` equal steps.
pub fn rk4<T: Real>(f: &mut impl FnMut(&[T]) -> Vec<T>, x0: &[T], t_end: T, steps: usize) -> Vec<T> {
    let h = t_end / T::from_usize(steps.max(1)).unwrap();
    let half = h * T::lit(0.5);
    let sixth = h / T::lit(6.0);
    let two = T::lit(2.0);
    let mut x = x0.to_vec();
    for _ in 0..steps {
        let k1 = f(&x);
        let k2 = f(&axpy(&x, half, &k1));
        let k3 = f(&axpy(&x, half, &k2));
        let k4 = f(&axpy(&x, h, &k3));
        for i in 0..x.len() {
            x[i] = x[i] + sixth * (k1[i] + two * k2[i] + two * k3[i] + k4[i]);
        }
    }
    x
}

/// Dormand–Prince tableau.
pub mod dp {
    pub const C: [f64; 7] = [0.0, 1.0 / 5.0, 3.0 / 10.0, 4.0 / 5.0, 8.0 / 9.0, 1.0, 1.0];
    pub const A: [[f64; 6]; 7] = [
        [0.0; 6],
        [1.0 / 5.0, 0.0, 0.0, 0.0, 0.0, 0.0],
        [3.0 / 40.0, 9.0 / 40.0, 0.0, 0.0, 0.0, 0.0],
        [44.0 / 45.0, -56.0 / 15.0, 32.0 / 9.0, 0.0, 0.0, 0.0],
        [19372.0 / 6561.0, -25360.0 / 2187.0, 64448.0 / 6561.0, -212.0 / 729.0, 0.0, 0.0],
        [9017.0 / 3168.0, -355.0 / 33.0, 46732.0 / 5247.0, 49.0 / 176.0, -5103.0 / 18656.0, 0.0],
        [35.0 / 384.0, 0.0, 500.0 / 1113.0, 125.0 / 192.0, -2187.0 / 6784.0, 11.0 / 84.0],
    ];
    /// Fifth-order weights (equal to the last row of `A`, so the last stage
    /// is the first stage of the next step).
    pub const B: [f64; 7] = [35.0 / 384.0, 0.0, 500.0 / 1113.0, 125.0 / 192.0, -2187.0 / 6784.0, 11.0 / 84.0, 0.0];
    /// Fifth minus fourth-order weights.
    pub const E: [f64; 7] = [
        71.0 / 57600.0,
        0.0,
        -71.0 / 16695.0,
        71.0 / 1920.0,
        -17253.0 / 339200.0,
        22.0 / 525.0,
        -1.0 / 40.0,
    ];
}

/// One Dormand–Prince step: the fifth-order update and the embedded error
/// estimate. `k1` is `f(x)`.
fn dopri_step<T: Real>(f: &mut impl FnMut(&[T]) -> Vec<T>, x: &[T], k1: Vec<T>, h: T) -> (Vec<T>, Vec<T>, Vec<T>) {
    let mut k: Vec<Vec<T>> = Vec::with_capacity(7);
    k.push(k1);
    for s in 1..7 {
        let mut xs = x.to_vec();
        for (j, kj) in k.iter().enumerate() {
            let a = dp::A[s][j];
            if a != 0.0 {
                let a = T::lit(a) * h;
                for i in 0..xs.len() {
                    xs[i] = xs[i] + a * kj[i];
                }
            }
        }
        if s == 6 {
            // stage 7 is evaluated at the new point itself
            let k7 = f(&xs);
            let err: Vec<T> = (0..x.len())
                .map(|i| h * (0..7).map(|j| T::lit(dp::E[j]) * if j < 6 { k[j][i] } else { k7[i] }).sum::<T>())
                .collect();
            return (xs, err, k7);
        }
        k.push(f(&xs));
    }
    unreachable!()
}

fn error_norm<T: Real>(err: &[T], x: &[T], x_new: &[T], rtol: T, atol: T) -> T {
    let n = T::from_usize(err.len().max(1)).unwrap();
    let sum: T = err
        .iter()
        .zip(x.iter().zip(x_new))
        .map(|(&e, (&a, &b))| {
            let sc = atol + rtol * a.abs().max(b.abs());
            (e / sc) * (e / sc)
        })
        .sum();
    (sum / n).sqrt()
}

/// Starting step from the local scale of the solution and its derivative.
fn initial_step<T: Real>(f: &mut impl FnMut(&[T]) -> Vec<T>, x: &[T], f0: &[T], t_end: T, rtol: T, atol: T) -> T {
    let scale: Vec<T> = x.iter().map(|v| atol + rtol * v.abs()).collect();
    let rms = |v: &[T]| {
        let n = T::from_usize(v.len().max(1)).unwrap();
        (v.iter().zip(&scale).map(|(a, s)| (*a / *s) * (*a / *s)).sum::<T>() / n).sqrt()
    };
    let d0 = rms(x);
    let d1 = rms(f0);
    let small = T::lit(1e-5);
    let h0 = if d0 < small || d1 < small { T::lit(1e-6) } else { T::lit(0.01) * d0 / d1 };
    let h0 = h0.min(t_end);
    let x1 = axpy(x, h0, f0);
    let f1 = f(&x1);
    let diff: Vec<T> = f1.iter().zip(f0).map(|(a, b)| *a - *b).collect();
    let d2 = rms(&diff) / h0;
    let h1 = if d1.max(d2) <= T::lit(1e-15) {
        (h0 * T::lit(1e-3)).max(T::lit(1e-6))
    } else {
        (T::lit(0.01) / d1.max(d2)).powf(T::lit(0.2))
    };
    (T::lit(100.0) * h0).min(h1).min(t_end)
}

/// Accepted step sizes and the number of rejected trial steps.
#[derive(Debug, Clone, PartialEq)]
pub struct AdaptiveStats<T> {
    pub steps: Vec<T>,
    pub rejected: usize,
}

/// Adaptive Dormand–Prince 5(4) from 0 to `t_end`. Steps are accepted when
/// the RMS of `err / (atol + rtol * |x|)` is at most one.
pub fn dopri5<T: Real>(
    f: &mut impl FnMut(&[T]) -> Vec<T>,
    x0: &[T],
    t_end: T,
    rtol: T,
    atol: T,
) -> Result<(Vec<T>, AdaptiveStats<T>), OdeError> {
    let mut x = x0.to_vec();
    let mut stats = AdaptiveStats { steps: Vec::new(), rejected: 0 };
    let mut k1 = f(&x);
    if x0.is_empty() {
        return Ok((x, stats));
    }
    let mut t = T::zero();
    let mut h = initial_step(f, &x, &k1, t_end, rtol, atol);
    let min_step = T::lit(MIN_STEP);
    let (safety, fac_min, fac_max) = (T::lit(0.9), T::lit(0.2), T::lit(10.0));
    let finishing = |t: T| t_end - t <= t_end * T::epsilon() * T::lit(16.0);

    while !finishing(t) {
        if stats.steps.len() + stats.rejected > MAX_STEPS {
            return Err(OdeError::TooManySteps);
        }
        if t + h > t_end {
            h = t_end - t;
        }
        let (x_new, err, k7) = dopri_step(f, &x, k1.clone(), h);
        let en = error_norm(&err, &x, &x_new, rtol, atol);
        if !en.is_finite() || x_new.iter().any(|v| !v.is_finite()) {
            h = h * fac_min;
            stats.rejected += 1;
            if h < min_step {
                return Err(OdeError::NonFinite { t: t.as_f64() });
            }
            continue;
        }
        if en <= T::one() {
            t = t + h;
            stats.steps.push(h);
            x = x_new;
            k1 = k7;
            let fac = if en == T::zero() { fac_max } else { (safety * en.powf(T::lit(-0.2))).min(fac_max).max(fac_min) };
            h = h * fac;
        } else {
            stats.rejected += 1;
            h = h * (safety * en.powf(T::lit(-0.2))).max(fac_min);
            if h < min_step {
                return Err(OdeError::StepUnderflow { t: t.as_f64() });
            }
        }
    }
    Ok((x, stats))
}

/// Replays a Dormand–Prince integration over a fixed list of step sizes.
pub fn dopri5_replay<T: Real>(f: &mut impl FnMut(&[T]) -> Vec<T>, x0: &[T], steps: &[T]) -> Vec<T> {
    let mut x = x0.to_vec();
    for &h in steps {
        let k1 = f(&x);
        x = dopri_step(f, &x, k1, h).0;
    }
    x
}
