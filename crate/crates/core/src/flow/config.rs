use serde::{Deserialize, Serialize};

use super::FlowError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SolverKind {
    /// Classical RK4 with a fixed step count.
    Rk4Fixed,
    /// Dormand–Prince 5(4) with error control.
    Dopri5Adaptive,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum GradientMode {
    /// Differentiate through the solver's arithmetic.
    Backprop,
    /// Integrate the adjoint system backwards (fixed-step RK4 only).
    Adjoint,
}

/// How a NODE block integrates its dynamics.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FlowConfig {
    /// Integration interval `[0, time]`.
    pub time: f64,
    pub solver: SolverKind,
    /// Step count for the fixed-step solver.
    pub steps: usize,
    pub rtol: f64,
    pub atol: f64,
    pub gradient: GradientMode,
}

impl Default for FlowConfig {
    fn default() -> Self {
        Self {
            time: 0.2,
            solver: SolverKind::Rk4Fixed,
            steps: 16,
            rtol: 1e-5,
            atol: 1e-5,
            gradient: GradientMode::Backprop,
        }
    }
}

impl FlowConfig {
    pub fn adaptive(time: f64, tol: f64) -> Self {
        Self { time, solver: SolverKind::Dopri5Adaptive, rtol: tol, atol: tol, ..Self::default() }
    }

    pub fn fixed(time: f64, steps: usize) -> Self {
        Self { time, solver: SolverKind::Rk4Fixed, steps, ..Self::default() }
    }

    pub fn validate(&self) -> Result<(), FlowError> {
        let bad = |msg: &str| Err(FlowError::Config(msg.to_string()));
        if !(self.time > 0.0 && self.time.is_finite()) {
            return bad("integration time must be positive");
        }
        if !(self.rtol > 0.0 && self.atol > 0.0) {
            return bad("tolerances must be positive");
        }
        if self.steps == 0 {
            return bad("step count must be at least 1");
        }
        if self.gradient == GradientMode::Adjoint && self.solver != SolverKind::Rk4Fixed {
            return Err(FlowError::UnsupportedAdjoint);
        }
        Ok(())
    }
}

/// Weights of the vertex loss and the two sampled-surface losses.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossWeights {
    pub w0: f64,
    pub w1: f64,
    pub w2: f64,
}

impl Default for LossWeights {
    fn default() -> Self {
        Self { w0: 0.1, w1: 0.2, w2: 0.7 }
    }
}

impl LossWeights {
    pub fn validate(&self) -> Result<(), FlowError> {
        if [self.w0, self.w1, self.w2].iter().any(|w| !(*w >= 0.0)) {
            return Err(FlowError::Config("loss weights must be non-negative".into()));
        }
        Ok(())
    }
}
