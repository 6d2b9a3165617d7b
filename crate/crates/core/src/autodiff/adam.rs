use serde::{Deserialize, Serialize};

use super::{AutodiffError, Tensor};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    /// Multiply the learning rate by this factor...
    pub decay_factor: f64,
    /// ...after every this many steps (0 disables the schedule).
    pub decay_every: usize,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self { lr: 1e-5, beta1: 0.9, beta2: 0.999, eps: 1e-8, decay_factor: 0.95, decay_every: 250 }
    }
}

impl AdamConfig {
    /// Step size in force for the `step`-th update (0-based).
    pub fn lr_at(&self, step: usize) -> f64 {
        if self.decay_every == 0 {
            return self.lr;
        }
        self.lr * self.decay_factor.powi((step / self.decay_every) as i32)
    }
}

/// Adam with bias correction over a flat list of parameter tensors.
#[derive(Debug, Clone)]
pub struct Adam {
    pub config: AdamConfig,
    first: Vec<Tensor>,
    second: Vec<Tensor>,
    steps: usize,
}

impl Adam {
    pub fn new(config: AdamConfig, params: &[Tensor]) -> Self {
        let zeros: Vec<Tensor> = params.iter().map(|p| Tensor::zeros(p.shape())).collect();
        Self { config, first: zeros.clone(), second: zeros, steps: 0 }
    }

    pub fn steps(&self) -> usize {
        self.steps
    }

    pub fn moments(&self) -> (&[Tensor], &[Tensor]) {
        (&self.first, &self.second)
    }

    /// One update using the scheduled learning rate.
    pub fn step(&mut self, params: &mut [Tensor], grads: &[Tensor]) -> Result<(), AutodiffError> {
        let lr = self.config.lr_at(self.steps);
        self.step_with_lr(params, grads, lr)
    }

    pub fn step_with_lr(&mut self, params: &mut [Tensor], grads: &[Tensor], lr: f64) -> Result<(), AutodiffError> {
        if params.len() != grads.len() || params.len() != self.first.len() {
            return Err(AutodiffError::ParamCount { params: params.len(), grads: grads.len(), state: self.first.len() });
        }
        for ((p, g), m) in params.iter().zip(grads).zip(&self.first) {
            if p.shape() != g.shape() || p.shape() != m.shape() {
                return Err(AutodiffError::ShapeMismatch { op: "adam_step", lhs: p.shape().to_vec(), rhs: g.shape().to_vec() });
            }
        }
        self.steps += 1;
        let AdamConfig { beta1, beta2, eps, .. } = self.config;
        let c1 = 1.0 - beta1.powi(self.steps as i32);
        let c2 = 1.0 - beta2.powi(self.steps as i32);
        for (((p, g), m), v) in params.iter_mut().zip(grads).zip(&mut self.first).zip(&mut self.second) {
            for (((pi, &gi), mi), vi) in p
                .data_mut()
                .iter_mut()
                .zip(g.data())
                .zip(m.data_mut())
                .zip(v.data_mut())
            {
                *mi = beta1 * *mi + (1.0 - beta1) * gi;
                *vi = beta2 * *vi + (1.0 - beta2) * gi * gi;
                let m_hat = *mi / c1;
                let v_hat = *vi / c2;
                *pi -= lr * m_hat / (v_hat.sqrt() + eps);
            }
        }
        Ok(())
    }
}
