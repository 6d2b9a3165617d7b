//! Conditional neural-ODE mesh deformation: dynamics networks, ODE solves
//! recorded on the tape, instance normalisation, deformation blocks, losses
//! and training.

mod config;
mod dynamics;
mod field;
mod loss;
mod nmf;
pub mod ode;
mod train;

pub use config::{FlowConfig, GradientMode, LossWeights, SolverKind};
pub use dynamics::{dynamics_eval, node_block, ConditionedDynamics, DynamicsParams, ResBlock};
pub use field::{adjoint_grad, integrate, solve_values, AdjointGradients, LinearField, Reversed, VectorField, ZeroField};
pub use loss::{chamfer_on_tape, differentiable_sample, frozen_sample_terms, nmf_loss, nmf_loss_on_tape, LossParts};
pub use nmf::{
    deformation_block, instance_norm, nmf_forward, nmf_forward_on_tape, BlockParams, NmfArch, NmfParams,
};
pub use train::{load_checkpoint, save_checkpoint, train, LossRecord, TrainConfig, TrainOutcome};

use thiserror::Error;

use crate::autodiff::AutodiffError;
use crate::mesh::MeshError;
use crate::metrics::MetricsError;
use ode::OdeError;

#[derive(Debug, Error)]
pub enum FlowError {
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("adjoint gradients need the fixed-step RK4 solver")]
    UnsupportedAdjoint,
    #[error(transparent)]
    Ode(#[from] OdeError),
    #[error(transparent)]
    Autodiff(#[from] AutodiffError),
    #[error(transparent)]
    Mesh(#[from] MeshError),
    #[error(transparent)]
    Metrics(#[from] MetricsError),
    #[error("training diverged at step {step}: {reason}")]
    Diverged { step: usize, reason: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl FlowError {
    /// `true` for failures of the numerics rather than of the inputs.
    pub fn is_numerical(&self) -> bool {
        matches!(
            self,
            FlowError::Ode(_) | FlowError::Diverged { .. } | FlowError::Autodiff(AutodiffError::NonFinite(_))
        )
    }
}
