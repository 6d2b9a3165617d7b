//! Optimisation of the pipeline against a set of target meshes, with
//! checkpoints and a loss log.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::loss::nmf_loss_on_tape;
use super::nmf::{nmf_forward_on_tape, NmfArch, NmfParams};
use super::{FlowConfig, FlowError, LossWeights};
use crate::autodiff::checkpoint::{load_weights, save_weights};
use crate::autodiff::{bind, AutodiffError, named_leaves, replace_leaves, Adam, AdamConfig, Tape, Tensor};
use crate::mesh::{icosphere, sample_surface, unit_sphere_normalize, Mesh};

pub const CONFIG_FILE: &str = "config.json";
pub const LOSS_FILE: &str = "loss.csv";

/// Everything needed to reproduce a training run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub arch: NmfArch,
    pub flow: FlowConfig,
    pub optimizer: AdamConfig,
    pub weights: LossWeights,
    /// Optimisation steps; each step uses one target, cycling through the set.
    pub steps: usize,
    /// Points sampled from the target and from each predicted surface.
    pub sample_n: usize,
    /// Subdivision level of the icosphere template.
    pub template_subdivisions: u32,
    pub seed: u64,
    /// Write a checkpoint every this many steps (0: only at the end).
    pub checkpoint_every: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            arch: NmfArch { k: 64, width: 64, encoder_hidden: vec![64, 64], delta_hidden: 64, ..NmfArch::default() },
            flow: FlowConfig::fixed(0.2, 4),
            optimizer: AdamConfig { lr: 1e-3, ..AdamConfig::default() },
            weights: LossWeights::default(),
            steps: 2000,
            sample_n: 600,
            template_subdivisions: 2,
            seed: 0,
            checkpoint_every: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<(), FlowError> {
        self.arch.validate()?;
        self.flow.validate()?;
        self.weights.validate()?;
        if self.arch.n != 3 {
            return Err(FlowError::Config("mesh training needs 3D points".into()));
        }
        if self.sample_n == 0 {
            return Err(FlowError::Config("sample count must be positive".into()));
        }
        if !(self.optimizer.lr > 0.0) {
            return Err(FlowError::Config("learning rate must be positive".into()));
        }
        Ok(())
    }

    pub fn template(&self) -> Result<Mesh<f64>, FlowError> {
        Ok(icosphere(self.template_subdivisions)?)
    }

    pub fn init_params(&self) -> Result<NmfParams, FlowError> {
        use rand::SeedableRng;
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(self.seed);
        NmfParams::init(&self.arch, &mut rng)
    }
}

/// Seed for step `step` of a run seeded with `seed`.
pub fn step_seed(seed: u64, step: usize) -> u64 {
    seed ^ (step as u64 + 1).wrapping_mul(0x9E37_79B9_7F4A_7C15)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossRecord {
    pub step: usize,
    pub loss: f64,
    pub vertex: f64,
    pub surface1: f64,
    pub surface2: f64,
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub params: NmfParams,
    pub history: Vec<LossRecord>,
}

fn loss_csv(history: &[LossRecord]) -> String {
    let mut out = String::from("step,loss,L_v,L_p1,L_p2\n");
    for r in history {
        let _ = writeln!(out, "{},{:e},{:e},{:e},{:e}", r.step, r.loss, r.vertex, r.surface1, r.surface2);
    }
    out
}

/// Writes weights, the run configuration and the loss log into `dir`.
pub fn save_checkpoint(
    dir: impl AsRef<Path>,
    params: &NmfParams,
    config: &TrainConfig,
    history: &[LossRecord],
) -> Result<(), FlowError> {
    let dir = dir.as_ref();
    save_weights(dir, &named_leaves(params))?;
    fs::write(dir.join(CONFIG_FILE), serde_json::to_string_pretty(config)?)?;
    fs::write(dir.join(LOSS_FILE), loss_csv(history))?;
    Ok(())
}

/// Reads a checkpoint written by [`save_checkpoint`]; names and shapes must
/// match the architecture in its configuration.
pub fn load_checkpoint(dir: impl AsRef<Path>) -> Result<(TrainConfig, NmfParams), FlowError> {
    let dir = dir.as_ref();
    let config: TrainConfig = serde_json::from_str(&fs::read_to_string(dir.join(CONFIG_FILE))?)?;
    config.arch.validate()?;
    let structure = NmfParams::identity(&config.arch)?;
    let expected = named_leaves(&structure);
    let stored = load_weights(dir)?;
    if stored.len() != expected.len() {
        return Err(FlowError::Config(format!(
            "checkpoint has {} tensors, architecture needs {}",
            stored.len(),
            expected.len()
        )));
    }
    for ((name, t), (want, w)) in stored.iter().zip(&expected) {
        if name != want || t.shape() != w.shape() {
            return Err(FlowError::Config(format!(
                "checkpoint tensor `{name}` {:?} does not match `{want}` {:?}",
                t.shape(),
                w.shape()
            )));
        }
    }
    let params = replace_leaves(&structure, stored.into_iter().map(|(_, t)| t));
    Ok((config, params))
}

/// Trains `params` on `targets` (each normalised to the unit sphere).
///
/// A non-finite loss or gradient stops the run: the parameters from before
/// the failing step are checkpointed (when `checkpoint_dir` is given) and
/// [`FlowError::Diverged`] is returned.
pub fn train(
    targets: &[Mesh<f64>],
    params: NmfParams,
    config: &TrainConfig,
    checkpoint_dir: Option<&Path>,
) -> Result<TrainOutcome, FlowError> {
    config.validate()?;
    if targets.is_empty() {
        return Err(FlowError::Config("no training targets".into()));
    }
    let targets: Vec<Mesh<f64>> = targets.iter().map(unit_sphere_normalize).collect();
    let template = config.template()?;
    let template_points = Tensor::from_points(template.vertices())?;
    let mut flat: Vec<Tensor> = named_leaves(&params).into_iter().map(|(_, t)| t).collect();
    let mut adam = Adam::new(config.optimizer, &flat);
    let mut history = Vec::with_capacity(config.steps);
    let mut current = params;

    for step in 0..config.steps {
        let seed = step_seed(config.seed, step);
        let target = &targets[step % targets.len()];
        let attempt = (|| -> Result<(LossRecord, Vec<Tensor>), FlowError> {
            let cloud = sample_surface(target, config.sample_n, seed)?;
            let tape = Tape::new();
            let p = bind(&current, &tape);
            let x = tape.constant(template_points.clone());
            let t = tape.constant(Tensor::from_points(cloud.points())?);
            let preds = nmf_forward_on_tape(&x, &t, &p, &config.flow)?;
            let (loss, parts) = nmf_loss_on_tape(&preds, template.faces(), &t, &config.weights, config.sample_n, seed)?;
            if !parts.total.is_finite() {
                return Err(FlowError::Diverged { step, reason: "non-finite loss".into() });
            }
            let grads = tape.backward(&loss)?;
            let grads: Vec<Tensor> = named_leaves(&p).iter().map(|(_, v)| grads.get(v)).collect();
            if grads.iter().any(|g| !g.is_finite()) {
                return Err(FlowError::Diverged { step, reason: "non-finite gradient".into() });
            }
            let record =
                LossRecord { step, loss: parts.total, vertex: parts.vertex, surface1: parts.surface1, surface2: parts.surface2 };
            Ok((record, grads))
        })();
        let (record, grads) = match attempt {
            Ok(ok) => ok,
            Err(e) => {
                let e = match e {
                    FlowError::Ode(_) | FlowError::Autodiff(AutodiffError::NonFinite(_)) => {
                        FlowError::Diverged { step, reason: e.to_string() }
                    }
                    other => other,
                };
                if e.is_numerical() {
                    if let Some(dir) = checkpoint_dir {
                        save_checkpoint(dir, &current, config, &history)?;
                    }
                }
                return Err(e);
            }
        };
        adam.step_with_lr(&mut flat, &grads, config.optimizer.lr_at(step))?;
        current = replace_leaves(&current, flat.iter().cloned());
        history.push(record);
        if let Some(dir) = checkpoint_dir {
            if config.checkpoint_every > 0 && (step + 1) % config.checkpoint_every == 0 {
                save_checkpoint(dir, &current, config, &history)?;
            }
        }
    }
    if let Some(dir) = checkpoint_dir {
        save_checkpoint(dir, &current, config, &history)?;
    }
    Ok(TrainOutcome { params: current, history })
}
