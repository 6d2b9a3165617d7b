use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use nmf_core::experiments::{self, ExperimentError, ToyConfig, ToyVariant};
use nmf_core::flow::TrainConfig;

#[derive(Debug, Parser)]
#[command(name = "nmf", version, about = "Manifold mesh reports and neural mesh flow")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Report manifoldness (and accuracy against a reference) of an OBJ mesh.
    Check {
        mesh: PathBuf,
        /// Reference mesh for Chamfer distance and normal consistency.
        #[arg(long = "ref")]
        reference: Option<PathBuf>,
        /// Also write the report to this JSON file.
        #[arg(long)]
        json: Option<PathBuf>,
        /// Surface samples per mesh for the accuracy metrics.
        #[arg(long, default_value_t = 10_000)]
        samples: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Write an icosphere template.
    Sphere {
        #[arg(long, default_value_t = 2)]
        subdiv: u32,
        #[arg(long)]
        out: PathBuf,
    },
    /// Uniform Laplacian smoothing.
    Smooth {
        input: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 3)]
        iters: usize,
        #[arg(long, default_value_t = 0.5)]
        lambda: f64,
    },
    /// Circle-to-star comparison of direct regression and a velocity field.
    Toy2d {
        #[arg(long, value_delimiter = ',', default_value = "0,1,2,3,4")]
        seeds: Vec<u64>,
        #[arg(long)]
        steps: Option<usize>,
        /// Variant tags to run (chamfer, chamfer+edge, chamfer+edge+laplacian, node).
        #[arg(long, value_delimiter = ',')]
        variants: Option<Vec<ToyVariant>>,
        #[arg(long)]
        edge_weight: Option<f64>,
        #[arg(long)]
        laplacian_weight: Option<f64>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Train a model on one or more target meshes and checkpoint it.
    Fit {
        /// An OBJ file or a directory of them.
        #[arg(long)]
        targets: PathBuf,
        /// JSON training configuration; omitted fields take their defaults.
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        steps: Option<usize>,
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Deform the template towards a target with a trained checkpoint.
    Flow {
        #[arg(long)]
        ckpt: PathBuf,
        #[arg(long)]
        target: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Also write the meshes after the first two blocks.
        #[arg(long)]
        all_blocks: bool,
    },
}

fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T, ExperimentError> {
    let text = fs::read_to_string(path).map_err(|e| ExperimentError::Io { path: path.display().to_string(), source: e })?;
    Ok(serde_json::from_str(&text)?)
}

fn run(cli: Cli) -> Result<(), ExperimentError> {
    match cli.command {
        Command::Check { mesh, reference, json, samples, seed } => {
            let report = experiments::check(&mesh, reference.as_deref(), samples, seed)?;
            let text = serde_json::to_string_pretty(&report)?;
            if let Some(path) = json {
                fs::write(&path, &text).map_err(|e| ExperimentError::Io { path: path.display().to_string(), source: e })?;
            }
            println!("{text}");
        }
        Command::Sphere { subdiv, out } => {
            let mesh = experiments::sphere(subdiv, &out)?;
            println!("wrote {} ({} vertices, {} faces)", out.display(), mesh.vertex_count(), mesh.face_count());
        }
        Command::Smooth { input, out, iters, lambda } => {
            experiments::smooth(&input, &out, iters, lambda)?;
            println!("wrote {}", out.display());
        }
        Command::Toy2d { seeds, steps, variants, edge_weight, laplacian_weight, out } => {
            let mut cfg = ToyConfig::default();
            if let Some(s) = steps {
                cfg.steps = s;
            }
            if let Some(w) = edge_weight {
                cfg.edge_weight = w;
            }
            if let Some(w) = laplacian_weight {
                cfg.laplacian_weight = w;
            }
            let variants = variants.unwrap_or_else(|| ToyVariant::ALL.to_vec());
            let results = experiments::toy2d(&seeds, &variants, &cfg)?;
            experiments::write_toy_outputs(&out, &cfg, &results)?;
            for r in &results {
                match &r.diverged {
                    Some(reason) => eprintln!("{} seed {}: diverged: {reason}", r.variant, r.seed),
                    None => println!("{:<24} seed {}  intersections {:>3}  chamfer {:.3e}", r.variant, r.seed, r.intersections, r.chamfer),
                }
            }
        }
        Command::Fit { targets, config, out, steps, seed } => {
            let mut cfg: TrainConfig = match config {
                Some(path) => read_json(&path)?,
                None => TrainConfig::default(),
            };
            if let Some(s) = steps {
                cfg.steps = s;
            }
            if let Some(s) = seed {
                cfg.seed = s;
            }
            let meshes = experiments::load_targets(&targets)?;
            let outcome = experiments::fit(&meshes, &cfg, &out)?;
            if let (Some(first), Some(last)) = (outcome.history.first(), outcome.history.last()) {
                println!("loss {:.4e} -> {:.4e} over {} steps", first.loss, last.loss, outcome.history.len());
            }
            println!("checkpoint in {}", out.display());
        }
        Command::Flow { ckpt, target, out, all_blocks } => {
            let outputs = experiments::flow(&ckpt, &target, &out, all_blocks)?;
            for path in outputs.written {
                println!("wrote {}", path.display());
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
