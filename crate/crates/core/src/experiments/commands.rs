use std::fs;
use std::path::{Path, PathBuf};

use super::toy2d::{overlay_svg, results_csv, ToyConfig, ToyResult};
use super::ExperimentError;
use crate::flow::{load_checkpoint, nmf_forward, train, TrainConfig, TrainOutcome};
use crate::mesh::{icosphere, load_obj, sample_surface, save_obj, unit_sphere_normalize, Mesh};
use crate::metrics::{full_report, laplacian_smooth, ManifoldReport};

/// Manifoldness report of the mesh at `path`, with accuracy against `reference`
/// when given.
pub fn check(path: &Path, reference: Option<&Path>, sample_n: usize, seed: u64) -> Result<ManifoldReport, ExperimentError> {
    let mesh: Mesh<f64> = load_obj(path)?;
    let reference = reference.map(load_obj::<f64>).transpose()?;
    Ok(full_report(&mesh, reference.as_ref(), sample_n, seed)?)
}

/// Writes `icosphere(subdivisions)` to `out`.
pub fn sphere(subdivisions: u32, out: &Path) -> Result<Mesh<f64>, ExperimentError> {
    let mesh = icosphere(subdivisions)?;
    save_obj(&mesh, out)?;
    Ok(mesh)
}

/// Laplacian-smooths the mesh at `input` into `out`.
pub fn smooth(input: &Path, out: &Path, iterations: usize, lambda: f64) -> Result<Mesh<f64>, ExperimentError> {
    let mesh: Mesh<f64> = load_obj(input)?;
    let smoothed = laplacian_smooth(&mesh, iterations, lambda);
    save_obj(&smoothed, out)?;
    Ok(smoothed)
}

/// Writes `results.csv` and one overlay SVG per result into `dir`.
pub fn write_toy_outputs(dir: &Path, cfg: &ToyConfig, results: &[ToyResult]) -> Result<(), ExperimentError> {
    fs::create_dir_all(dir).map_err(|e| ExperimentError::io(dir, e))?;
    let csv = dir.join("results.csv");
    fs::write(&csv, results_csv(results)).map_err(|e| ExperimentError::io(&csv, e))?;
    let (template, target) = (cfg.template()?, cfg.target()?);
    for r in results {
        let name = format!("{}_seed{}.svg", r.variant.tag().replace('+', "_"), r.seed);
        let path = dir.join(name);
        fs::write(&path, overlay_svg(&template, &target, r)).map_err(|e| ExperimentError::io(&path, e))?;
    }
    Ok(())
}

/// Target meshes: the OBJ file at `path`, or every `.obj` in the directory
/// in name order.
pub fn load_targets(path: &Path) -> Result<Vec<Mesh<f64>>, ExperimentError> {
    let files: Vec<PathBuf> = if path.is_dir() {
        let mut files: Vec<PathBuf> = fs::read_dir(path)
            .map_err(|e| ExperimentError::io(path, e))?
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|p| p.extension().is_some_and(|x| x.eq_ignore_ascii_case("obj")))
            .collect();
        files.sort();
        files
    } else {
        vec![path.to_path_buf()]
    };
    if files.is_empty() {
        return Err(ExperimentError::Config(format!("no .obj files in {}", path.display())));
    }
    files.iter().map(|f| Ok(load_obj(f)?)).collect()
}

/// Trains from a fresh initialisation and checkpoints into `out`.
pub fn fit(targets: &[Mesh<f64>], config: &TrainConfig, out: &Path) -> Result<TrainOutcome, ExperimentError> {
    let params = config.init_params()?;
    Ok(train(targets, params, config, Some(out))?)
}

/// Predicted meshes after each deformation block.
#[derive(Debug, Clone)]
pub struct FlowOutputs {
    pub meshes: [Mesh<f64>; 3],
    pub written: Vec<PathBuf>,
}

/// Runs the checkpointed model on `target` and writes the final mesh to
/// `out`; with `all_blocks`, the first two blocks' meshes go next to it with
/// `_p0` and `_p1` suffixes.
pub fn flow(ckpt: &Path, target: &Path, out: &Path, all_blocks: bool) -> Result<FlowOutputs, ExperimentError> {
    let (config, params) = load_checkpoint(ckpt)?;
    let target = unit_sphere_normalize(&load_obj::<f64>(target)?);
    let cloud = sample_surface(&target, config.sample_n, config.seed)?;
    let meshes = nmf_forward(&config.template()?, &cloud, &params, &config.flow)?;
    let mut written = vec![out.to_path_buf()];
    save_obj(&meshes[2], out)?;
    if all_blocks {
        let stem = out.file_stem().and_then(|s| s.to_str()).unwrap_or("pred");
        for (i, m) in meshes[..2].iter().enumerate() {
            let path = out.with_file_name(format!("{stem}_p{i}.obj"));
            save_obj(m, &path)?;
            written.push(path);
        }
    }
    Ok(FlowOutputs { meshes, written })
}
