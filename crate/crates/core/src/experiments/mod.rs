//! End-to-end tasks behind the command-line tool: mesh reports, templates,
//! smoothing, the 2D toy comparison, fitting and inference.

mod commands;
mod polygon;
mod toy2d;

pub use commands::{check, flow, fit, load_targets, smooth, sphere, write_toy_outputs, FlowOutputs};
pub use polygon::{
    circle_polygon, edge_intersections_2d, edge_intersections_sweep, intersecting_edge_pairs, segments_intersect,
    star_polygon, Point2, Polygon2D, ORIENT_EPS,
};
pub use toy2d::{
    chamfer_2d, edge_length_regularizer, even_outline, sample_outline, laplacian_regularizer, overlay_svg, results_csv, run_variant, toy2d, toy_mlp,
    ToyConfig, ToyResult, ToyVariant,
};

use thiserror::Error;

use crate::autodiff::AutodiffError;
use crate::flow::FlowError;
use crate::mesh::MeshError;
use crate::metrics::MetricsError;

#[derive(Debug, Error)]
pub enum ExperimentError {
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("invalid polygon: {0}")]
    Polygon(String),
    #[error(transparent)]
    Mesh(#[from] MeshError),
    #[error(transparent)]
    Metrics(#[from] MetricsError),
    #[error(transparent)]
    Flow(#[from] FlowError),
    #[error(transparent)]
    Autodiff(#[from] AutodiffError),
    #[error("{path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl ExperimentError {
    /// `true` when the inputs were fine but the numerics failed.
    pub fn is_numerical(&self) -> bool {
        match self {
            ExperimentError::Flow(e) => e.is_numerical(),
            ExperimentError::Autodiff(AutodiffError::NonFinite(_)) => true,
            _ => false,
        }
    }

    /// Process exit status: 2 for numerical failures, 1 for everything else.
    pub fn exit_code(&self) -> i32 {
        if self.is_numerical() {
            2
        } else {
            1
        }
    }

    pub(crate) fn io(path: &std::path::Path, source: std::io::Error) -> Self {
        ExperimentError::Io { path: path.display().to_string(), source }
    }
}
