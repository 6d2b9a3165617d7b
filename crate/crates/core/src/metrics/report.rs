use serde::{Deserialize, Serialize};

use super::{chamfer, nm_edges, nm_faces, nm_vertices, normal_consistency, self_intersections, MetricsError};
use crate::mesh::{sample_surface, unit_sphere_normalize, Mesh};
use crate::scalar::Real;

/// Manifoldness and accuracy columns for one predicted mesh.
///
/// `nm_vertices` and `nm_edges` are per 10^5, `nm_faces` and
/// `self_intersection` are percentages, `chamfer_l2` is scaled by 10^3.
/// The accuracy fields are `None` when no reference mesh was given and
/// serialise as `null`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifoldReport {
    pub nm_vertices: f64,
    pub nm_edges: f64,
    pub nm_faces: f64,
    pub self_intersection: f64,
    pub chamfer_l2: Option<f64>,
    pub normal_consistency: Option<f64>,
}

/// Scales both meshes into the unit sphere, computes the four manifoldness
/// metrics on the prediction and, given a reference, Chamfer and normal
/// consistency over `sample_n` points drawn from each mesh with `seed`.
pub fn full_report<T: Real>(
    predicted: &Mesh<T>,
    reference: Option<&Mesh<T>>,
    sample_n: usize,
    seed: u64,
) -> Result<ManifoldReport, MetricsError> {
    let pred = unit_sphere_normalize(predicted);
    let mut report = ManifoldReport {
        nm_vertices: nm_vertices(&pred),
        nm_edges: nm_edges(&pred),
        nm_faces: nm_faces(&pred),
        self_intersection: self_intersections(&pred),
        chamfer_l2: None,
        normal_consistency: None,
    };
    if let Some(reference) = reference {
        if sample_n == 0 {
            return Err(MetricsError::NoSamples);
        }
        let reference = unit_sphere_normalize(reference);
        let p = sample_surface(&pred, sample_n, seed)?;
        let q = sample_surface(&reference, sample_n, seed)?;
        report.chamfer_l2 = Some(chamfer(&p, &q)?.as_f64() * 1e3);
        report.normal_consistency = Some(normal_consistency(&p, &q)?.as_f64());
    }
    Ok(report)
}
