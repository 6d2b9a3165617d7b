//! Manifoldness and geometric-accuracy metrics.

mod bvh;
mod chamfer;
mod kdtree;
mod manifold;
mod report;
mod smooth;
mod tritri;

pub use bvh::{self_intersecting_faces, self_intersecting_faces_brute_force, self_intersections, Aabb, Bvh};
pub use chamfer::{chamfer, nearest_neighbors, normal_consistency};
pub use kdtree::KdTree;
pub use manifold::{
    flipped_pair_count, nm_edges, nm_faces, nm_vertices, non_manifold_edge_count, non_manifold_vertices,
};
pub use report::{full_report, ManifoldReport};
pub use smooth::laplacian_smooth;
pub use tritri::{triangles_intersect, DEGENERACY_EPS};

use thiserror::Error;

use crate::mesh::MeshError;

#[derive(Debug, Error)]
pub enum MetricsError {
    #[error("point cloud is empty")]
    EmptyCloud,
    #[error("point cloud has no normals")]
    MissingNormals,
    #[error("sample count must be at least 1 when a reference mesh is given")]
    NoSamples,
    #[error(transparent)]
    Mesh(#[from] MeshError),
}
