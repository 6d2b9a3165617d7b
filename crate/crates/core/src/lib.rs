//! Manifold mesh metrics, a reverse-mode autodiff tape, and conditional
//! neural-ODE mesh deformation built on top of them.

pub mod autodiff;
pub mod experiments;
pub mod fixtures;
pub mod flow;
pub mod mesh;
pub mod metrics;
pub mod scalar;

pub use scalar::Real;

/// Double-precision triangle mesh, the precision used by training and reports.
pub type Mesh = mesh::Mesh<f64>;
/// Single-precision triangle mesh.
pub type Mesh32 = mesh::Mesh<f32>;
/// Double-precision oriented point cloud.
pub type PointCloud = mesh::PointCloud<f64>;
