//! Indexed triangle meshes, template generation, surface sampling and OBJ I/O.

mod icosphere;
mod obj;
mod sample;
mod topology;

pub use icosphere::{icosphere, MAX_SUBDIVISIONS};
pub use obj::{load_obj, parse_obj, save_obj, write_obj};
pub use sample::{draw_face_samples, sample_surface, FaceSample, PointCloud};
pub use topology::Topology;

use thiserror::Error;

use crate::scalar::{self, Real, Vec3};

#[derive(Debug, Error)]
pub enum MeshError {
    #[error("mesh needs at least 3 vertices and 1 face (got {vertices} vertices, {faces} faces)")]
    TooSmall { vertices: usize, faces: usize },
    #[error("face {face} references vertex {index} but the mesh has {count} vertices")]
    FaceIndexOutOfRange { face: usize, index: usize, count: usize },
    #[error("face {face} repeats a vertex index")]
    DegenerateFace { face: usize },
    #[error("icosphere subdivision level {0} exceeds the limit of {MAX_SUBDIVISIONS}")]
    SubdivisionLimit(u32),
    #[error("every face has zero area")]
    ZeroArea,
    #[error("point cloud has {points} points but {normals} normals")]
    NormalCount { points: usize, normals: usize },
    #[error("normal {index} is not unit length")]
    NonUnitNormal { index: usize },
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("line {line}: vertex index {index} out of range ({count} vertices)")]
    ObjIndexOutOfRange { line: usize, index: i64, count: usize },
    #[error("line {line}: index {index} does not resolve to a positive vertex index")]
    NonPositiveIndex { line: usize, index: i64 },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Indexed triangle mesh.
///
/// Faces are wound counter-clockwise when seen from outside, so the right-hand
/// normal of each face points outward.
#[derive(Debug, Clone, PartialEq)]
pub struct Mesh<T> {
    vertices: Vec<Vec3<T>>,
    faces: Vec<[usize; 3]>,
}

impl<T: Real> Mesh<T> {
    pub fn new(vertices: Vec<Vec3<T>>, faces: Vec<[usize; 3]>) -> Result<Self, MeshError> {
        if vertices.len() < 3 || faces.is_empty() {
            return Err(MeshError::TooSmall { vertices: vertices.len(), faces: faces.len() });
        }
        let count = vertices.len();
        for (fi, f) in faces.iter().enumerate() {
            if let Some(&index) = f.iter().find(|&&i| i >= count) {
                return Err(MeshError::FaceIndexOutOfRange { face: fi, index, count });
            }
            if f[0] == f[1] || f[1] == f[2] || f[0] == f[2] {
                return Err(MeshError::DegenerateFace { face: fi });
            }
        }
        Ok(Self { vertices, faces })
    }

    pub fn vertices(&self) -> &[Vec3<T>] {
        &self.vertices
    }

    pub fn faces(&self) -> &[[usize; 3]] {
        &self.faces
    }

    pub fn vertex_count(&self) -> usize {
        self.vertices.len()
    }

    pub fn face_count(&self) -> usize {
        self.faces.len()
    }

    /// Same connectivity, new positions.
    ///
    /// # Panics
    /// If `vertices` has a different length than the current vertex list.
    pub fn with_vertices(&self, vertices: Vec<Vec3<T>>) -> Self {
        assert_eq!(vertices.len(), self.vertices.len(), "vertex count must not change");
        Self { vertices, faces: self.faces.clone() }
    }

    pub fn into_parts(self) -> (Vec<Vec3<T>>, Vec<[usize; 3]>) {
        (self.vertices, self.faces)
    }

    pub fn triangle(&self, face: usize) -> [Vec3<T>; 3] {
        let [a, b, c] = self.faces[face];
        [self.vertices[a], self.vertices[b], self.vertices[c]]
    }

    /// Right-hand normal scaled by twice the face area.
    pub fn face_area_vector(&self, face: usize) -> Vec3<T> {
        let [a, b, c] = self.triangle(face);
        scalar::cross(scalar::sub(b, a), scalar::sub(c, a))
    }

    pub fn face_area(&self, face: usize) -> T {
        scalar::norm(self.face_area_vector(face)) * T::lit(0.5)
    }

    /// Unit normal, or zero for a zero-area face.
    pub fn face_normal(&self, face: usize) -> Vec3<T> {
        scalar::normalize(self.face_area_vector(face))
    }

    pub fn topology(&self) -> Topology {
        Topology::build(self)
    }

    /// Converts the vertex positions to another scalar type.
    pub fn cast<U: Real>(&self) -> Mesh<U> {
        Mesh {
            vertices: self
                .vertices
                .iter()
                .map(|v| v.map(|c| U::lit(c.as_f64())))
                .collect(),
            faces: self.faces.clone(),
        }
    }
}

/// Translates the vertex centroid to the origin and scales uniformly so the
/// farthest vertex lies on the unit sphere. A mesh whose vertices all coincide
/// is only translated.
pub fn unit_sphere_normalize<T: Real>(mesh: &Mesh<T>) -> Mesh<T> {
    let n = T::from_usize(mesh.vertices.len()).unwrap();
    let mut centroid = [T::zero(); 3];
    for v in &mesh.vertices {
        centroid = scalar::add(centroid, *v);
    }
    let centroid = scalar::scale(centroid, T::one() / n);
    let centered: Vec<Vec3<T>> = mesh.vertices.iter().map(|v| scalar::sub(*v, centroid)).collect();
    let radius = centered.iter().map(|v| scalar::norm(*v)).fold(T::zero(), T::max);
    let vertices = if radius > T::zero() {
        centered.into_iter().map(|v| scalar::scale(v, T::one() / radius)).collect()
    } else {
        centered
    };
    mesh.with_vertices(vertices)
}
