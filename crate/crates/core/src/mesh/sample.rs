use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{Mesh, MeshError};
use crate::scalar::{self, Real, Vec3};

/// Points on a surface, optionally carrying unit normals.
#[derive(Debug, Clone, PartialEq)]
pub struct PointCloud<T> {
    points: Vec<Vec3<T>>,
    normals: Option<Vec<Vec3<T>>>,
}

impl<T: Real> PointCloud<T> {
    pub fn new(points: Vec<Vec3<T>>) -> Self {
        Self { points, normals: None }
    }

    /// Pairs points with normals; each normal must have length `1 ± 1e-6`.
    pub fn with_normals(points: Vec<Vec3<T>>, normals: Vec<Vec3<T>>) -> Result<Self, MeshError> {
        if normals.len() != points.len() {
            return Err(MeshError::NormalCount { points: points.len(), normals: normals.len() });
        }
        let tol = T::lit(1e-6).max(T::epsilon() * T::lit(8.0));
        if let Some(index) = normals
            .iter()
            .position(|n| (scalar::norm(*n) - T::one()).abs() > tol)
        {
            return Err(MeshError::NonUnitNormal { index });
        }
        Ok(Self { points, normals: Some(normals) })
    }

    pub fn points(&self) -> &[Vec3<T>] {
        &self.points
    }

    pub fn normals(&self) -> Option<&[Vec3<T>]> {
        self.normals.as_deref()
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }
}

/// One area-weighted surface draw: the chosen face and barycentric weights
/// for its three corners.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FaceSample {
    pub face: usize,
    pub barycentric: [f64; 3],
}

/// Draws `n` face samples with probability proportional to `areas`, then a
/// uniform point inside the face via `(1-√r1, √r1(1-r2), √r1·r2)`.
/// Zero-area faces are never chosen.
pub fn draw_face_samples<R: Rng>(areas: &[f64], n: usize, rng: &mut R) -> Result<Vec<FaceSample>, MeshError> {
    let mut cumulative = Vec::with_capacity(areas.len());
    let mut total = 0.0;
    for &a in areas {
        total += a.max(0.0);
        cumulative.push(total);
    }
    if !(total > 0.0) {
        return Err(MeshError::ZeroArea);
    }
    let samples = (0..n)
        .map(|_| {
            let u = rng.gen::<f64>() * total;
            // first face whose cumulative area exceeds u; zero-area faces never do
            let mut face = cumulative.partition_point(|&c| c <= u);
            if face >= areas.len() {
                face = cumulative.partition_point(|&c| c < total);
            }
            let r1: f64 = rng.gen();
            let r2: f64 = rng.gen();
            let s = r1.sqrt();
            FaceSample { face, barycentric: [1.0 - s, s * (1.0 - r2), s * r2] }
        })
        .collect();
    Ok(samples)
}

/// Area-weighted uniform samples of the surface, each tagged with its face's
/// unit normal. Deterministic for a given seed.
pub fn sample_surface<T: Real>(mesh: &Mesh<T>, n: usize, seed: u64) -> Result<PointCloud<T>, MeshError> {
    let areas: Vec<f64> = (0..mesh.face_count()).map(|f| mesh.face_area(f).as_f64()).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let draws = draw_face_samples(&areas, n, &mut rng)?;
    let mut points = Vec::with_capacity(n);
    let mut normals = Vec::with_capacity(n);
    for s in draws {
        let [a, b, c] = mesh.triangle(s.face);
        let [wa, wb, wc] = s.barycentric.map(T::lit);
        points.push(scalar::add(scalar::add(scalar::scale(a, wa), scalar::scale(b, wb)), scalar::scale(c, wc)));
        normals.push(mesh.face_normal(s.face));
    }
    Ok(PointCloud { points, normals: Some(normals) })
}
