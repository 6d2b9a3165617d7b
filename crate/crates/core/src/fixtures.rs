//! Small hand-built meshes used by tests, the acceptance suite and the CLI.

use crate::mesh::{icosphere, Mesh};
use crate::scalar::{self, Vec3};

/// Flips faces of a convex solid so every normal points away from the
/// vertex centroid.
fn orient_outward(vertices: &[Vec3<f64>], faces: &mut [[usize; 3]]) {
    let n = vertices.len() as f64;
    let c = vertices.iter().fold([0.0; 3], |a, v| scalar::add(a, *v));
    let c = scalar::scale(c, 1.0 / n);
    for f in faces.iter_mut() {
        let [a, b, d] = f.map(|i| vertices[i]);
        let normal = scalar::cross(scalar::sub(b, a), scalar::sub(d, a));
        if scalar::dot(normal, scalar::sub(a, c)) < 0.0 {
            f.swap(1, 2);
        }
    }
}

pub fn triangle() -> Mesh<f64> {
    Mesh::new(vec![[0.0, 0.0, 0.0], [1.0, 0.0, 0.0], [0.0, 1.0, 0.0]], vec![[0, 1, 2]]).unwrap()
}

/// Right-corner tetrahedron with outward winding.
pub fn tetrahedron() -> Mesh<f64> {
    Mesh::new(
        vec![[0.0, 0.0, 0.0], [1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]],
        vec![[0, 2, 1], [0, 1, 3], [0, 3, 2], [1, 2, 3]],
    )
    .unwrap()
}

/// Regular tetrahedron centred at the origin, outward winding.
pub fn regular_tetrahedron() -> Mesh<f64> {
    let v = vec![[1.0, 1.0, 1.0], [1.0, -1.0, -1.0], [-1.0, 1.0, -1.0], [-1.0, -1.0, 1.0]];
    let mut f = vec![[0, 1, 2], [0, 1, 3], [0, 2, 3], [1, 2, 3]];
    orient_outward(&v, &mut f);
    Mesh::new(v, f).unwrap()
}

/// Axis-aligned unit cube split into 12 outward triangles.
pub fn cube() -> Mesh<f64> {
    let v: Vec<Vec3<f64>> = (0..8)
        .map(|i| [(i & 1) as f64, ((i >> 1) & 1) as f64, ((i >> 2) & 1) as f64])
        .collect();
    let quads = [[0, 1, 3, 2], [4, 5, 7, 6], [0, 1, 5, 4], [2, 3, 7, 6], [0, 2, 6, 4], [1, 3, 7, 5]];
    let mut f: Vec<[usize; 3]> = quads.iter().flat_map(|q| [[q[0], q[1], q[2]], [q[0], q[2], q[3]]]).collect();
    orient_outward(&v, &mut f);
    Mesh::new(v, f).unwrap()
}

/// Tetrahedron with an extra triangle hinged on edge (0, 1).
pub fn tetrahedron_with_fin() -> Mesh<f64> {
    let (mut v, mut f) = tetrahedron().into_parts();
    v.push([0.5, -1.0, 0.5]);
    f.push([0, 1, 4]);
    Mesh::new(v, f).unwrap()
}

/// Two tetrahedra touching at a single shared vertex (index 0).
pub fn two_tetrahedra_sharing_vertex() -> Mesh<f64> {
    let (mut v, mut f) = tetrahedron().into_parts();
    v.extend_from_slice(&[[-1.0, 0.0, 0.0], [0.0, -1.0, 0.0], [0.0, 0.0, -1.0]]);
    f.extend_from_slice(&[[0, 4, 5], [0, 6, 4], [0, 5, 6], [4, 6, 5]]);
    Mesh::new(v, f).unwrap()
}

/// Two triangles touching at vertex 0 only.
pub fn two_triangles_sharing_vertex() -> Mesh<f64> {
    Mesh::new(
        vec![[0.0, 0.0, 0.0], [1.0, 0.0, 0.0], [1.0, 1.0, 0.0], [-1.0, 0.0, 0.0], [-1.0, -1.0, 0.0]],
        vec![[0, 1, 2], [0, 3, 4]],
    )
    .unwrap()
}

/// Two regular tetrahedra with disjoint index sets whose surfaces cross.
pub fn interpenetrating_tetrahedra() -> Mesh<f64> {
    let (v, f) = regular_tetrahedron().into_parts();
    let mut verts = v.clone();
    verts.extend(v.iter().map(|p| scalar::add(*p, [0.9, 0.4, 0.2])));
    let mut faces = f.clone();
    faces.extend(f.iter().map(|t| t.map(|i| i + 4)));
    Mesh::new(verts, faces).unwrap()
}

/// Icosphere with one vertex reflected through the origin and pushed out to
/// radius 1.5, so its fan of faces pierces the far side of the sphere. A plain
/// reflection would land exactly on the antipodal vertex.
pub fn pierced_icosphere(subdivisions: u32) -> Mesh<f64> {
    let m = icosphere::<f64>(subdivisions).unwrap();
    let mut v = m.vertices().to_vec();
    v[0] = scalar::scale(v[0], -1.5);
    m.with_vertices(v)
}

/// Genus-0 lumpy ellipsoid: an icosphere pushed radially by a smooth bump
/// field, then squashed along y and z. Radial displacement of a sphere stays
/// embedded, as does the linear squash.
pub fn blob(subdivisions: u32) -> Mesh<f64> {
    let m = icosphere::<f64>(subdivisions).unwrap();
    let v = m
        .vertices()
        .iter()
        .map(|&[x, y, z]| {
            let r = 1.0 + 0.2 * (3.0 * x + 1.0).sin() * (2.0 * y).sin() + 0.12 * (4.0 * z).cos();
            [x * r, 0.6 * y * r, 0.4 * z * r]
        })
        .collect();
    m.with_vertices(v)
}
