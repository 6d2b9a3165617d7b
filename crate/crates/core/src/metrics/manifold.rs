use crate::mesh::{Mesh, Topology};
use crate::scalar::{self, Real};

/// Edges whose incident-face count differs from two.
pub fn non_manifold_edge_count(topology: &Topology) -> usize {
    topology.edge_faces.iter().filter(|f| f.len() != 2).count()
}

/// Non-manifold edges per 10^5 edges.
pub fn nm_edges<T: Real>(mesh: &Mesh<T>) -> f64 {
    let t = mesh.topology();
    1e5 * non_manifold_edge_count(&t) as f64 / t.edges.len() as f64
}

/// Vertices whose incident faces split into more than one edge-connected fan.
pub fn non_manifold_vertices<T: Real>(mesh: &Mesh<T>, topology: &Topology) -> Vec<usize> {
    let faces = mesh.faces();
    let mut out = Vec::new();
    for (v, incident) in topology.vertex_faces.iter().enumerate() {
        if incident.is_empty() {
            continue;
        }
        // union-find over the fan; two faces join when they share another vertex
        // besides v, i.e. an edge through v
        let mut parent: Vec<usize> = (0..incident.len()).collect();
        fn find(p: &mut [usize], mut i: usize) -> usize {
            while p[i] != i {
                p[i] = p[p[i]];
                i = p[i];
            }
            i
        }
        for i in 0..incident.len() {
            for j in i + 1..incident.len() {
                let fi = faces[incident[i]];
                let fj = faces[incident[j]];
                let shares_edge = fi.iter().any(|&a| a != v && fj.contains(&a));
                if shares_edge {
                    let (ri, rj) = (find(&mut parent, i), find(&mut parent, j));
                    if ri != rj {
                        parent[ri] = rj;
                    }
                }
            }
        }
        let components = (0..incident.len()).filter(|&i| find(&mut parent, i) == i).count();
        if components != 1 {
            out.push(v);
        }
    }
    out
}

/// Non-manifold vertices per 10^5 vertices.
pub fn nm_vertices<T: Real>(mesh: &Mesh<T>) -> f64 {
    let t = mesh.topology();
    1e5 * non_manifold_vertices(mesh, &t).len() as f64 / mesh.vertex_count() as f64
}

/// Adjacent face pairs (one per shared edge) whose normals point apart.
pub fn flipped_pair_count<T: Real>(mesh: &Mesh<T>, topology: &Topology) -> usize {
    let normals: Vec<_> = (0..mesh.face_count()).map(|f| mesh.face_normal(f)).collect();
    topology
        .adjacent_face_pairs()
        .filter(|&(f, g)| scalar::dot(normals[f], normals[g]) < T::zero())
        .count()
}

/// Adjacent face pairs with a negative normal dot product, as a percentage of
/// the edge count. Any dihedral sharper than 90 degrees is flagged, not only
/// flipped orientation.
pub fn nm_faces<T: Real>(mesh: &Mesh<T>) -> f64 {
    let t = mesh.topology();
    100.0 * flipped_pair_count(mesh, &t) as f64 / t.edges.len() as f64
}
