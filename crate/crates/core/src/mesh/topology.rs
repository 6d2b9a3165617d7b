use std::collections::BTreeMap;

use super::Mesh;
use crate::scalar::Real;

/// Edge and incidence structure derived from a mesh's face list.
///
/// Edges are stored as `[min, max]` vertex pairs in ascending order.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Topology {
    pub edges: Vec<[usize; 2]>,
    /// Faces incident to each edge, parallel to `edges`, in ascending face order.
    pub edge_faces: Vec<Vec<usize>>,
    /// Faces incident to each vertex, in ascending face order.
    pub vertex_faces: Vec<Vec<usize>>,
    /// Faces sharing at least one edge with each face (sorted, no duplicates).
    pub face_neighbors: Vec<Vec<usize>>,
}

impl Topology {
    pub fn build<T: Real>(mesh: &Mesh<T>) -> Self {
        let mut edge_map: BTreeMap<[usize; 2], Vec<usize>> = BTreeMap::new();
        let mut vertex_faces = vec![Vec::new(); mesh.vertex_count()];
        for (fi, f) in mesh.faces().iter().enumerate() {
            for k in 0..3 {
                let (a, b) = (f[k], f[(k + 1) % 3]);
                edge_map.entry([a.min(b), a.max(b)]).or_default().push(fi);
                vertex_faces[f[k]].push(fi);
            }
        }
        let (edges, edge_faces): (Vec<_>, Vec<_>) = edge_map.into_iter().unzip();

        let mut face_neighbors = vec![Vec::new(); mesh.face_count()];
        for faces in &edge_faces {
            for &f in faces {
                face_neighbors[f].extend(faces.iter().copied().filter(|&g| g != f));
            }
        }
        for n in &mut face_neighbors {
            n.sort_unstable();
            n.dedup();
        }
        Self { edges, edge_faces, vertex_faces, face_neighbors }
    }

    /// Unordered face pairs `(f, g)`, `f < g`, sharing an edge; one entry per
    /// shared edge, in edge order.
    pub fn adjacent_face_pairs(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        self.edge_faces.iter().flat_map(|faces| {
            faces
                .iter()
                .enumerate()
                .flat_map(move |(i, &f)| faces[i + 1..].iter().map(move |&g| (f.min(g), f.max(g))))
        })
    }

    /// Vertices joined to each vertex by an edge, sorted ascending.
    pub fn vertex_neighbors(&self, vertex_count: usize) -> Vec<Vec<usize>> {
        let mut n = vec![Vec::new(); vertex_count];
        for &[a, b] in &self.edges {
            n[a].push(b);
            n[b].push(a);
        }
        for list in &mut n {
            list.sort_unstable();
        }
        n
    }
}
