use crate::mesh::Mesh;
use crate::scalar::{self, Real};

/// Uniform (umbrella) Laplacian smoothing: each iteration moves every vertex
/// by `lambda` times the offset to the average of its edge neighbours, using
/// the previous iterate for all vertices. Vertices without neighbours stay put.
pub fn laplacian_smooth<T: Real>(mesh: &Mesh<T>, iterations: usize, lambda: T) -> Mesh<T> {
    let neighbors = mesh.topology().vertex_neighbors(mesh.vertex_count());
    let mut current = mesh.vertices().to_vec();
    for _ in 0..iterations {
        let next = current
            .iter()
            .zip(&neighbors)
            .map(|(&v, nbrs)| {
                if nbrs.is_empty() {
                    return v;
                }
                let sum = nbrs.iter().fold([T::zero(); 3], |a, &j| scalar::add(a, current[j]));
                let avg = scalar::scale(sum, T::one() / T::from_usize(nbrs.len()).unwrap());
                scalar::add(v, scalar::scale(scalar::sub(avg, v), lambda))
            })
            .collect();
        current = next;
    }
    mesh.with_vertices(current)
}
