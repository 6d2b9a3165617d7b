use super::tritri::{triangles_intersect, DEGENERACY_EPS};
use crate::mesh::Mesh;
use crate::scalar::{Real, Vec3};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Aabb<T> {
    pub min: Vec3<T>,
    pub max: Vec3<T>,
}

impl<T: Real> Aabb<T> {
    pub fn empty() -> Self {
        Self { min: [T::infinity(); 3], max: [T::neg_infinity(); 3] }
    }

    pub fn from_points(points: &[Vec3<T>]) -> Self {
        let mut b = Self::empty();
        for p in points {
            b.grow(*p);
        }
        b
    }

    pub fn grow(&mut self, p: Vec3<T>) {
        for k in 0..3 {
            self.min[k] = self.min[k].min(p[k]);
            self.max[k] = self.max[k].max(p[k]);
        }
    }

    pub fn union(&self, other: &Self) -> Self {
        let mut b = *self;
        b.grow(other.min);
        b.grow(other.max);
        b
    }

    pub fn overlaps(&self, other: &Self) -> bool {
        (0..3).all(|k| self.min[k] <= other.max[k] && other.min[k] <= self.max[k])
    }

    pub fn contains(&self, other: &Self) -> bool {
        (0..3).all(|k| self.min[k] <= other.min[k] && other.max[k] <= self.max[k])
    }

    pub fn expanded(&self, margin: T) -> Self {
        Self { min: self.min.map(|c| c - margin), max: self.max.map(|c| c + margin) }
    }

    fn longest_axis(&self) -> usize {
        let e = [0, 1, 2].map(|k| self.max[k] - self.min[k]);
        if e[0] >= e[1] && e[0] >= e[2] {
            0
        } else if e[1] >= e[2] {
            1
        } else {
            2
        }
    }
}

#[derive(Debug, Clone)]
enum NodeKind {
    Leaf { start: usize, end: usize },
    Inner { left: usize, right: usize },
}

#[derive(Debug, Clone)]
struct Node<T> {
    bounds: Aabb<T>,
    kind: NodeKind,
}

/// Bounding-volume hierarchy over the faces of a mesh, split at the centroid
/// median of the longest axis.
#[derive(Debug, Clone)]
pub struct Bvh<T> {
    nodes: Vec<Node<T>>,
    order: Vec<usize>,
    face_bounds: Vec<Aabb<T>>,
    leaf_size: usize,
}

impl<T: Real> Bvh<T> {
    pub fn build(mesh: &Mesh<T>, leaf_size: usize) -> Self {
        let leaf_size = leaf_size.max(1);
        let face_bounds: Vec<Aabb<T>> = (0..mesh.face_count())
            .map(|f| Aabb::from_points(&mesh.triangle(f)))
            .collect();
        let centroids: Vec<Vec3<T>> = face_bounds
            .iter()
            .map(|b| [0, 1, 2].map(|k| (b.min[k] + b.max[k]) * T::lit(0.5)))
            .collect();
        let mut bvh = Self {
            nodes: Vec::with_capacity(2 * mesh.face_count() / leaf_size + 1),
            order: (0..mesh.face_count()).collect(),
            face_bounds,
            leaf_size,
        };
        bvh.build_node(0, mesh.face_count(), &centroids);
        bvh
    }

    fn build_node(&mut self, start: usize, end: usize, centroids: &[Vec3<T>]) -> usize {
        let bounds = self.order[start..end]
            .iter()
            .fold(Aabb::empty(), |b, &f| b.union(&self.face_bounds[f]));
        let id = self.nodes.len();
        self.nodes.push(Node { bounds, kind: NodeKind::Leaf { start, end } });
        if end - start <= self.leaf_size {
            return id;
        }
        let spread = Aabb::from_points(&self.order[start..end].iter().map(|&f| centroids[f]).collect::<Vec<_>>());
        let axis = spread.longest_axis();
        let mid = (end - start) / 2;
        self.order[start..end].select_nth_unstable_by(mid, |&a, &b| {
            centroids[a][axis]
                .partial_cmp(&centroids[b][axis])
                .unwrap_or(std::cmp::Ordering::Equal)
                .then(a.cmp(&b))
        });
        let left = self.build_node(start, start + mid, centroids);
        let right = self.build_node(start + mid, end, centroids);
        self.nodes[id].kind = NodeKind::Inner { left, right };
        id
    }

    pub fn leaf_size(&self) -> usize {
        self.leaf_size
    }

    /// Calls `visit` for every face whose box overlaps `query`.
    pub fn query(&self, query: &Aabb<T>, mut visit: impl FnMut(usize)) {
        if self.nodes.is_empty() {
            return;
        }
        let mut stack = vec![0usize];
        while let Some(n) = stack.pop() {
            let node = &self.nodes[n];
            if !node.bounds.overlaps(query) {
                continue;
            }
            match node.kind {
                NodeKind::Leaf { start, end } => {
                    for &f in &self.order[start..end] {
                        if self.face_bounds[f].overlaps(query) {
                            visit(f);
                        }
                    }
                }
                NodeKind::Inner { left, right } => {
                    stack.push(right);
                    stack.push(left);
                }
            }
        }
    }

    /// Face lists of every leaf, in tree order.
    pub fn leaves(&self) -> Vec<&[usize]> {
        self.nodes
            .iter()
            .filter_map(|n| match n.kind {
                NodeKind::Leaf { start, end } => Some(&self.order[start..end]),
                NodeKind::Inner { .. } => None,
            })
            .collect()
    }

    /// `true` when every child box lies within its parent's box.
    pub fn is_nested(&self) -> bool {
        self.nodes.iter().all(|n| match n.kind {
            NodeKind::Inner { left, right } => {
                n.bounds.contains(&self.nodes[left].bounds) && n.bounds.contains(&self.nodes[right].bounds)
            }
            NodeKind::Leaf { .. } => true,
        })
    }
}

fn shares_vertex(a: &[usize; 3], b: &[usize; 3]) -> bool {
    a.iter().any(|i| b.contains(i))
}

/// Per-face flag: the face intersects some face it shares no vertex with.
pub fn self_intersecting_faces<T: Real>(mesh: &Mesh<T>) -> Vec<bool> {
    let bvh = Bvh::build(mesh, 4);
    let faces = mesh.faces();
    let tris: Vec<_> = (0..mesh.face_count()).map(|f| mesh.triangle(f)).collect();
    let margin = T::lit(DEGENERACY_EPS);
    let mut flagged = vec![false; faces.len()];
    for f in 0..faces.len() {
        let query = bvh.face_bounds[f].expanded(margin);
        bvh.query(&query, |g| {
            if g > f && !shares_vertex(&faces[f], &faces[g]) && triangles_intersect(&tris[f], &tris[g]) {
                flagged[f] = true;
                flagged[g] = true;
            }
        });
    }
    flagged
}

/// All-pairs version of [`self_intersecting_faces`], used as a reference.
pub fn self_intersecting_faces_brute_force<T: Real>(mesh: &Mesh<T>) -> Vec<bool> {
    let faces = mesh.faces();
    let tris: Vec<_> = (0..mesh.face_count()).map(|f| mesh.triangle(f)).collect();
    let mut flagged = vec![false; faces.len()];
    for f in 0..faces.len() {
        for g in f + 1..faces.len() {
            if !shares_vertex(&faces[f], &faces[g]) && triangles_intersect(&tris[f], &tris[g]) {
                flagged[f] = true;
                flagged[g] = true;
            }
        }
    }
    flagged
}

/// Percentage of faces that intersect a non-neighbouring face.
pub fn self_intersections<T: Real>(mesh: &Mesh<T>) -> f64 {
    let flagged = self_intersecting_faces(mesh);
    100.0 * flagged.iter().filter(|&&f| f).count() as f64 / flagged.len() as f64
}
