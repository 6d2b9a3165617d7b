use crate::scalar::{self, Real, Vec3};

#[derive(Debug, Clone, Copy)]
struct KdNode {
    point: usize,
    axis: u8,
    left: Option<usize>,
    right: Option<usize>,
}

/// Static 3D k-d tree answering exact nearest-neighbour queries.
///
/// Ties on squared distance resolve to the lowest point index, so results are
/// identical to a linear scan.
#[derive(Debug, Clone)]
pub struct KdTree<'a, T> {
    points: &'a [Vec3<T>],
    nodes: Vec<KdNode>,
    root: Option<usize>,
}

impl<'a, T: Real> KdTree<'a, T> {
    pub fn new(points: &'a [Vec3<T>]) -> Self {
        let mut tree = Self { points, nodes: Vec::with_capacity(points.len()), root: None };
        let mut idx: Vec<usize> = (0..points.len()).collect();
        tree.root = tree.build(&mut idx, 0);
        tree
    }

    fn build(&mut self, idx: &mut [usize], depth: usize) -> Option<usize> {
        if idx.is_empty() {
            return None;
        }
        let axis = depth % 3;
        let mid = idx.len() / 2;
        let pts = self.points;
        idx.select_nth_unstable_by(mid, |&a, &b| {
            pts[a][axis]
                .partial_cmp(&pts[b][axis])
                .unwrap_or(std::cmp::Ordering::Equal)
                .then(a.cmp(&b))
        });
        let point = idx[mid];
        let (lo, hi) = idx.split_at_mut(mid);
        let left = self.build(lo, depth + 1);
        let right = self.build(&mut hi[1..], depth + 1);
        self.nodes.push(KdNode { point, axis: axis as u8, left, right });
        Some(self.nodes.len() - 1)
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    /// Index and squared distance of the closest point, or `None` when empty.
    pub fn nearest(&self, q: Vec3<T>) -> Option<(usize, T)> {
        let mut best = (usize::MAX, T::infinity());
        self.search(self.root, q, &mut best);
        (best.0 != usize::MAX).then_some(best)
    }

    fn search(&self, node: Option<usize>, q: Vec3<T>, best: &mut (usize, T)) {
        let Some(n) = node else { return };
        let node = self.nodes[n];
        let d = scalar::dist2(q, self.points[node.point]);
        if d < best.1 || (d == best.1 && node.point < best.0) {
            *best = (node.point, d);
        }
        let axis = node.axis as usize;
        let diff = q[axis] - self.points[node.point][axis];
        let (near, far) = if diff < T::zero() { (node.left, node.right) } else { (node.right, node.left) };
        self.search(near, q, best);
        // `<=` keeps equal-distance candidates with lower indices reachable
        if diff * diff <= best.1 {
            self.search(far, q, best);
        }
    }
}
