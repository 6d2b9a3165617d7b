use super::{KdTree, MetricsError};
use crate::mesh::PointCloud;
use crate::scalar::{self, Real, Vec3};

/// For each query point, the index of its nearest point in `targets` (lowest
/// index on ties) and the squared distance.
pub fn nearest_neighbors<T: Real>(queries: &[Vec3<T>], targets: &[Vec3<T>]) -> Vec<(usize, T)> {
    let tree = KdTree::new(targets);
    queries
        .iter()
        .map(|q| tree.nearest(*q).expect("targets must be nonempty"))
        .collect()
}

fn mean<T: Real>(values: impl Iterator<Item = T>, n: usize) -> T {
    values.fold(T::zero(), |a, v| a + v) / T::from_usize(n).unwrap()
}

/// Bidirectional Chamfer distance: the mean squared nearest-neighbour distance
/// from `p` to `q` plus the same from `q` to `p`.
///
/// Per-direction means make the value independent of the sample counts; the
/// raw sums would grow linearly with them.
pub fn chamfer<T: Real>(p: &PointCloud<T>, q: &PointCloud<T>) -> Result<T, MetricsError> {
    if p.is_empty() || q.is_empty() {
        return Err(MetricsError::EmptyCloud);
    }
    let forward = mean(nearest_neighbors(p.points(), q.points()).into_iter().map(|(_, d)| d), p.len());
    let backward = mean(nearest_neighbors(q.points(), p.points()).into_iter().map(|(_, d)| d), q.len());
    Ok(forward + backward)
}

/// Mean absolute normal agreement with the nearest neighbour, summed over both
/// directions, minus one. Ranges over `[-1, 1]`.
pub fn normal_consistency<T: Real>(p: &PointCloud<T>, q: &PointCloud<T>) -> Result<T, MetricsError> {
    if p.is_empty() || q.is_empty() {
        return Err(MetricsError::EmptyCloud);
    }
    let (Some(np), Some(nq)) = (p.normals(), q.normals()) else {
        return Err(MetricsError::MissingNormals);
    };
    let direction = |from: &[Vec3<T>], from_n: &[Vec3<T>], to: &[Vec3<T>], to_n: &[Vec3<T>]| {
        let pairs = nearest_neighbors(from, to);
        mean(
            pairs.iter().enumerate().map(|(i, &(j, _))| scalar::dot(from_n[i], to_n[j]).abs()),
            from.len(),
        )
    };
    Ok(direction(p.points(), np, q.points(), nq) + direction(q.points(), nq, p.points(), np) - T::one())
}
