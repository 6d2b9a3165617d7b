//! Closed 2D polygons and edge-intersection counting.

use std::f64::consts::PI;

use super::ExperimentError;

pub type Point2 = [f64; 2];

/// Orientation tolerance for the intersection predicate.
pub const ORIENT_EPS: f64 = 1e-12;

/// Closed loop of at least three vertices; edge `i` joins vertex `i` to
/// vertex `i + 1` (wrapping).
#[derive(Debug, Clone, PartialEq)]
pub struct Polygon2D {
    vertices: Vec<Point2>,
}

impl Polygon2D {
    pub fn new(vertices: Vec<Point2>) -> Result<Self, ExperimentError> {
        if vertices.len() < 3 {
            return Err(ExperimentError::Polygon(format!("need at least 3 vertices, got {}", vertices.len())));
        }
        let n = vertices.len();
        if let Some(i) = (0..n).find(|&i| vertices[i] == vertices[(i + 1) % n]) {
            return Err(ExperimentError::Polygon(format!("vertices {i} and {} coincide", (i + 1) % n)));
        }
        if vertices.iter().flatten().any(|x| !x.is_finite()) {
            return Err(ExperimentError::Polygon("non-finite vertex".into()));
        }
        Ok(Self { vertices })
    }

    pub fn vertices(&self) -> &[Point2] {
        &self.vertices
    }

    pub fn len(&self) -> usize {
        self.vertices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vertices.is_empty()
    }

    pub fn edge(&self, i: usize) -> (Point2, Point2) {
        (self.vertices[i], self.vertices[(i + 1) % self.len()])
    }

    /// `true` when edges `i` and `j` share an endpoint index.
    pub fn edges_adjacent(&self, i: usize, j: usize) -> bool {
        let n = self.len();
        i == j || (i + 1) % n == j || (j + 1) % n == i
    }
}

/// Regular `n`-gon of radius `r`, first vertex on the positive x axis,
/// counter-clockwise.
pub fn circle_polygon(n: usize, r: f64) -> Result<Polygon2D, ExperimentError> {
    if !(r > 0.0 && r.is_finite()) {
        return Err(ExperimentError::Polygon("radius must be positive".into()));
    }
    Polygon2D::new(
        (0..n)
            .map(|i| {
                let a = 2.0 * PI * i as f64 / n as f64;
                [r * a.cos(), r * a.sin()]
            })
            .collect(),
    )
}

/// Star with `arms` tips at `r_out` and notches at `r_in`, counter-clockwise
/// from a tip on the positive x axis. Each tip-to-notch side is split into
/// `points_per_side` straight segments, so the polygon has
/// `2 * arms * points_per_side` vertices.
pub fn star_polygon(points_per_side: usize, arms: usize, r_in: f64, r_out: f64) -> Result<Polygon2D, ExperimentError> {
    if arms < 3 {
        return Err(ExperimentError::Polygon(format!("a star needs at least 3 arms, got {arms}")));
    }
    if !(0.0 < r_in && r_in < r_out && r_out.is_finite()) {
        return Err(ExperimentError::Polygon(format!("need 0 < r_in < r_out, got {r_in} and {r_out}")));
    }
    if points_per_side == 0 {
        return Err(ExperimentError::Polygon("points per side must be positive".into()));
    }
    let corners: Vec<Point2> = (0..2 * arms)
        .map(|i| {
            let a = PI * i as f64 / arms as f64;
            let r = if i % 2 == 0 { r_out } else { r_in };
            [r * a.cos(), r * a.sin()]
        })
        .collect();
    let mut vertices = Vec::with_capacity(2 * arms * points_per_side);
    for i in 0..corners.len() {
        let (a, b) = (corners[i], corners[(i + 1) % corners.len()]);
        for s in 0..points_per_side {
            let t = s as f64 / points_per_side as f64;
            vertices.push([a[0] + t * (b[0] - a[0]), a[1] + t * (b[1] - a[1])]);
        }
    }
    Polygon2D::new(vertices)
}

fn orient(a: Point2, b: Point2, c: Point2) -> i8 {
    let d = (b[0] - a[0]) * (c[1] - a[1]) - (b[1] - a[1]) * (c[0] - a[0]);
    if d > ORIENT_EPS {
        1
    } else if d < -ORIENT_EPS {
        -1
    } else {
        0
    }
}

/// `c` lies within the bounding box of `a`–`b` (used once collinear).
fn within(a: Point2, b: Point2, c: Point2) -> bool {
    c[0] >= a[0].min(b[0]) && c[0] <= a[0].max(b[0]) && c[1] >= a[1].min(b[1]) && c[1] <= a[1].max(b[1])
}

/// Closed segments `p` and `q` cross or overlap.
pub fn segments_intersect(p: (Point2, Point2), q: (Point2, Point2)) -> bool {
    let (o1, o2) = (orient(p.0, p.1, q.0), orient(p.0, p.1, q.1));
    let (o3, o4) = (orient(q.0, q.1, p.0), orient(q.0, q.1, p.1));
    if o1 * o2 < 0 && o3 * o4 < 0 {
        return true;
    }
    (o1 == 0 && within(p.0, p.1, q.0))
        || (o2 == 0 && within(p.0, p.1, q.1))
        || (o3 == 0 && within(q.0, q.1, p.0))
        || (o4 == 0 && within(q.0, q.1, p.1))
}

/// Pairs `(i, j)`, `i < j`, of non-adjacent edges that intersect.
pub fn intersecting_edge_pairs(poly: &Polygon2D) -> Vec<(usize, usize)> {
    let n = poly.len();
    let mut out = Vec::new();
    for i in 0..n {
        for j in i + 1..n {
            if !poly.edges_adjacent(i, j) && segments_intersect(poly.edge(i), poly.edge(j)) {
                out.push((i, j));
            }
        }
    }
    out
}

/// Number of intersecting non-adjacent edge pairs.
pub fn edge_intersections_2d(poly: &Polygon2D) -> usize {
    intersecting_edge_pairs(poly).len()
}

/// Same count via a left-to-right sweep over edge x-extents, with a
/// parametric intersection test. Kept as an independent cross-check.
pub fn edge_intersections_sweep(poly: &Polygon2D) -> usize {
    let n = poly.len();
    let mut events: Vec<(f64, bool, usize)> = Vec::with_capacity(2 * n);
    for i in 0..n {
        let (a, b) = poly.edge(i);
        events.push((a[0].min(b[0]), false, i));
        events.push((a[0].max(b[0]), true, i));
    }
    // starts before ends at equal x so touching extents are compared
    events.sort_by(|x, y| x.0.total_cmp(&y.0).then(x.1.cmp(&y.1)).then(x.2.cmp(&y.2)));
    let mut active: Vec<usize> = Vec::new();
    let mut count = 0;
    for (_, is_end, i) in events {
        if is_end {
            active.retain(|&j| j != i);
            continue;
        }
        for &j in &active {
            if !poly.edges_adjacent(i, j) && parametric_intersect(poly.edge(i), poly.edge(j)) {
                count += 1;
            }
        }
        active.push(i);
    }
    count
}

fn parametric_intersect(p: (Point2, Point2), q: (Point2, Point2)) -> bool {
    let r = [p.1[0] - p.0[0], p.1[1] - p.0[1]];
    let s = [q.1[0] - q.0[0], q.1[1] - q.0[1]];
    let w = [q.0[0] - p.0[0], q.0[1] - p.0[1]];
    let cross = |a: [f64; 2], b: [f64; 2]| a[0] * b[1] - a[1] * b[0];
    let denom = cross(r, s);
    let scale = (r[0].abs() + r[1].abs()) * (s[0].abs() + s[1].abs());
    if denom.abs() > 1e-12 * scale.max(1e-300) {
        let t = cross(w, s) / denom;
        let u = cross(w, r) / denom;
        return (0.0..=1.0).contains(&t) && (0.0..=1.0).contains(&u);
    }
    // parallel: intersect only if collinear and the projections overlap
    if cross(w, r).abs() > 1e-12 * (r[0].abs() + r[1].abs()).max(1e-300) * (w[0].abs() + w[1].abs()).max(1.0) {
        return false;
    }
    let rr = r[0] * r[0] + r[1] * r[1];
    let t0 = (w[0] * r[0] + w[1] * r[1]) / rr;
    let t1 = t0 + (s[0] * r[0] + s[1] * r[1]) / rr;
    t0.min(t1) <= 1.0 && t0.max(t1) >= 0.0
}
