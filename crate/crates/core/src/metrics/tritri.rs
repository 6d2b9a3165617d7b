//! Triangle–triangle intersection: plane-sign rejection, interval overlap on
//! the planes' intersection line, and a 2D fallback for coplanar pairs.

use crate::scalar::{self, Real, Vec3};

/// Signed distances and orientation values below this magnitude are treated
/// as exactly zero.
pub const DEGENERACY_EPS: f64 = 1e-10;

type Tri<T> = [Vec3<T>; 3];

/// `true` when the triangles share a segment of positive length, or overlap
/// with positive area when coplanar. Contact at a single point is not an
/// intersection, and neither is anything involving a zero-area triangle.
pub fn triangles_intersect<T: Real>(a: &Tri<T>, b: &Tri<T>) -> bool {
    let eps = T::lit(DEGENERACY_EPS);
    let na = plane_normal(a);
    let nb = plane_normal(b);
    if na == [T::zero(); 3] || nb == [T::zero(); 3] {
        return false;
    }
    let db = signed_distances(&na, a[0], b, eps);
    if same_strict_sign(&db) {
        return false;
    }
    let da = signed_distances(&nb, b[0], a, eps);
    if same_strict_sign(&da) {
        return false;
    }
    let line = scalar::cross(na, nb);
    let coplanar = db.iter().all(|d| *d == T::zero()) || scalar::norm(line) < eps;
    if coplanar {
        return coplanar_overlap(a, b, &na, eps);
    }
    let dir = scalar::normalize(line);
    let (Some(ia), Some(ib)) = (plane_interval(a, &da, &dir), plane_interval(b, &db, &dir)) else {
        return false;
    };
    let overlap = ia.1.min(ib.1) - ia.0.max(ib.0);
    overlap > eps
}

fn plane_normal<T: Real>(t: &Tri<T>) -> Vec3<T> {
    scalar::normalize(scalar::cross(scalar::sub(t[1], t[0]), scalar::sub(t[2], t[0])))
}

fn signed_distances<T: Real>(n: &Vec3<T>, origin: Vec3<T>, t: &Tri<T>, eps: T) -> [T; 3] {
    t.map(|p| {
        let d = scalar::dot(*n, scalar::sub(p, origin));
        if d.abs() < eps {
            T::zero()
        } else {
            d
        }
    })
}

fn same_strict_sign<T: Real>(d: &[T; 3]) -> bool {
    d.iter().all(|x| *x > T::zero()) || d.iter().all(|x| *x < T::zero())
}

/// Extent, along `dir`, of the part of `t` lying in the other triangle's plane.
fn plane_interval<T: Real>(t: &Tri<T>, d: &[T; 3], dir: &Vec3<T>) -> Option<(T, T)> {
    let mut lo = T::infinity();
    let mut hi = T::neg_infinity();
    let mut push = |p: Vec3<T>| {
        let s = scalar::dot(*dir, p);
        lo = lo.min(s);
        hi = hi.max(s);
    };
    for i in 0..3 {
        let j = (i + 1) % 3;
        if d[i] == T::zero() {
            push(t[i]);
        }
        if (d[i] > T::zero() && d[j] < T::zero()) || (d[i] < T::zero() && d[j] > T::zero()) {
            let s = d[i] / (d[i] - d[j]);
            push(scalar::add(t[i], scalar::scale(scalar::sub(t[j], t[i]), s)));
        }
    }
    (lo <= hi).then_some((lo, hi))
}

fn coplanar_overlap<T: Real>(a: &Tri<T>, b: &Tri<T>, n: &Vec3<T>, eps: T) -> bool {
    // drop the dominant normal axis
    let abs = n.map(|c| c.abs());
    let drop = if abs[0] >= abs[1] && abs[0] >= abs[2] {
        0
    } else if abs[1] >= abs[2] {
        1
    } else {
        2
    };
    let (u, v) = match drop {
        0 => (1, 2),
        1 => (2, 0),
        _ => (0, 1),
    };
    let a2 = a.map(|p| [p[u], p[v]]);
    let b2 = b.map(|p| [p[u], p[v]]);

    for i in 0..3 {
        for j in 0..3 {
            if segments_cross(a2[i], a2[(i + 1) % 3], b2[j], b2[(j + 1) % 3], eps) {
                return true;
            }
        }
    }
    let centroid = |t: &[[T; 2]; 3]| {
        let third = T::one() / T::lit(3.0);
        [(t[0][0] + t[1][0] + t[2][0]) * third, (t[0][1] + t[1][1] + t[2][1]) * third]
    };
    a2.iter().chain(std::iter::once(&centroid(&a2))).any(|p| strictly_inside(*p, &b2, eps))
        || b2.iter().chain(std::iter::once(&centroid(&b2))).any(|p| strictly_inside(*p, &a2, eps))
}

fn orient<T: Real>(a: [T; 2], b: [T; 2], c: [T; 2]) -> T {
    (b[0] - a[0]) * (c[1] - a[1]) - (b[1] - a[1]) * (c[0] - a[0])
}

fn sign<T: Real>(x: T, eps: T) -> i8 {
    if x > eps {
        1
    } else if x < -eps {
        -1
    } else {
        0
    }
}

/// Proper crossing: each segment's endpoints lie strictly on opposite sides
/// of the other.
fn segments_cross<T: Real>(p: [T; 2], q: [T; 2], r: [T; 2], s: [T; 2], eps: T) -> bool {
    let o1 = sign(orient(p, q, r), eps);
    let o2 = sign(orient(p, q, s), eps);
    let o3 = sign(orient(r, s, p), eps);
    let o4 = sign(orient(r, s, q), eps);
    o1 * o2 < 0 && o3 * o4 < 0
}

fn strictly_inside<T: Real>(p: [T; 2], t: &[[T; 2]; 3], eps: T) -> bool {
    let s = [orient(t[0], t[1], p), orient(t[1], t[2], p), orient(t[2], t[0], p)].map(|x| sign(x, eps));
    s.iter().all(|&x| x > 0) || s.iter().all(|&x| x < 0)
}
