//! Small planar geometry helpers shared by the mesh and quadrature layers.

use nalgebra::Vector2;

pub type Vec2 = Vector2<f64>;

/// Rotates a vector by +90 degrees: `(x, y) -> (-y, x)`.
pub fn rot90(v: Vec2) -> Vec2 {
    Vec2::new(-v.y, v.x)
}

/// z-component of the cross product of two planar vectors.
pub fn cross(a: Vec2, b: Vec2) -> f64 {
    a.x * b.y - a.y * b.x
}

/// Signed area of a polygon given by its vertex loop (positive when
/// counter-clockwise).
pub fn signed_area(pts: &[Vec2]) -> f64 {
    let n = pts.len();
    let mut a = 0.0;
    for i in 0..n {
        a += cross(pts[i], pts[(i + 1) % n]);
    }
    0.5 * a
}

/// Arithmetic mean of the vertex positions.
pub fn vertex_centroid(pts: &[Vec2]) -> Vec2 {
    let mut c = Vec2::zeros();
    for p in pts {
        c += p;
    }
    c / pts.len() as f64
}

/// Distance from `p` to the segment `[a, b]`.
pub fn point_segment_distance(p: Vec2, a: Vec2, b: Vec2) -> f64 {
    let ab = b - a;
    let len2 = ab.norm_squared();
    if len2 == 0.0 {
        return (p - a).norm();
    }
    let t = ((p - a).dot(&ab) / len2).clamp(0.0, 1.0);
    (p - (a + t * ab)).norm()
}

/// Whether the open segments `(a0, a1)` and `(b0, b1)` properly intersect.
///
/// Shared endpoints do not count; collinear overlap does.
pub fn segments_cross(a0: Vec2, a1: Vec2, b0: Vec2, b1: Vec2) -> bool {
    let d1 = cross(a1 - a0, b0 - a0);
    let d2 = cross(a1 - a0, b1 - a0);
    let d3 = cross(b1 - b0, a0 - b0);
    let d4 = cross(b1 - b0, a1 - b0);
    if ((d1 > 0.0 && d2 < 0.0) || (d1 < 0.0 && d2 > 0.0))
        && ((d3 > 0.0 && d4 < 0.0) || (d3 < 0.0 && d4 > 0.0))
    {
        return true;
    }
    // Collinear overlap of non-adjacent segments also makes a polygon
    // non-simple; detect it via projections.
    let eps = 1e-14 * (a1 - a0).norm().max((b1 - b0).norm()).max(1.0);
    if d1.abs() < eps && d2.abs() < eps && d3.abs() < eps && d4.abs() < eps {
        let dir = a1 - a0;
        let (lo_a, hi_a) = minmax(dir.dot(&a0), dir.dot(&a1));
        let (lo_b, hi_b) = minmax(dir.dot(&b0), dir.dot(&b1));
        return hi_a.min(hi_b) - lo_a.max(lo_b) > eps * dir.norm();
    }
    false
}

fn minmax(a: f64, b: f64) -> (f64, f64) {
    if a < b {
        (a, b)
    } else {
        (b, a)
    }
}

/// Winding-number point-in-polygon test (boundary points count as inside).
pub fn point_in_polygon(p: Vec2, pts: &[Vec2]) -> bool {
    let n = pts.len();
    let mut winding = 0i32;
    for i in 0..n {
        let a = pts[i];
        let b = pts[(i + 1) % n];
        if point_segment_distance(p, a, b) < 1e-13 * ((b - a).norm() + 1.0) {
            return true;
        }
        if a.y <= p.y {
            if b.y > p.y && cross(b - a, p - a) > 0.0 {
                winding += 1;
            }
        } else if b.y <= p.y && cross(b - a, p - a) < 0.0 {
            winding -= 1;
        }
    }
    winding != 0
}

/// Radius of the largest disk centred at `p` inscribed in the polygon.
///
/// Returns a negative value when `p` lies outside.
pub fn inscribed_radius_at(p: Vec2, pts: &[Vec2]) -> f64 {
    let n = pts.len();
    let mut r = f64::INFINITY;
    for i in 0..n {
        r = r.min(point_segment_distance(p, pts[i], pts[(i + 1) % n]));
    }
    if point_in_polygon(p, pts) {
        r
    } else {
        -r
    }
}

/// Clips a convex polygon against the half-plane `n . x <= c`
/// (Sutherland-Hodgman step). Returns the clipped loop, possibly empty.
pub fn clip_halfplane(pts: &[Vec2], n: Vec2, c: f64) -> Vec<Vec2> {
    let mut out = Vec::with_capacity(pts.len() + 2);
    let m = pts.len();
    for i in 0..m {
        let a = pts[i];
        let b = pts[(i + 1) % m];
        let da = n.dot(&a) - c;
        let db = n.dot(&b) - c;
        if da <= 0.0 {
            out.push(a);
        }
        if (da < 0.0 && db > 0.0) || (da > 0.0 && db < 0.0) {
            let t = da / (da - db);
            out.push(a + t * (b - a));
        }
    }
    out
}
