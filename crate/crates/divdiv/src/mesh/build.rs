//! Mesh construction and validation.

use std::collections::HashMap;

use thiserror::Error;

use super::{Edge, Element, Mesh};
use crate::geometry::{
    self, inscribed_radius_at, point_in_polygon, segments_cross, signed_area, vertex_centroid,
    Vec2,
};

/// Relative geometric tolerance used during validation (scaled by the local
/// element or mesh size).
pub const GEOM_REL_TOL: f64 = 1e-12;

#[derive(Debug, Error)]
pub enum MeshError {
    #[error("cell {cell} references vertex {vertex} but only {count} vertices were given")]
    VertexOutOfRange { cell: usize, vertex: usize, count: usize },
    #[error("cell {cell} has {count} vertices; at least 3 are required")]
    TooFewVertices { cell: usize, count: usize },
    #[error("cell {cell} repeats vertex {vertex}")]
    RepeatedVertex { cell: usize, vertex: usize },
    #[error("cell {cell} is clockwise or degenerate (signed area {area:.3e}); vertex loops must be counter-clockwise")]
    NotCounterClockwise { cell: usize, area: f64 },
    #[error("cell {cell} is not a simple polygon (edges {e0} and {e1} intersect)")]
    SelfIntersection { cell: usize, e0: usize, e1: usize },
    #[error("vertices {v0} and {v1} coincide within tolerance")]
    DuplicateVertices { v0: usize, v1: usize },
    #[error("edge ({v0}, {v1}) is shared by more than two cells")]
    NonManifoldEdge { v0: usize, v1: usize },
    #[error("cells {t0} and {t1} traverse edge ({v0}, {v1}) in the same direction; neighbouring orientations are inconsistent")]
    InconsistentOrientation { t0: usize, t1: usize, v0: usize, v1: usize },
    #[error("could not place an interior point in cell {cell}")]
    NoInteriorPoint { cell: usize },
    #[error("malformed mesh file: {0}")]
    Parse(String),
}

pub fn build_mesh(vertices: Vec<Vec2>, cells: Vec<Vec<usize>>) -> Result<Mesh, MeshError> {
    // Global duplicate-vertex detection, O(n log n) via lexicographic sort.
    let diameter = bbox_diameter(&vertices);
    let tol = GEOM_REL_TOL * diameter.max(f64::MIN_POSITIVE);
    let mut order: Vec<usize> = (0..vertices.len()).collect();
    order.sort_by(|&a, &b| {
        (vertices[a].x, vertices[a].y)
            .partial_cmp(&(vertices[b].x, vertices[b].y))
            .unwrap()
    });
    for w in order.windows(2) {
        let (a, b) = (w[0], w[1]);
        if (vertices[a] - vertices[b]).norm() <= tol {
            return Err(MeshError::DuplicateVertices { v0: a.min(b), v1: a.max(b) });
        }
    }

    let mut elements = Vec::with_capacity(cells.len());
    let mut edges: Vec<Edge> = Vec::new();
    // Direction-resolved edge table: (min, max) vertex pair -> edge id.
    let mut edge_ids: HashMap<(usize, usize), usize> = HashMap::new();

    for (c, cell) in cells.iter().enumerate() {
        if cell.len() < 3 {
            return Err(MeshError::TooFewVertices { cell: c, count: cell.len() });
        }
        for &v in cell {
            if v >= vertices.len() {
                return Err(MeshError::VertexOutOfRange { cell: c, vertex: v, count: vertices.len() });
            }
        }
        let mut sorted = cell.clone();
        sorted.sort_unstable();
        for w in sorted.windows(2) {
            if w[0] == w[1] {
                return Err(MeshError::RepeatedVertex { cell: c, vertex: w[0] });
            }
        }

        let pts: Vec<Vec2> = cell.iter().map(|&v| vertices[v]).collect();
        let area = signed_area(&pts);
        let h = diameter_of(&pts);
        if area <= GEOM_REL_TOL * h * h {
            return Err(MeshError::NotCounterClockwise { cell: c, area });
        }
        let n = pts.len();
        for i in 0..n {
            for j in i + 1..n {
                // Skip adjacent edges (they share a vertex).
                if j == i + 1 || (i == 0 && j == n - 1) {
                    continue;
                }
                if segments_cross(pts[i], pts[(i + 1) % n], pts[j], pts[(j + 1) % n]) {
                    return Err(MeshError::SelfIntersection { cell: c, e0: i, e1: j });
                }
            }
        }

        let mut elem_edges = Vec::with_capacity(n);
        let mut omega_te = Vec::with_capacity(n);
        for i in 0..n {
            let (a, b) = (cell[i], cell[(i + 1) % n]);
            let key = (a.min(b), a.max(b));
            let id = *edge_ids.entry(key).or_insert_with(|| {
                let (v0, v1) = key;
                let t = (vertices[v1] - vertices[v0]).normalize();
                edges.push(Edge {
                    v: [v0, v1],
                    tangent: t,
                    normal: geometry::rot90(t),
                    h: (vertices[v1] - vertices[v0]).norm(),
                    midpoint: 0.5 * (vertices[v0] + vertices[v1]),
                    elements: Vec::new(),
                });
                edges.len() - 1
            });
            let edge = &mut edges[id];
            if edge.elements.len() >= 2 {
                return Err(MeshError::NonManifoldEdge { v0: key.0, v1: key.1 });
            }
            // Traversal a -> b agrees with t_E iff a is the lower endpoint.
            // For a counter-clockwise loop the outward normal is the
            // traversal direction rotated by -90 degrees, i.e. -n_E when the
            // traversal agrees with t_E.
            let along_te = a == key.0;
            let omega = if along_te { -1.0 } else { 1.0 };
            if let Some(&prev) = edge.elements.first() {
                let prev_omega = elements_omega(&elements, prev, id);
                if prev_omega == omega {
                    return Err(MeshError::InconsistentOrientation {
                        t0: prev,
                        t1: c,
                        v0: key.0,
                        v1: key.1,
                    });
                }
            }
            edge.elements.push(c);
            elem_edges.push(id);
            omega_te.push(omega);
        }

        let x_t = interior_point(&pts).ok_or(MeshError::NoInteriorPoint { cell: c })?;
        let inradius = inscribed_radius_at(x_t, &pts);
        if inradius <= 0.0 {
            return Err(MeshError::NoInteriorPoint { cell: c });
        }
        elements.push(Element {
            vertices: cell.clone(),
            edges: elem_edges,
            omega_te,
            x_t,
            h,
            area,
            inradius,
        });
    }

    Ok(Mesh { vertices, edges, elements })
}

fn elements_omega(elements: &[Element], elem: usize, edge: usize) -> f64 {
    let e = &elements[elem];
    let pos = e.edges.iter().position(|&id| id == edge).unwrap();
    e.omega_te[pos]
}

fn bbox_diameter(pts: &[Vec2]) -> f64 {
    if pts.is_empty() {
        return 0.0;
    }
    let (mut lo, mut hi) = (pts[0], pts[0]);
    for p in pts {
        lo = Vec2::new(lo.x.min(p.x), lo.y.min(p.y));
        hi = Vec2::new(hi.x.max(p.x), hi.y.max(p.y));
    }
    (hi - lo).norm()
}

fn diameter_of(pts: &[Vec2]) -> f64 {
    let mut h: f64 = 0.0;
    for i in 0..pts.len() {
        for j in i + 1..pts.len() {
            h = h.max((pts[i] - pts[j]).norm());
        }
    }
    h
}

/// Approximates the incenter: the interior point maximizing the distance to
/// the boundary. A candidate grid is seeded from a fan triangulation of the
/// polygon and refined around the best candidate.
fn interior_point(pts: &[Vec2]) -> Option<Vec2> {
    let centroid = vertex_centroid(pts);
    let mut candidates: Vec<Vec2> = vec![centroid];
    // Barycentric samples of every fan triangle (centroid, v_i, v_{i+1}).
    let n = pts.len();
    let levels = 4;
    for i in 0..n {
        let tri = [centroid, pts[i], pts[(i + 1) % n]];
        for a in 0..=levels {
            for b in 0..=(levels - a) {
                let c = levels - a - b;
                let (fa, fb, fc) = (
                    a as f64 / levels as f64,
                    b as f64 / levels as f64,
                    c as f64 / levels as f64,
                );
                candidates.push(fa * tri[0] + fb * tri[1] + fc * tri[2]);
            }
        }
    }
    let mut best = None;
    let mut best_r = f64::NEG_INFINITY;
    for &c in &candidates {
        if !point_in_polygon(c, pts) {
            continue;
        }
        let r = inscribed_radius_at(c, pts);
        if r > best_r {
            best_r = r;
            best = Some(c);
        }
    }
    let mut best = best?;
    // Local grid refinement around the best candidate.
    let mut step = diameter_of(pts) / levels as f64;
    for _ in 0..40 {
        let mut improved = false;
        for dx in -1..=1 {
            for dy in -1..=1 {
                if dx == 0 && dy == 0 {
                    continue;
                }
                let p = best + Vec2::new(dx as f64 * step, dy as f64 * step);
                let r = inscribed_radius_at(p, pts);
                if r > best_r && point_in_polygon(p, pts) {
                    best_r = r;
                    best = p;
                    improved = true;
                }
            }
        }
        if !improved {
            step *= 0.5;
            if step < 1e-9 * diameter_of(pts) {
                break;
            }
        }
    }
    Some(best)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn unit_square_cells() -> (Vec<Vec2>, Vec<Vec<usize>>) {
        (
            vec![
                Vec2::new(0.0, 0.0),
                Vec2::new(1.0, 0.0),
                Vec2::new(1.0, 1.0),
                Vec2::new(0.0, 1.0),
            ],
            vec![vec![0, 1, 2, 3]],
        )
    }

    #[test]
    fn single_square() {
        let (v, c) = unit_square_cells();
        let mesh = Mesh::build(v, c).unwrap();
        assert_eq!(mesh.elements.len(), 1);
        assert_eq!(mesh.edges.len(), 4);
        let t = &mesh.elements[0];
        assert!((t.area - 1.0).abs() < 1e-14);
        assert!((t.h - 2f64.sqrt()).abs() < 1e-14);
        // x_T is the centre and the inscribed radius is 1/2.
        assert!((t.x_t - Vec2::new(0.5, 0.5)).norm() < 1e-9);
        assert!((t.inradius - 0.5).abs() < 1e-9);
    }

    #[test]
    fn rejects_clockwise() {
        let (v, _) = unit_square_cells();
        let err = Mesh::build(v, vec![vec![0, 3, 2, 1]]).unwrap_err();
        assert!(matches!(err, MeshError::NotCounterClockwise { .. }));
    }

    #[test]
    fn rejects_self_intersection() {
        let v = vec![
            Vec2::new(0.0, 0.0),
            Vec2::new(1.0, 0.0),
            Vec2::new(0.0, 1.0),
            Vec2::new(1.0, 1.0),
        ];
        let err = Mesh::build(v, vec![vec![0, 1, 2, 3]]).unwrap_err();
        assert!(matches!(
            err,
            MeshError::SelfIntersection { .. } | MeshError::NotCounterClockwise { .. }
        ));
    }

    #[test]
    fn rejects_duplicate_vertices() {
        let v = vec![
            Vec2::new(0.0, 0.0),
            Vec2::new(1.0, 0.0),
            Vec2::new(1.0, 1.0),
            Vec2::new(1.0 + 1e-15, 1.0),
        ];
        let err = Mesh::build(v, vec![vec![0, 1, 2, 3]]).unwrap_err();
        assert!(matches!(err, MeshError::DuplicateVertices { .. }));
    }

    #[test]
    fn rejects_inconsistent_neighbours() {
        // Second cell traverses the shared edge (1, 2) in the same direction
        // as the first: its loop is clockwise, caught either way.
        let v = vec![
            Vec2::new(0.0, 0.0),
            Vec2::new(1.0, 0.0),
            Vec2::new(1.0, 1.0),
            Vec2::new(0.0, 1.0),
            Vec2::new(2.0, 0.5),
        ];
        let err = Mesh::build(v, vec![vec![0, 1, 2, 3], vec![1, 2, 4]]).unwrap_err();
        assert!(matches!(
            err,
            MeshError::InconsistentOrientation { .. } | MeshError::NotCounterClockwise { .. }
        ));
    }

    #[test]
    fn orientation_signs() {
        // Two triangles sharing the diagonal: omega_te must differ.
        let v = vec![
            Vec2::new(0.0, 0.0),
            Vec2::new(1.0, 0.0),
            Vec2::new(1.0, 1.0),
            Vec2::new(0.0, 1.0),
        ];
        let mesh = Mesh::build(v, vec![vec![0, 1, 2], vec![0, 2, 3]]).unwrap();
        let shared = mesh.elements[0]
            .edges
            .iter()
            .position(|&e| mesh.edges[e].elements.len() == 2)
            .unwrap();
        let edge = mesh.elements[0].edges[shared];
        let o0 = mesh.elements[0].omega_te[shared];
        let pos1 = mesh.elements[1].edges.iter().position(|&e| e == edge).unwrap();
        let o1 = mesh.elements[1].omega_te[pos1];
        assert_eq!(o0 * o1, -1.0);
    }

    #[test]
    fn outward_normals_and_divergence_identity() {
        let v = vec![
            Vec2::new(0.0, 0.0),
            Vec2::new(1.0, 0.0),
            Vec2::new(1.3, 0.9),
            Vec2::new(0.4, 1.4),
            Vec2::new(-0.3, 0.6),
        ];
        let mesh = Mesh::build(v, vec![vec![0, 1, 2, 3, 4]]).unwrap();
        let t = &mesh.elements[0];
        let mut sum = Vec2::zeros();
        for (i, &e) in t.edges.iter().enumerate() {
            let edge = &mesh.edges[e];
            // Outwardness: omega_te * n_E away from x_T.
            assert!(t.omega_te[i] * edge.normal.dot(&(t.x_t - edge.midpoint)) < 0.0);
            sum += t.omega_te[i] * edge.h * edge.normal;
        }
        // Sum of outward edge normals weighted by length vanishes.
        assert!(sum.norm() < 1e-14);
    }
}
