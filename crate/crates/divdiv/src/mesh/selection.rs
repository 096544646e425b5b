//! Selection of the edge subset driving the serendipity reduction.
//!
//! For an element `T` and degree `k`, the serendipity construction needs a
//! set of `eta_T >= 2` edges such that
//!
//! * `T` lies entirely on one side of the line spanned by each selected
//!   edge,
//! * no two selected edges lie on the same line, and
//! * the midpoint of every selected edge keeps a scaled distance of at
//!   least `theta` from the line of every other selected edge, where the
//!   scaled distance function of `E` is affine, vanishes on the line of `E`,
//!   is positive on the side containing `T`, and has gradient `1/h_E`.
//!
//! Larger `eta_T` means a stronger reduction: the element polynomial degree
//! drops to `ell_T = k - eta_T`. Selecting more than `k + 1` edges brings
//! no further benefit (`ell_T` is capped at `-1`), so the search stops
//! there.

use super::Mesh;

/// Default scaled-distance threshold.
pub const DEFAULT_THETA: f64 = 0.1;

/// Result of the edge selection on one element.
#[derive(Debug, Clone)]
pub struct SerendipitySelection {
    /// Positions (into `Element::edges`) of the selected edges.
    pub local_edges: Vec<usize>,
    /// Number of selected edges.
    pub eta: usize,
    /// Smallest pairwise scaled distance among the selected edges.
    pub theta_achieved: f64,
    /// Reduced element degree `k - eta`, at least `-1`.
    pub ell: i32,
}

/// Scaled distance of `x` to the line of local edge `le` of `elem`,
/// positive on the element side.
fn scaled_distance(mesh: &Mesh, elem: usize, le: usize, x: crate::geometry::Vec2) -> f64 {
    let t = &mesh.elements[elem];
    let e = &mesh.edges[t.edges[le]];
    -t.omega_te[le] * (x - e.midpoint).dot(&e.normal) / e.h
}

/// Greedy edge selection for one element: edges are visited by decreasing
/// length and accepted while they satisfy the pairwise conditions with the
/// edges already kept, stopping at `k + 1` edges. If fewer than two edges
/// satisfy the threshold, the best pair is returned regardless (with
/// `eta = 2` the reduced spaces coincide with the full ones, so no
/// serendipity assumption is needed).
pub fn select_serendipity_edges(
    mesh: &Mesh,
    elem: usize,
    k: usize,
    theta: f64,
) -> SerendipitySelection {
    let t = &mesh.elements[elem];
    let n = t.edges.len();
    let cap = (k + 1).min(n);

    // Candidates: edges whose line keeps the whole element on one side.
    let mut candidates: Vec<usize> = (0..n)
        .filter(|&le| {
            t.vertices
                .iter()
                .all(|&v| scaled_distance(mesh, elem, le, mesh.vertices[v]) >= -1e-12)
        })
        .collect();
    candidates.sort_by(|&a, &b| {
        let (ha, hb) = (mesh.edges[t.edges[a]].h, mesh.edges[t.edges[b]].h);
        hb.partial_cmp(&ha).unwrap().then(a.cmp(&b))
    });

    let mutual = |a: usize, b: usize| -> f64 {
        let da = scaled_distance(mesh, elem, a, mesh.edges[t.edges[b]].midpoint);
        let db = scaled_distance(mesh, elem, b, mesh.edges[t.edges[a]].midpoint);
        da.min(db)
    };

    let mut selected: Vec<usize> = Vec::new();
    for &le in &candidates {
        if selected.len() >= cap {
            break;
        }
        if selected.iter().all(|&s| mutual(s, le) >= theta) {
            selected.push(le);
        }
    }

    if selected.len() < 2 {
        // Fall back to the most separated pair.
        let mut best = (0usize, 1usize.min(n - 1));
        let mut best_d = f64::NEG_INFINITY;
        for i in 0..n {
            for j in i + 1..n {
                let d = mutual(i, j);
                if d > best_d {
                    best_d = d;
                    best = (i, j);
                }
            }
        }
        selected = vec![best.0, best.1];
    }
    selected.sort_unstable();

    let mut theta_achieved = f64::INFINITY;
    for (i, &a) in selected.iter().enumerate() {
        for &b in &selected[i + 1..] {
            theta_achieved = theta_achieved.min(mutual(a, b));
        }
    }
    let eta = selected.len();
    SerendipitySelection {
        local_edges: selected,
        eta,
        theta_achieved,
        ell: k as i32 - eta as i32,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::Vec2;
    use crate::mesh::{hexagon_mesh, square_mesh};

    /// Exhaustive oracle: largest admissible edge subset by brute force.
    fn exhaustive_eta(mesh: &Mesh, elem: usize, k: usize, theta: f64) -> usize {
        let t = &mesh.elements[elem];
        let n = t.edges.len();
        let cap = (k + 1).min(n);
        let mut best = 0usize;
        for mask in 0u32..(1 << n) {
            let subset: Vec<usize> = (0..n).filter(|&i| mask & (1 << i) != 0).collect();
            if subset.len() > cap || subset.len() <= best {
                continue;
            }
            let ok = subset.iter().enumerate().all(|(idx, &a)| {
                subset[idx + 1..].iter().all(|&b| {
                    let da = scaled_distance(mesh, elem, a, mesh.edges[t.edges[b]].midpoint);
                    let db = scaled_distance(mesh, elem, b, mesh.edges[t.edges[a]].midpoint);
                    da.min(db) >= theta
                })
            });
            if ok {
                best = subset.len();
            }
        }
        best
    }

    #[test]
    fn unit_square_selects_all_four_capped() {
        let mesh = square_mesh(1);
        let sel = select_serendipity_edges(&mesh, 0, 3, DEFAULT_THETA);
        assert_eq!(sel.eta, 4);
        assert_eq!(sel.ell, -1);
        // Mutual scaled distances on the unit square: adjacent 1/2, opposite 1.
        assert!((sel.theta_achieved - 0.5).abs() < 1e-12);
        assert_eq!(exhaustive_eta(&mesh, 0, 3, DEFAULT_THETA), 4);
    }

    #[test]
    fn equilateral_triangle_selects_three() {
        let v = vec![
            Vec2::new(0.0, 0.0),
            Vec2::new(1.0, 0.0),
            Vec2::new(0.5, 3f64.sqrt() / 2.0),
        ];
        let mesh = Mesh::build(v, vec![vec![0, 1, 2]]).unwrap();
        let sel = select_serendipity_edges(&mesh, 0, 3, DEFAULT_THETA);
        assert_eq!(sel.eta, 3);
        assert_eq!(sel.ell, 0);
        // Midpoint of one side is at height sqrt(3)/4 over another side.
        assert!((sel.theta_achieved - 3f64.sqrt() / 4.0).abs() < 1e-12);
        assert_eq!(exhaustive_eta(&mesh, 0, 3, DEFAULT_THETA), 3);
    }

    #[test]
    fn cap_at_k_plus_one() {
        let mesh = hexagon_mesh(3);
        // Pick an interior hexagon.
        let hexa = (0..mesh.elements.len())
            .find(|&i| mesh.elements[i].vertices.len() == 6)
            .unwrap();
        for (k, eta) in [(3, 4), (4, 5), (5, 6)] {
            let sel = select_serendipity_edges(&mesh, hexa, k, DEFAULT_THETA);
            assert_eq!(sel.eta, eta, "k = {k}");
            assert_eq!(sel.ell, -1);
        }
    }

    #[test]
    fn greedy_matches_exhaustive_on_families() {
        for mesh in [square_mesh(2), hexagon_mesh(3)] {
            for elem in 0..mesh.elements.len() {
                for k in [3, 4, 5] {
                    let sel = select_serendipity_edges(&mesh, elem, k, DEFAULT_THETA);
                    let best = exhaustive_eta(&mesh, elem, k, DEFAULT_THETA);
                    assert_eq!(sel.eta, best, "elem {elem} k {k}");
                }
            }
        }
    }

    #[test]
    fn thin_triangle_falls_back_to_pair() {
        let v = vec![
            Vec2::new(0.0, 0.0),
            Vec2::new(1.0, 0.0),
            Vec2::new(0.5, 0.01),
        ];
        let mesh = Mesh::build(v, vec![vec![0, 1, 2]]).unwrap();
        let sel = select_serendipity_edges(&mesh, 0, 5, 0.5);
        assert_eq!(sel.eta, 2);
        assert_eq!(sel.ell, 3);
        assert!(sel.theta_achieved < 0.5);
    }

    #[test]
    fn distance_function_is_normalized() {
        let mesh = square_mesh(1);
        let t = &mesh.elements[0];
        for le in 0..4 {
            let e = &mesh.edges[t.edges[le]];
            // d_E vanishes at the edge midpoint and has gradient 1/h_E.
            assert_eq!(scaled_distance(&mesh, 0, le, e.midpoint), 0.0);
            let step = 0.25;
            let inward = -t.omega_te[le] * e.normal;
            let d = scaled_distance(&mesh, 0, le, e.midpoint + step * inward);
            assert!((d - step / e.h).abs() < 1e-14);
        }
    }
}
