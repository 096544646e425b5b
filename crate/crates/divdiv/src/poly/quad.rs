//! Quadrature on edges and polygonal elements.
//!
//! Element rules triangulate the polygon as a fan around its interior point
//! and use a conical product rule (Gauss-Jacobi x Gauss-Legendre) on each
//! triangle, so the weights are positive and the rule is exact to the
//! requested degree. Edge rules are Gauss-Legendre in scaled arclength.

use nalgebra::{DMatrix, DVector};

use crate::geometry::Vec2;
use crate::mesh::Mesh;

/// A quadrature rule in physical coordinates. Weights include the measure
/// of the domain (they sum to the area of the element, or the length of the
/// edge).
#[derive(Debug, Clone)]
pub struct QuadRule {
    pub points: Vec<Vec2>,
    pub weights: Vec<f64>,
}

impl QuadRule {
    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn total_weight(&self) -> f64 {
        self.weights.iter().sum()
    }
}

/// Nodes and weights of an `n`-point rule for the measure described by the
/// symmetric Jacobi matrix (diagonal `alpha`, off-diagonal `beta_sqrt`) with
/// total mass `mass`.
fn golub_welsch(alpha: &[f64], beta_sqrt: &[f64], mass: f64) -> (Vec<f64>, Vec<f64>) {
    let n = alpha.len();
    let mut j = DMatrix::zeros(n, n);
    for i in 0..n {
        j[(i, i)] = alpha[i];
        if i + 1 < n {
            j[(i, i + 1)] = beta_sqrt[i];
            j[(i + 1, i)] = beta_sqrt[i];
        }
    }
    let eig = j.symmetric_eigen();
    let mut idx: Vec<usize> = (0..n).collect();
    idx.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
    let nodes = idx.iter().map(|&i| eig.eigenvalues[i]).collect();
    let weights = idx
        .iter()
        .map(|&i| {
            let q0 = eig.eigenvectors[(0, i)];
            mass * q0 * q0
        })
        .collect();
    (nodes, weights)
}

/// `n`-point Gauss-Legendre rule on `[-1, 1]`.
pub fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    assert!(n > 0);
    let alpha = vec![0.0; n];
    let beta_sqrt: Vec<f64> = (1..n)
        .map(|k| {
            let k = k as f64;
            k / (4.0 * k * k - 1.0).sqrt()
        })
        .collect();
    golub_welsch(&alpha, &beta_sqrt, 2.0)
}

/// `n`-point Gauss-Jacobi rule on `[-1, 1]` for the weight `(1 - x)`.
pub fn gauss_jacobi_10(n: usize) -> (Vec<f64>, Vec<f64>) {
    assert!(n > 0);
    let alpha: Vec<f64> = (0..n)
        .map(|k| {
            let k = k as f64;
            -1.0 / ((2.0 * k + 1.0) * (2.0 * k + 3.0))
        })
        .collect();
    let beta_sqrt: Vec<f64> = (1..n)
        .map(|k| {
            let k = k as f64;
            (k * (k + 1.0)).sqrt() / (2.0 * k + 1.0)
        })
        .collect();
    golub_welsch(&alpha, &beta_sqrt, 2.0)
}

/// Conical product rule on the triangle `(p0, p1, p2)`, exact for
/// polynomials of total degree `deg`.
pub fn triangle_rule(p0: Vec2, p1: Vec2, p2: Vec2, deg: usize) -> QuadRule {
    let n = deg / 2 + 1;
    let (xj, wj) = gauss_jacobi_10(n);
    let (xl, wl) = gauss_legendre(n);
    let area2 = ((p1 - p0).x * (p2 - p0).y - (p1 - p0).y * (p2 - p0).x).abs();
    let mut points = Vec::with_capacity(n * n);
    let mut weights = Vec::with_capacity(n * n);
    for i in 0..n {
        let u = 0.5 * (1.0 + xj[i]);
        for j in 0..n {
            let v = 0.5 * (1.0 + xl[j]) * (1.0 - u);
            points.push(p0 + (p1 - p0) * u + (p2 - p0) * v);
            // 1/8 = (1/4 from the Jacobi substitution) * (1/2 from Legendre).
            weights.push(area2 * wj[i] * wl[j] / 8.0);
        }
    }
    QuadRule { points, weights }
}

/// Quadrature on a polygonal element, exact for polynomials of total degree
/// `deg`, via the fan triangulation around the element's interior point.
pub fn element_rule(mesh: &Mesh, element: usize, deg: usize) -> QuadRule {
    let el = &mesh.elements[element];
    let pts = mesh.element_points(element);
    let n = pts.len();
    let mut rule = QuadRule { points: Vec::new(), weights: Vec::new() };
    for i in 0..n {
        let tri = triangle_rule(el.x_t, pts[i], pts[(i + 1) % n], deg);
        rule.points.extend(tri.points);
        rule.weights.extend(tri.weights);
    }
    rule
}

/// Gauss-Legendre rule on an edge, exact for polynomials of degree `deg` in
/// arclength; also returns the scaled arclength `s in [-1/2, 1/2]` of each
/// node.
pub fn edge_rule(midpoint: Vec2, tangent: Vec2, h: f64, deg: usize) -> (QuadRule, Vec<f64>) {
    let n = deg / 2 + 1;
    let (x, w) = gauss_legendre(n);
    let s: Vec<f64> = x.iter().map(|&t| 0.5 * t).collect();
    let points = s.iter().map(|&si| midpoint + tangent * (si * h)).collect();
    let weights = w.iter().map(|&wi| 0.5 * wi * h).collect();
    (QuadRule { points, weights }, s)
}

/// Integral of a sampled function against the rule.
pub fn integrate(rule: &QuadRule, values: &DVector<f64>) -> f64 {
    rule.weights.iter().zip(values.iter()).map(|(w, v)| w * v).sum()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::square_mesh;

    #[test]
    fn gauss_legendre_is_exact() {
        let (x, w) = gauss_legendre(4);
        for p in 0..8 {
            let num: f64 = x.iter().zip(&w).map(|(xi, wi)| wi * xi.powi(p)).sum();
            let exact = if p % 2 == 0 { 2.0 / (p as f64 + 1.0) } else { 0.0 };
            assert!((num - exact).abs() < 1e-13, "degree {p}: {num} vs {exact}");
        }
    }

    #[test]
    fn gauss_jacobi_integrates_against_weight() {
        let (x, w) = gauss_jacobi_10(3);
        // int_{-1}^{1} (1-x) x^p dx.
        for p in 0..6 {
            let num: f64 = x.iter().zip(&w).map(|(xi, wi)| wi * xi.powi(p)).sum();
            let even = |q: i32| if q % 2 == 0 { 2.0 / (q as f64 + 1.0) } else { 0.0 };
            let exact = even(p) - even(p + 1);
            assert!((num - exact).abs() < 1e-13);
        }
    }

    #[test]
    fn triangle_rule_reference_moments() {
        let rule = triangle_rule(Vec2::zeros(), Vec2::new(1.0, 0.0), Vec2::new(0.0, 1.0), 4);
        let total: f64 = rule.weights.iter().sum();
        assert!((total - 0.5).abs() < 1e-14);
        // int x^2 y^2 over the reference triangle = 1/180.
        let m: f64 = rule
            .points
            .iter()
            .zip(&rule.weights)
            .map(|(p, w)| w * p.x * p.x * p.y * p.y)
            .sum();
        assert!((m - 1.0 / 180.0).abs() < 1e-15, "{m}");
        // int x^3 y = 1/120.
        let m: f64 = rule
            .points
            .iter()
            .zip(&rule.weights)
            .map(|(p, w)| w * p.x.powi(3) * p.y)
            .sum();
        assert!((m - 1.0 / 120.0).abs() < 1e-15);
    }

    #[test]
    fn element_rule_covers_the_cell() {
        let mesh = square_mesh(3);
        for t in 0..mesh.elements.len() {
            let rule = element_rule(&mesh, t, 6);
            assert!((rule.total_weight() - mesh.elements[t].area).abs() < 1e-13);
            assert!(rule.weights.iter().all(|&w| w > 0.0));
        }
    }

    #[test]
    fn edge_rule_moments() {
        let (rule, s) = edge_rule(Vec2::new(0.5, 1.0), Vec2::new(1.0, 0.0), 2.0, 6);
        assert!((rule.total_weight() - 2.0).abs() < 1e-14);
        // Scaled moments: int_E s^p = h / (2^p (p+1)) for even p.
        for p in [0usize, 2, 4, 6] {
            let m: f64 = s
                .iter()
                .zip(&rule.weights)
                .map(|(si, wi)| wi * si.powi(p as i32))
                .sum();
            let exact = 2.0 / ((1 << p) as f64 * (p as f64 + 1.0));
            assert!((m - exact).abs() < 1e-14);
        }
        let m: f64 = s.iter().zip(&rule.weights).map(|(si, wi)| wi * si.powi(3)).sum();
        assert!(m.abs() < 1e-15);
    }
}
