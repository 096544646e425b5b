//! Mesh regularity diagnostics.

use serde::Serialize;

use super::Mesh;

/// Shape-regularity summary of a mesh.
///
/// `rho` is, per element, the diameter of the inscribed disk centred at
/// `x_T` divided by the element diameter; uniform refinements of a fixed
/// shape keep it constant.
#[derive(Debug, Clone, Serialize)]
pub struct RegularityReport {
    pub elements: usize,
    pub edges: usize,
    pub vertices: usize,
    pub mesh_size: f64,
    pub rho_min: f64,
    pub rho_max: f64,
    /// Smallest edge length relative to the incident element diameter.
    pub edge_ratio_min: f64,
}

pub fn regularity_report(mesh: &Mesh) -> RegularityReport {
    let mut rho_min = f64::INFINITY;
    let mut rho_max: f64 = 0.0;
    let mut edge_ratio_min = f64::INFINITY;
    for t in &mesh.elements {
        let rho = 2.0 * t.inradius / t.h;
        rho_min = rho_min.min(rho);
        rho_max = rho_max.max(rho);
        for &e in &t.edges {
            edge_ratio_min = edge_ratio_min.min(mesh.edges[e].h / t.h);
        }
    }
    RegularityReport {
        elements: mesh.elements.len(),
        edges: mesh.edges.len(),
        vertices: mesh.vertices.len(),
        mesh_size: mesh.mesh_size(),
        rho_min,
        rho_max,
        edge_ratio_min,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::{square_mesh, triangle_mesh};

    #[test]
    fn unit_square_rho() {
        let report = regularity_report(&square_mesh(1));
        // Inscribed diameter 1 over diagonal sqrt(2).
        assert!((report.rho_min - 1.0 / 2f64.sqrt()).abs() < 1e-9);
    }

    #[test]
    fn rho_constant_under_refinement() {
        let r1 = regularity_report(&triangle_mesh(2));
        let r2 = regularity_report(&triangle_mesh(4));
        let r3 = regularity_report(&triangle_mesh(8));
        assert!((r1.rho_min - r2.rho_min).abs() < 1e-6);
        assert!((r2.rho_min - r3.rho_min).abs() < 1e-6);
        assert!((r1.mesh_size / r2.mesh_size - 2.0).abs() < 1e-12);
    }
}
