//! Polygonal meshes with the orientation conventions of the discrete
//! complexes.
//!
//! A [`Mesh`] is a flat, immutable incidence structure over vertices, edges
//! and elements of the computational domain. Every edge `E` carries a unit
//! tangent `t_E` pointing from its lower-numbered endpoint to the other one,
//! and the unit normal `n_E` obtained by rotating `t_E` by +90 degrees, so
//! that `(t_E, n_E)` is a right-handed pair. Orientation relative to the
//! incident entities is encoded by two signs:
//!
//! * `omega_ev(E, V) = +1` iff `t_E` points towards the vertex `V`;
//! * `omega_te(T, E)` is such that `omega_te * n_E` points out of `T`.
//!
//! Elements are simple polygons listed counter-clockwise. Each element also
//! stores an interior point `x_T` (an approximate incenter, see
//! [`build`](self)) around which the scaled polynomial bases and the fan
//! quadrature are centred, and its diameter `h_T`.

mod build;
mod families;
mod regularity;
mod selection;

pub use build::MeshError;
pub use families::{family_mesh, hexagon_mesh, square_mesh, triangle_mesh, MeshFile};
pub use regularity::{regularity_report, RegularityReport};
pub use selection::{select_serendipity_edges, SerendipitySelection, DEFAULT_THETA};

use crate::geometry::Vec2;

/// One edge of the mesh, in global orientation.
#[derive(Debug, Clone)]
pub struct Edge {
    /// Endpoint vertex indices; `t_E` points from `v[0]` to `v[1]`.
    pub v: [usize; 2],
    /// Unit tangent.
    pub tangent: Vec2,
    /// Unit normal, `rot90(tangent)`.
    pub normal: Vec2,
    /// Length.
    pub h: f64,
    /// Midpoint.
    pub midpoint: Vec2,
    /// Incident element indices (one for boundary edges).
    pub elements: Vec<usize>,
}

/// One polygonal element.
#[derive(Debug, Clone)]
pub struct Element {
    /// Vertex indices in counter-clockwise order.
    pub vertices: Vec<usize>,
    /// Edge indices; `edges[i]` joins `vertices[i]` and `vertices[i+1]`.
    pub edges: Vec<usize>,
    /// Orientation signs: `omega_te[i] * n_E` points out of the element.
    pub omega_te: Vec<f64>,
    /// Interior point used as the centre of scaled bases.
    pub x_t: Vec2,
    /// Diameter.
    pub h: f64,
    /// Area.
    pub area: f64,
    /// Radius of the largest disk centred at `x_t` contained in the element.
    pub inradius: f64,
}

/// Immutable polygonal mesh.
#[derive(Debug, Clone)]
pub struct Mesh {
    pub vertices: Vec<Vec2>,
    pub edges: Vec<Edge>,
    pub elements: Vec<Element>,
}

impl Mesh {
    /// Builds a mesh from raw vertex coordinates and per-cell
    /// counter-clockwise vertex loops, validating the input.
    pub fn build(vertices: Vec<Vec2>, cells: Vec<Vec<usize>>) -> Result<Mesh, MeshError> {
        build::build_mesh(vertices, cells)
    }

    /// Largest element diameter.
    pub fn mesh_size(&self) -> f64 {
        self.elements.iter().map(|t| t.h).fold(0.0, f64::max)
    }

    /// Sign relating the global edge tangent to a vertex: `+1` iff `t_E`
    /// points towards `V`.
    pub fn omega_ev(&self, edge: usize, vertex: usize) -> f64 {
        let e = &self.edges[edge];
        if e.v[1] == vertex {
            1.0
        } else {
            debug_assert_eq!(e.v[0], vertex);
            -1.0
        }
    }

    /// Whether an edge lies on the domain boundary.
    pub fn is_boundary_edge(&self, edge: usize) -> bool {
        self.edges[edge].elements.len() == 1
    }

    /// Coordinates of the vertex loop of an element.
    pub fn element_points(&self, elem: usize) -> Vec<Vec2> {
        self.elements[elem]
            .vertices
            .iter()
            .map(|&v| self.vertices[v])
            .collect()
    }
}
