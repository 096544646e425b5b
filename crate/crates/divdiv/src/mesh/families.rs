//! Built-in mesh families on the unit square and mesh file I/O.
//!
//! Three deterministic families are provided: uniform triangles, uniform
//! squares, and a hexagon-dominant tiling (a honeycomb clipped to the unit
//! square, so boundary cells are pentagons and quadrilaterals). Meshes can
//! also be read from a JSON file with the layout
//!
//! ```json
//! { "vertices": [[0.0, 0.0], [1.0, 0.0], ...],
//!   "cells": [[0, 1, 2], ...] }
//! ```
//!
//! where each cell lists its vertex indices counter-clockwise.

use serde::{Deserialize, Serialize};

use super::{Mesh, MeshError};
use crate::geometry::{clip_halfplane, signed_area, Vec2};

/// Serialized mesh: vertex coordinates and counter-clockwise cells.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MeshFile {
    pub vertices: Vec<[f64; 2]>,
    pub cells: Vec<Vec<usize>>,
}

impl MeshFile {
    pub fn into_mesh(self) -> Result<Mesh, MeshError> {
        let vertices = self.vertices.iter().map(|p| Vec2::new(p[0], p[1])).collect();
        Mesh::build(vertices, self.cells)
    }

    pub fn from_json(text: &str) -> Result<MeshFile, MeshError> {
        serde_json::from_str(text).map_err(|e| MeshError::Parse(e.to_string()))
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("mesh serialization cannot fail")
    }
}

/// Uniform `n x n` grid of squares on the unit square.
pub fn square_mesh(n: usize) -> Mesh {
    assert!(n >= 1);
    let idx = |i: usize, j: usize| j * (n + 1) + i;
    let mut vertices = Vec::with_capacity((n + 1) * (n + 1));
    for j in 0..=n {
        for i in 0..=n {
            vertices.push(Vec2::new(i as f64 / n as f64, j as f64 / n as f64));
        }
    }
    let mut cells = Vec::with_capacity(n * n);
    for j in 0..n {
        for i in 0..n {
            cells.push(vec![idx(i, j), idx(i + 1, j), idx(i + 1, j + 1), idx(i, j + 1)]);
        }
    }
    Mesh::build(vertices, cells).expect("structured square mesh is valid")
}

/// Uniform triangular mesh: the `n x n` grid with every square split along
/// its south-west to north-east diagonal (`2 n^2` triangles).
pub fn triangle_mesh(n: usize) -> Mesh {
    assert!(n >= 1);
    let idx = |i: usize, j: usize| j * (n + 1) + i;
    let mut vertices = Vec::with_capacity((n + 1) * (n + 1));
    for j in 0..=n {
        for i in 0..=n {
            vertices.push(Vec2::new(i as f64 / n as f64, j as f64 / n as f64));
        }
    }
    let mut cells = Vec::with_capacity(2 * n * n);
    for j in 0..n {
        for i in 0..n {
            cells.push(vec![idx(i, j), idx(i + 1, j), idx(i + 1, j + 1)]);
            cells.push(vec![idx(i, j), idx(i + 1, j + 1), idx(i, j + 1)]);
        }
    }
    Mesh::build(vertices, cells).expect("structured triangle mesh is valid")
}

/// Hexagon-dominant mesh: a pointy-top honeycomb with `n` rows clipped to
/// the unit square. Interior cells are regular hexagons; cells cut by the
/// boundary become convex quadrilaterals and pentagons.
pub fn hexagon_mesh(n: usize) -> Mesh {
    assert!(n >= 2);
    // Vertical pitch 1.5 R = 1/n.
    let r = 2.0 / (3.0 * n as f64);
    let w = 3f64.sqrt() * r;
    let cols = (1.0 / w).ceil() as i64 + 2;
    let rows = n as i64 + 2;

    let mut polygons: Vec<Vec<Vec2>> = Vec::new();
    for row in -1..rows {
        for col in -1..cols {
            let cx = (col as f64 + 0.5 * (row.rem_euclid(2) as f64)) * w;
            let cy = row as f64 * 1.5 * r;
            let mut hex: Vec<Vec2> = (0..6)
                .map(|j| {
                    let a = std::f64::consts::PI / 180.0 * (60.0 * j as f64 - 30.0);
                    Vec2::new(cx + r * a.cos(), cy + r * a.sin())
                })
                .collect();
            for (nrm, c) in [
                (Vec2::new(-1.0, 0.0), 0.0),
                (Vec2::new(1.0, 0.0), 1.0),
                (Vec2::new(0.0, -1.0), 0.0),
                (Vec2::new(0.0, 1.0), 1.0),
            ] {
                hex = clip_halfplane(&hex, nrm, c);
                if hex.is_empty() {
                    break;
                }
            }
            if hex.len() >= 3 {
                dedup_loop(&mut hex, 1e-9);
                if hex.len() >= 3 && signed_area(&hex) > 1e-12 {
                    polygons.push(hex);
                }
            }
        }
    }

    // Merge coincident vertices across polygons.
    let snap = 1e-9;
    let mut vertices: Vec<Vec2> = Vec::new();
    let mut cells: Vec<Vec<usize>> = Vec::new();
    for poly in &polygons {
        let mut cell = Vec::with_capacity(poly.len());
        'outer: for &p in poly {
            for (i, &q) in vertices.iter().enumerate() {
                if (p - q).norm() <= snap {
                    cell.push(i);
                    continue 'outer;
                }
            }
            vertices.push(p);
            cell.push(vertices.len() - 1);
        }
        cells.push(cell);
    }
    Mesh::build(vertices, cells).expect("clipped honeycomb mesh is valid")
}

fn dedup_loop(pts: &mut Vec<Vec2>, tol: f64) {
    let mut out: Vec<Vec2> = Vec::with_capacity(pts.len());
    for &p in pts.iter() {
        if out.last().map_or(true, |&q| (p - q).norm() > tol) {
            out.push(p);
        }
    }
    while out.len() >= 2 && (out[0] - *out.last().unwrap()).norm() <= tol {
        out.pop();
    }
    *pts = out;
}

/// Resolves a family name and refinement parameter.
pub fn family_mesh(family: &str, n: usize) -> Option<Mesh> {
    match family {
        "tri" | "triangle" | "triangles" => Some(triangle_mesh(n)),
        "square" | "squares" | "quad" => Some(square_mesh(n)),
        "hex" | "hexagon" | "hexagons" => Some(hexagon_mesh(n.max(2))),
        _ => None,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn families_have_expected_counts() {
        let m = square_mesh(3);
        assert_eq!(m.elements.len(), 9);
        assert_eq!(m.vertices.len(), 16);
        assert_eq!(m.edges.len(), 24);
        let m = triangle_mesh(2);
        assert_eq!(m.elements.len(), 8);
        let total: f64 = m.elements.iter().map(|t| t.area).sum();
        assert!((total - 1.0).abs() < 1e-12);
    }

    #[test]
    fn hexagon_mesh_covers_unit_square() {
        let m = hexagon_mesh(4);
        let total: f64 = m.elements.iter().map(|t| t.area).sum();
        assert!((total - 1.0).abs() < 1e-9, "area {total}");
        // Hexagon-dominant: interior cells have six edges.
        let hexes = m.elements.iter().filter(|t| t.vertices.len() == 6).count();
        assert!(hexes >= m.elements.len() / 3, "{hexes} of {}", m.elements.len());
        assert!(m.elements.len() <= 256);
    }

    #[test]
    fn json_round_trip() {
        let file = MeshFile {
            vertices: vec![[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]],
            cells: vec![vec![0, 1, 2]],
        };
        let text = file.to_json();
        let mesh = MeshFile::from_json(&text).unwrap().into_mesh().unwrap();
        assert_eq!(mesh.elements.len(), 1);
        assert!(MeshFile::from_json("{\"vertices\": []").is_err());
    }
}
