//! Mesh-wide assembly of the complex.
//!
//! Global vectors are laid out entity-major: all vertex blocks, then all
//! edge blocks, then all element blocks, each in mesh index order. Rows
//! attached to shared entities are written by the lowest-index incident
//! element; since every element computes them in the global edge frame they
//! agree up to round-off, which [`Complex::ucsym_consistency`] certifies.

use std::collections::HashMap;

use nalgebra::DVector;
use rayon::prelude::*;

use super::element::ElementOps;
use super::{
    s_choly_block, s_edge_block, s_holy_block, v_edge_block, v_element_block, S_VERTEX_BLOCK,
    V_VERTEX_BLOCK,
};
use crate::fields::{SymTensorField, VectorField};
use crate::linalg::{Coo, Csr};
use crate::mesh::Mesh;
use crate::poly::dim_p;

pub struct Complex<'a> {
    pub mesh: &'a Mesh,
    pub k: usize,
    pub ops: Vec<ElementOps>,
    /// Lowest-index incident element per vertex and per edge (row owners).
    vertex_owner: Vec<usize>,
    edge_owner: Vec<usize>,
}

impl<'a> Complex<'a> {
    pub fn new(mesh: &'a Mesh, k: usize) -> Complex<'a> {
        let ops: Vec<ElementOps> = (0..mesh.elements.len())
            .into_par_iter()
            .map(|el| ElementOps::new(mesh, el, k))
            .collect();
        let mut vertex_owner = vec![usize::MAX; mesh.vertices.len()];
        for (el, e) in mesh.elements.iter().enumerate() {
            for &v in &e.vertices {
                vertex_owner[v] = vertex_owner[v].min(el);
            }
        }
        let edge_owner: Vec<usize> = mesh
            .edges
            .iter()
            .map(|e| e.elements.iter().copied().min().unwrap())
            .collect();
        Complex { mesh, k, ops, vertex_owner, edge_owner }
    }

    // ----- global layouts -----

    pub fn v_dim(&self) -> usize {
        self.mesh.vertices.len() * V_VERTEX_BLOCK
            + self.mesh.edges.len() * v_edge_block(self.k)
            + self.mesh.elements.len() * v_element_block(self.k)
    }

    pub fn s_dim(&self) -> usize {
        self.mesh.vertices.len() * S_VERTEX_BLOCK
            + self.mesh.edges.len() * s_edge_block(self.k)
            + self.mesh.elements.len() * (s_holy_block(self.k) + s_choly_block(self.k))
    }

    /// Dimension of the piecewise scalar range of the discrete div-div.
    pub fn q_dim(&self) -> usize {
        self.mesh.elements.len() * dim_p(self.k as i32 - 2)
    }

    fn v_edge_start(&self) -> usize {
        self.mesh.vertices.len() * V_VERTEX_BLOCK
    }

    fn v_element_start(&self) -> usize {
        self.v_edge_start() + self.mesh.edges.len() * v_edge_block(self.k)
    }

    fn s_edge_start(&self) -> usize {
        self.mesh.vertices.len() * S_VERTEX_BLOCK
    }

    fn s_element_start(&self) -> usize {
        self.s_edge_start() + self.mesh.edges.len() * s_edge_block(self.k)
    }

    pub fn q_offset(&self, el: usize) -> usize {
        el * dim_p(self.k as i32 - 2)
    }

    /// Local-to-global map for the kinematic dofs of an element.
    pub fn v_map(&self, el: usize) -> Vec<usize> {
        let e = &self.mesh.elements[el];
        let veb = v_edge_block(self.k);
        let vew = v_element_block(self.k);
        let mut map = Vec::with_capacity(
            e.vertices.len() * (V_VERTEX_BLOCK + veb) + vew,
        );
        for &v in &e.vertices {
            for i in 0..V_VERTEX_BLOCK {
                map.push(v * V_VERTEX_BLOCK + i);
            }
        }
        for &ed in &e.edges {
            let o = self.v_edge_start() + ed * veb;
            for i in 0..veb {
                map.push(o + i);
            }
        }
        let o = self.v_element_start() + el * vew;
        for i in 0..vew {
            map.push(o + i);
        }
        map
    }

    /// Local-to-global map for the tensor dofs of an element.
    pub fn s_map(&self, el: usize) -> Vec<usize> {
        let e = &self.mesh.elements[el];
        let seb = s_edge_block(self.k);
        let sew = s_holy_block(self.k) + s_choly_block(self.k);
        let mut map = Vec::with_capacity(e.vertices.len() * (S_VERTEX_BLOCK + seb) + sew);
        for &v in &e.vertices {
            for i in 0..S_VERTEX_BLOCK {
                map.push(v * S_VERTEX_BLOCK + i);
            }
        }
        for &ed in &e.edges {
            let o = self.s_edge_start() + ed * seb;
            for i in 0..seb {
                map.push(o + i);
            }
        }
        let o = self.s_element_start() + el * sew;
        for i in 0..sew {
            map.push(o + i);
        }
        map
    }

    /// Whether an element owns (writes) a given local tensor row.
    pub(crate) fn owns_s_row(&self, el: usize, local_row: usize) -> bool {
        let ops = &self.ops[el];
        let e = &self.mesh.elements[el];
        let nv = e.vertices.len();
        if local_row < nv * S_VERTEX_BLOCK {
            return self.vertex_owner[e.vertices[local_row / S_VERTEX_BLOCK]] == el;
        }
        if local_row < ops.s_holy_offset() {
            let le = (local_row - nv * S_VERTEX_BLOCK) / s_edge_block(self.k);
            return self.edge_owner[e.edges[le]] == el;
        }
        true
    }

    // ----- assembled operators -----

    /// Global interpolated sym-curl (tensor dofs from kinematic dofs).
    pub fn assemble_ucsym(&self) -> Csr {
        let mut coo = Coo::new(self.s_dim(), self.v_dim());
        for el in 0..self.ops.len() {
            let ops = &self.ops[el];
            let vmap = self.v_map(el);
            let smap = self.s_map(el);
            for r in 0..ops.s_dim() {
                if !self.owns_s_row(el, r) {
                    continue;
                }
                for c in 0..ops.v_dim() {
                    let v = ops.ucsym[(r, c)];
                    if v != 0.0 {
                        coo.push(smap[r], vmap[c], v);
                    }
                }
            }
        }
        coo.to_csr()
    }

    /// Largest relative disagreement between the shared sym-curl rows
    /// computed by the elements on either side of an entity.
    pub fn ucsym_consistency(&self) -> f64 {
        let mut rows: HashMap<usize, HashMap<usize, f64>> = HashMap::new();
        let mut worst: f64 = 0.0;
        let mut scale: f64 = 0.0;
        for el in 0..self.ops.len() {
            let ops = &self.ops[el];
            let vmap = self.v_map(el);
            let smap = self.s_map(el);
            let boundary_rows = ops.s_holy_offset();
            for r in 0..boundary_rows {
                let mut row = HashMap::new();
                for c in 0..ops.v_dim() {
                    let v = ops.ucsym[(r, c)];
                    if v != 0.0 {
                        row.insert(vmap[c], v);
                        scale = scale.max(v.abs());
                    }
                }
                match rows.get_mut(&smap[r]) {
                    None => {
                        rows.insert(smap[r], row);
                    }
                    Some(prev) => {
                        for &col in row.keys().chain(prev.keys()) {
                            let a = row.get(&col).copied().unwrap_or(0.0);
                            let b = prev.get(&col).copied().unwrap_or(0.0);
                            worst = worst.max((a - b).abs());
                        }
                    }
                }
            }
        }
        if scale > 0.0 {
            worst / scale
        } else {
            0.0
        }
    }

    /// Global discrete div-div (piecewise scalars from tensor dofs).
    pub fn assemble_dd(&self) -> Csr {
        let mut coo = Coo::new(self.q_dim(), self.s_dim());
        for el in 0..self.ops.len() {
            let ops = &self.ops[el];
            let smap = self.s_map(el);
            let q0 = self.q_offset(el);
            for r in 0..ops.dd.nrows() {
                for c in 0..ops.s_dim() {
                    let v = ops.dd[(r, c)];
                    if v != 0.0 {
                        coo.push(q0 + r, smap[c], v);
                    }
                }
            }
        }
        coo.to_csr()
    }

    /// Assembled kinematic product.
    pub fn assemble_gram_v(&self) -> Csr {
        let mut coo = Coo::new(self.v_dim(), self.v_dim());
        for el in 0..self.ops.len() {
            let map = self.v_map(el);
            coo.push_block(&map, &map, &self.ops[el].gram_v);
        }
        coo.to_csr()
    }

    /// Assembled tensor product.
    pub fn assemble_gram_s(&self) -> Csr {
        let mut coo = Coo::new(self.s_dim(), self.s_dim());
        for el in 0..self.ops.len() {
            let map = self.s_map(el);
            coo.push_block(&map, &map, &self.ops[el].gram_s);
        }
        coo.to_csr()
    }

    /// Diagonal of the squared kinematic component norm (summed over
    /// elements).
    pub fn tnorm_v_diag(&self) -> DVector<f64> {
        let mut d = DVector::zeros(self.v_dim());
        for el in 0..self.ops.len() {
            let map = self.v_map(el);
            for (i, &g) in map.iter().enumerate() {
                d[g] += self.ops[el].tnorm_v[i];
            }
        }
        d
    }

    /// Diagonal of the squared tensor component norm.
    pub fn tnorm_s_diag(&self) -> DVector<f64> {
        let mut d = DVector::zeros(self.s_dim());
        for el in 0..self.ops.len() {
            let map = self.s_map(el);
            for (i, &g) in map.iter().enumerate() {
                d[g] += self.ops[el].tnorm_s[i];
            }
        }
        d
    }

    // ----- interpolation -----

    pub fn interpolate_v(&self, f: &VectorField) -> DVector<f64> {
        let mut dof = DVector::zeros(self.v_dim());
        for el in 0..self.ops.len() {
            let local = self.ops[el].interpolate_v(f);
            for (i, &g) in self.v_map(el).iter().enumerate() {
                dof[g] = local[i];
            }
        }
        dof
    }

    pub fn interpolate_s(&self, tau: &SymTensorField) -> DVector<f64> {
        let mut dof = DVector::zeros(self.s_dim());
        for el in 0..self.ops.len() {
            let local = self.ops[el].interpolate_s(tau);
            for (i, &g) in self.s_map(el).iter().enumerate() {
                dof[g] = local[i];
            }
        }
        dof
    }

    /// Restriction of a global kinematic vector to an element.
    pub fn restrict_v(&self, el: usize, x: &DVector<f64>) -> DVector<f64> {
        let map = self.v_map(el);
        DVector::from_iterator(map.len(), map.iter().map(|&g| x[g]))
    }

    /// Restriction of a global tensor vector to an element.
    pub fn restrict_s(&self, el: usize, x: &DVector<f64>) -> DVector<f64> {
        let map = self.s_map(el);
        DVector::from_iterator(map.len(), map.iter().map(|&g| x[g]))
    }

    /// Frobenius norms `(|DD o UCSYM|, |DD|, |UCSYM|)` of the composed and
    /// individual global operators, computed from the per-element blocks
    /// (the scalar rows of each element are disjoint).
    pub fn composition_residual(&self) -> (f64, f64, f64) {
        let mut prod2 = 0.0;
        let mut dd2 = 0.0;
        for ops in &self.ops {
            prod2 += (&ops.dd * &ops.ucsym).norm_squared();
            dd2 += ops.dd.norm_squared();
        }
        let ucsym = self.assemble_ucsym();
        let u2: f64 = ucsym.val.iter().map(|v| v * v).sum();
        (prod2.sqrt(), dd2.sqrt(), u2.sqrt())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fields::ScalarField;
    use crate::mesh::{hexagon_mesh, square_mesh, triangle_mesh};
    use crate::oracle::RawPoly;

    #[test]
    fn euler_characteristic_on_contractible_meshes() {
        let meshes = [square_mesh(2), triangle_mesh(2), hexagon_mesh(2)];
        for mesh in &meshes {
            for k in [3usize, 4] {
                let c = Complex::new(mesh, k);
                let chi = c.v_dim() as i64 - c.s_dim() as i64 + c.q_dim() as i64;
                assert_eq!(chi, 3, "k={k}");
            }
        }
    }

    #[test]
    fn global_complex_property_and_row_consistency() {
        let meshes = [square_mesh(2), hexagon_mesh(2)];
        for mesh in &meshes {
            let c = Complex::new(mesh, 3);
            assert!(c.ucsym_consistency() < 1e-12);
            let (prod, dd, ucsym) = c.composition_residual();
            assert!(prod / (dd * ucsym) < 1e-13, "{:.3e}", prod / (dd * ucsym));
            // Cross-check the blockwise residual against the assembled
            // sparse operators.
            let a = c.assemble_dd().to_dense();
            let b = c.assemble_ucsym().to_dense();
            let direct = (&a * &b).norm();
            assert!((direct - prod).abs() < 1e-10 * (1.0 + prod));
        }
    }

    #[test]
    fn interpolation_commutes_globally() {
        let mesh = hexagon_mesh(2);
        let c = Complex::new(&mesh, 3);
        // Degree-3 components, so the sym-curl interpolation is exact.
        let p1 = RawPoly::monomial(2, 1, 1.0).add(&RawPoly::monomial(0, 2, -0.5));
        let p2 = RawPoly::monomial(1, 0, 1.0).add(&RawPoly::monomial(0, 3, 2.0));
        let v = VectorField::new(ScalarField::from_poly(p1), ScalarField::from_poly(p2));
        let lhs = c.assemble_ucsym().matvec(&c.interpolate_v(&v));
        let rhs = c.interpolate_s(&SymTensorField::symcurl_of(&v));
        assert!((&lhs - &rhs).norm() < 1e-9 * (1.0 + rhs.norm()));
    }

    #[test]
    fn gram_assembly_matches_local_sums() {
        let mesh = square_mesh(2);
        let c = Complex::new(&mesh, 3);
        let x = DVector::from_fn(c.v_dim(), |i, _| ((i as f64) * 0.61).cos());
        let g = c.assemble_gram_v();
        let global = x.dot(&g.matvec(&x));
        let mut local = 0.0;
        for el in 0..c.ops.len() {
            let xt = c.restrict_v(el, &x);
            local += xt.dot(&(&c.ops[el].gram_v * &xt));
        }
        assert!((global - local).abs() < 1e-10 * local.abs());

        let y = DVector::from_fn(c.s_dim(), |i, _| ((i as f64) * 0.37).sin());
        let gs = c.assemble_gram_s();
        let global = y.dot(&gs.matvec(&y));
        let mut local = 0.0;
        for el in 0..c.ops.len() {
            let yt = c.restrict_s(el, &y);
            local += yt.dot(&(&c.ops[el].gram_s * &yt));
        }
        assert!((global - local).abs() < 1e-10 * local.abs());
    }
}
