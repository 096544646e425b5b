//! Serendipity reduction of the discrete spaces.
//!
//! On an element whose boundary sees "enough" directions — measured by the
//! number `eta_T` of edges kept by
//! [`select_serendipity_edges`](crate::mesh::select_serendipity_edges) — the
//! element polynomial blocks of both discrete spaces can be shrunk from
//! degree `k - 2` to degree `ell_T = k - eta_T` without losing any of the
//! structural properties of the complex. The degrees of freedom attached to
//! vertices and edges are untouched, so the reduction composes across a
//! mesh.
//!
//! The bridge between the reduced and the full spaces is a pair of
//! *serendipity operators* mapping degrees of freedom to symmetric tensor
//! polynomials of degree `k - 1`. Both are defined through one saddle-point
//! problem whose bilinear form combines a volume div-div term with boundary
//! terms (normal-normal trace, div-div closure, vertex values), each scaled
//! by the power of `h_T` that makes the whole form dimensionless; the
//! multiplier lives on the reduced complement subspace. From the solution
//! operators one builds
//!
//! * extensions `E_V`, `E_Sigma` (reduced dofs to full dofs) and the
//!   plain truncations `R_V`, `R_Sigma` going the other way,
//! * the reduced sym-curl `R_Sigma . UCSYM . E_V` and the reduced div-div
//!   `DD . E_Sigma`,
//! * reduced products and component norms, obtained by pushing reduced
//!   vectors through the extensions.
//!
//! `R . E` is the identity on the reduced spaces, both `E . R` compositions
//! preserve interpolates of the polynomial spaces seen by the complex, and
//! the reduced operators commute with the full ones through `E` and `R`, so
//! the reduced complex has the same cohomology as the full one. All of this
//! is certified numerically by the test suite and by
//! [`verify`](crate::verify).

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use std::collections::HashMap;

use crate::ddr::{frobenius_weights, Complex, ElementOps};
use crate::fields::{SymTensorField, VectorField};
use crate::linalg::{Coo, Csr, ScaledLu};
use crate::mesh::{select_serendipity_edges, Mesh, SerendipitySelection};
use crate::poly::subspace;
use crate::poly::{dim_p, dim_p_edge, Codomain, DiffOp, Polynomial};

/// Serendipity data of one element: selection, saddle solution operators,
/// extensions, reductions and the reduced complex matrices.
pub struct SerendipityOps {
    pub element: usize,
    pub k: usize,
    pub selection: SerendipitySelection,
    /// Smallest singular value of the saddle matrix in Frobenius-orthonormal
    /// coordinates; the construction is well posed iff this is positive.
    pub inf_sup: f64,
    /// Relative disagreement of the two equivalent assemblies of the tensor
    /// right-hand side (volume form versus integration by parts).
    pub rhs_cross_check: f64,
    /// Tensor coordinates (degree `k - 1`) of the kinematic serendipity
    /// operator, per reduced kinematic dof.
    pub s_v: DMatrix<f64>,
    /// Tensor coordinates of the tensor serendipity operator, per reduced
    /// tensor dof.
    pub s_sigma: DMatrix<f64>,
    /// Extension of reduced kinematic dofs to full kinematic dofs.
    pub e_v: DMatrix<f64>,
    /// Extension of reduced tensor dofs to full tensor dofs.
    pub e_sigma: DMatrix<f64>,
    /// Truncation of full kinematic dofs to reduced ones.
    pub r_v: DMatrix<f64>,
    /// Truncation of full tensor dofs to reduced ones.
    pub r_sigma: DMatrix<f64>,
    /// Reduced sym-curl `R_Sigma . UCSYM . E_V`.
    pub sucsym: DMatrix<f64>,
    /// Reduced div-div `DD . E_Sigma`.
    pub sdd: DMatrix<f64>,
    /// Reduced kinematic product `E_V^T G_V E_V`.
    pub gram_v: DMatrix<f64>,
    /// Reduced tensor product.
    pub gram_s: DMatrix<f64>,
    /// Squared component norm weights of the reduced kinematic dofs.
    pub tnorm_v: DVector<f64>,
    /// Squared component norm weights of the reduced tensor dofs.
    pub tnorm_s: DVector<f64>,
}

/// Pieces of the saddle bilinear form on the degree `k - 1` symmetric
/// tensor polynomials: the four seminorm factors and the multiplier
/// coupling.
struct SaddleParts {
    /// `a(., .)` on stacked orthonormal coordinates.
    s: DMatrix<f64>,
    /// Coupling with the reduced complement members.
    c: DMatrix<f64>,
    /// Div-div coordinates (degree `k - 3`) of the tensor basis.
    ddd: DMatrix<f64>,
    /// Per edge: normal-normal trace coefficients of degree `k - 3`.
    nn: Vec<DMatrix<f64>>,
    /// Per edge: div-div closure coefficients of degree `k - 2`.
    de: Vec<DMatrix<f64>>,
    /// Per vertex: tensor values `(s11, s12, s22)`.
    vv: Vec<DMatrix<f64>>,
}

/// Doubles the middle row of a three-row value block (the Frobenius weight
/// of the off-diagonal component).
fn double_mid_row(m: &DMatrix<f64>) -> DMatrix<f64> {
    let mut out = m.clone();
    out.row_mut(1).apply(|x| *x *= 2.0);
    out
}

fn saddle_parts(ops: &ElementOps, nred: usize) -> SaddleParts {
    let ki = ops.k as i32;
    let nt = 3 * dim_p(ki - 1);
    let h = ops.h;
    let eye = DMatrix::identity(nt, nt);

    let mut ddd = DMatrix::zeros(dim_p(ki - 3), nt);
    for j in 0..nt {
        let mut c = DVector::zeros(nt);
        c[j] = 1.0;
        let member = ops.basis.poly_from_on(&c, ki - 1, Codomain::SymTensor);
        ddd.set_column(j, &ops.basis.on_from_poly(&member.divdiv(), ki - 3));
    }

    let mut s = h.powi(4) * (ddd.transpose() * &ddd);
    let mut nn = Vec::with_capacity(ops.edges.len());
    let mut de = Vec::with_capacity(ops.edges.len());
    for le in 0..ops.edges.len() {
        let n = ops.edge_nn_projection(le, &eye, ki - 1, ki - 3);
        s += h * (n.transpose() * &n);
        nn.push(n);
        let d = ops.edge_de_projection(le, &eye, ki - 1, ki - 2);
        s += h.powi(3) * (d.transpose() * &d);
        de.push(d);
    }
    let mut vv = Vec::with_capacity(ops.n_vertices);
    for lv in 0..ops.n_vertices {
        let v = ops.tensor_vertex_values(lv, &eye, ki - 1);
        s += h * h * (v.transpose() * double_mid_row(&v));
        vv.push(v);
    }

    // The complement members are Frobenius-orthonormal, so their pairing
    // with the tensor basis is the weighted coordinate block.
    let wf = frobenius_weights(dim_p(ki - 1));
    let mut c = DMatrix::zeros(nt, nred);
    for j in 0..nred {
        for i in 0..nt {
            c[(i, j)] = wf[i] * ops.choly.coords[(i, j)];
        }
    }

    SaddleParts { s, c, ddd, nn, de, vv }
}

/// Zero-extension of the reduced kinematic layout into the full one
/// (identity on vertex and edge blocks, degree padding on the element
/// block).
fn extension_v_zero(ops: &ElementOps, ell: i32) -> DMatrix<f64> {
    let ki = ops.k as i32;
    let shared = ops.v_element_offset();
    let dfull = dim_p(ki - 2);
    let dred = dim_p(ell);
    let mut z = DMatrix::zeros(ops.v_dim(), shared + 2 * dred);
    for i in 0..shared {
        z[(i, i)] = 1.0;
    }
    for c in 0..2 {
        for i in 0..dred {
            z[(shared + c * dfull + i, shared + c * dred + i)] = 1.0;
        }
    }
    z
}

/// Zero-extension of the reduced tensor layout into the full one (identity
/// up to and including the Hessian block, prefix padding on the complement
/// block).
fn extension_s_zero(ops: &ElementOps, ell: i32) -> DMatrix<f64> {
    let shared = ops.s_choly_offset();
    let nred = 2 * dim_p(ell);
    let mut z = DMatrix::zeros(ops.s_dim(), shared + nred);
    for i in 0..shared {
        z[(i, i)] = 1.0;
    }
    for i in 0..nred {
        z[(shared + i, shared + i)] = 1.0;
    }
    z
}

/// Adds to `rhs` the boundary terms and multiplier rows shared by both
/// assemblies of the tensor right-hand side.
fn add_shared_sigma_terms(
    rhs: &mut DMatrix<f64>,
    ops: &ElementOps,
    parts: &SaddleParts,
    z_s: &DMatrix<f64>,
) {
    let ki = ops.k as i32;
    let nt = 3 * dim_p(ki - 1);
    let nmom = dim_p_edge(ki - 3);
    let ncl = dim_p_edge(ki - 2);
    let h = ops.h;
    let sr = z_s.ncols();
    let nred = rhs.nrows() - nt;

    let mut top = DMatrix::zeros(nt, sr);
    for le in 0..ops.edges.len() {
        let so = ops.s_edge_offset(le);
        top += h * parts.nn[le].transpose() * z_s.rows(so, nmom);
        top += h.powi(3) * parts.de[le].transpose() * z_s.rows(so + nmom, ncl);
    }
    for lv in 0..ops.n_vertices {
        let sel = z_s.rows(ops.s_vertex_offset(lv), 3).into_owned();
        top += h * h * parts.vv[lv].transpose() * double_mid_row(&sel);
    }
    let mut view = rhs.view_mut((0, 0), (nt, sr));
    view += top;

    // Multiplier rows: the input complement coefficients themselves.
    let co = ops.s_choly_offset();
    for j in 0..nred {
        rhs[(nt + j, co + j)] += 1.0;
    }
}

impl SerendipityOps {
    pub fn new(mesh: &Mesh, ops: &ElementOps, theta: f64) -> SerendipityOps {
        let k = ops.k;
        let ki = k as i32;
        let selection = select_serendipity_edges(mesh, ops.element, k, theta);
        let ell = selection.ell;
        let nred = 2 * dim_p(ell);
        let nt = 3 * dim_p(ki - 1);
        let h = ops.h;

        let z_v = extension_v_zero(ops, ell);
        let z_s = extension_s_zero(ops, ell);
        let vr = z_v.ncols();
        let sr = z_s.ncols();

        let parts = saddle_parts(ops, nred);
        let nsys = nt + nred;
        let mut m = DMatrix::zeros(nsys, nsys);
        m.view_mut((0, 0), (nt, nt)).copy_from(&parts.s);
        if nred > 0 {
            m.view_mut((0, nt), (nt, nred)).copy_from(&(-&parts.c));
            m.view_mut((nt, 0), (nred, nt)).copy_from(&parts.c.transpose());
        }

        // Smallest singular value once both arguments are expressed in
        // Frobenius-orthonormal coordinates.
        let wf = frobenius_weights(dim_p(ki - 1));
        let mut mn = m.clone();
        for j in 0..nsys {
            for i in 0..nsys {
                let si = if i < nt { wf[i].sqrt() } else { 1.0 };
                let sj = if j < nt { wf[j].sqrt() } else { 1.0 };
                mn[(i, j)] /= si * sj;
            }
        }
        let sv = mn.svd(false, false).singular_values;
        let inf_sup = sv.iter().cloned().fold(f64::INFINITY, f64::min);

        let lu = ScaledLu::new(m);

        // Kinematic right-hand side: the edge and vertex rows of the
        // interpolated sym-curl carry exactly the traces entering the
        // bilinear form, and its leading complement rows are the multiplier
        // pairings (their rotations have degree at most `ell`, so the
        // truncated element block is seen exactly).
        let nmom = dim_p_edge(ki - 3);
        let ncl = dim_p_edge(ki - 2);
        let mut rhs_v = DMatrix::zeros(nsys, vr);
        {
            let mut top = DMatrix::zeros(nt, vr);
            for le in 0..ops.edges.len() {
                let so = ops.s_edge_offset(le);
                top += h * parts.nn[le].transpose() * (ops.ucsym.rows(so, nmom) * &z_v);
                top += h.powi(3)
                    * parts.de[le].transpose()
                    * (ops.ucsym.rows(so + nmom, ncl) * &z_v);
            }
            for lv in 0..ops.n_vertices {
                let uv = (ops.ucsym.rows(ops.s_vertex_offset(lv), 3) * &z_v).into_owned();
                top += h * h * parts.vv[lv].transpose() * double_mid_row(&uv);
            }
            rhs_v.view_mut((0, 0), (nt, vr)).copy_from(&top);
            if nred > 0 {
                rhs_v
                    .view_mut((nt, 0), (nred, vr))
                    .copy_from(&(ops.ucsym.rows(ops.s_choly_offset(), nred) * &z_v));
            }
        }

        // Tensor right-hand side, assembled twice: through the discrete
        // div-div (integration by parts) and through the raw volume and
        // boundary terms. Both must agree to roundoff.
        let mut rhs_bis = DMatrix::zeros(nsys, sr);
        {
            let dred = &ops.dd * &z_s;
            let vol = h.powi(4) * parts.ddd.transpose() * dred.rows(0, dim_p(ki - 3));
            rhs_bis.view_mut((0, 0), (nt, sr)).copy_from(&vol);
            add_shared_sigma_terms(&mut rhs_bis, ops, &parts, &z_s);
        }
        let mut rhs_direct = DMatrix::zeros(nsys, sr);
        {
            let qs: Vec<Polynomial> = (0..nt)
                .map(|j| {
                    let mut c = DVector::zeros(nt);
                    c[j] = 1.0;
                    ops.basis
                        .poly_from_on(&c, ki - 1, Codomain::SymTensor)
                        .divdiv()
                })
                .collect();
            let mut ddlike = -ops.boundary_q_bilinear(&qs);
            let ho = ops.s_holy_offset();
            for (j, q) in qs.iter().enumerate() {
                let hess = q.apply(DiffOp::Hess);
                let hc = ops
                    .holy
                    .project_coords(&ops.basis.on_from_poly(&hess, ki - 4));
                for i in 0..hc.len() {
                    ddlike[(j, ho + i)] += hc[i];
                }
            }
            let vol = h.powi(4) * (&ddlike * &z_s);
            rhs_direct.view_mut((0, 0), (nt, sr)).copy_from(&vol);
            add_shared_sigma_terms(&mut rhs_direct, ops, &parts, &z_s);
        }
        let rhs_cross_check = (&rhs_bis - &rhs_direct).norm() / rhs_bis.norm().max(1.0);

        let sol_v = lu.solve(&rhs_v).expect("serendipity saddle is singular");
        let s_v = sol_v.rows(0, nt).into_owned();
        let sol_s = lu.solve(&rhs_bis).expect("serendipity saddle is singular");
        let s_sigma = sol_s.rows(0, nt).into_owned();

        // Kinematic extension: vertex and edge dofs are copied; the element
        // polynomial is recovered from the serendipity tensor by inverting
        // the rotation pairing with the complement subspace.
        let w1 = subspace::operator_matrix(
            &ops.basis,
            &ops.choly,
            &|p| p.apply(DiffOp::VRot),
            ki - 2,
            Codomain::Vector,
        );
        let b = ops.boundary_vt_pairing(&ops.choly.coords, ki - 1) * &z_v
            - ops.choly.project_matrix(&s_v);
        let x = ScaledLu::new(w1.transpose())
            .solve(&b)
            .expect("complement rotation system is singular");
        let mut e_v = z_v.clone();
        e_v.view_mut((ops.v_element_offset(), 0), (2 * dim_p(ki - 2), vr))
            .copy_from(&x);

        // Tensor extension: every block is copied except the complement
        // coefficients, which are read off the serendipity tensor.
        let mut e_sigma = z_s.clone();
        e_sigma
            .view_mut((ops.s_choly_offset(), 0), (2 * dim_p(ki - 2), sr))
            .copy_from(&ops.choly.project_matrix(&s_sigma));

        let r_v = z_v.transpose();
        let r_sigma = z_s.transpose();
        let sucsym = &r_sigma * &ops.ucsym * &e_v;
        let sdd = &ops.dd * &e_sigma;
        let gram_v = e_v.transpose() * &ops.gram_v * &e_v;
        let gram_s = e_sigma.transpose() * &ops.gram_s * &e_sigma;
        let tnorm_v = &r_v * &ops.tnorm_v;
        let tnorm_s = &r_sigma * &ops.tnorm_s;

        SerendipityOps {
            element: ops.element,
            k,
            selection,
            inf_sup,
            rhs_cross_check,
            s_v,
            s_sigma,
            e_v,
            e_sigma,
            r_v,
            r_sigma,
            sucsym,
            sdd,
            gram_v,
            gram_s,
            tnorm_v,
            tnorm_s,
        }
    }

    pub fn v_dim(&self) -> usize {
        self.e_v.ncols()
    }

    pub fn s_dim(&self) -> usize {
        self.e_sigma.ncols()
    }

    /// Reduced element polynomial degree.
    pub fn ell(&self) -> i32 {
        self.selection.ell
    }

    /// Number of local dofs removed from the two spaces together.
    pub fn dof_reduction(&self) -> usize {
        4 * (dim_p(self.k as i32 - 2) - dim_p(self.selection.ell))
    }
}

/// The serendipity complex over a mesh: per-element reductions plus the
/// global reduced layouts and assembled operators. Vertex and edge blocks
/// keep their positions from the full layout; the per-element tail blocks
/// are renumbered with element-dependent widths.
pub struct SerendipityComplex<'a> {
    pub complex: &'a Complex<'a>,
    pub ops: Vec<SerendipityOps>,
    v_elem_start: Vec<usize>,
    s_elem_start: Vec<usize>,
}

impl<'a> SerendipityComplex<'a> {
    pub fn new(complex: &'a Complex<'a>, theta: f64) -> SerendipityComplex<'a> {
        let ops: Vec<SerendipityOps> = complex
            .ops
            .par_iter()
            .map(|eo| SerendipityOps::new(complex.mesh, eo, theta))
            .collect();
        let k = complex.k as i32;
        let nelem = complex.mesh.elements.len();
        let holy_dim = complex.ops[0].holy.len();
        let v_shared = complex.v_dim() - nelem * 2 * dim_p(k - 2);
        let s_shared = complex.s_dim() - nelem * (holy_dim + 2 * dim_p(k - 2));
        let mut v_elem_start = Vec::with_capacity(nelem);
        let mut s_elem_start = Vec::with_capacity(nelem);
        let mut vpos = v_shared;
        let mut spos = s_shared;
        for so in &ops {
            v_elem_start.push(vpos);
            s_elem_start.push(spos);
            vpos += 2 * dim_p(so.ell());
            spos += holy_dim + 2 * dim_p(so.ell());
        }
        SerendipityComplex { complex, ops, v_elem_start, s_elem_start }
    }

    pub fn v_dim(&self) -> usize {
        let last = self.ops.len() - 1;
        self.v_elem_start[last] + 2 * dim_p(self.ops[last].ell())
    }

    pub fn s_dim(&self) -> usize {
        let last = self.ops.len() - 1;
        let holy_dim = self.complex.ops[0].holy.len();
        self.s_elem_start[last] + holy_dim + 2 * dim_p(self.ops[last].ell())
    }

    pub fn q_dim(&self) -> usize {
        self.complex.q_dim()
    }

    /// Local-to-global map for the reduced kinematic dofs of an element.
    pub fn v_map(&self, el: usize) -> Vec<usize> {
        let full = self.complex.v_map(el);
        let cut = self.complex.ops[el].v_element_offset();
        let mut map = full[..cut].to_vec();
        let width = self.ops[el].v_dim() - cut;
        for i in 0..width {
            map.push(self.v_elem_start[el] + i);
        }
        map
    }

    /// Local-to-global map for the reduced tensor dofs of an element.
    pub fn s_map(&self, el: usize) -> Vec<usize> {
        let full = self.complex.s_map(el);
        let cut = self.complex.ops[el].s_holy_offset();
        let mut map = full[..cut].to_vec();
        let width = self.ops[el].s_dim() - cut;
        for i in 0..width {
            map.push(self.s_elem_start[el] + i);
        }
        map
    }

    /// Global reduced sym-curl; rows attached to shared entities are written
    /// by their owning element (they agree across elements, see
    /// [`sucsym_consistency`](Self::sucsym_consistency)).
    pub fn assemble_sucsym(&self) -> Csr {
        let mut coo = Coo::new(self.s_dim(), self.v_dim());
        for el in 0..self.ops.len() {
            let so = &self.ops[el];
            let vmap = self.v_map(el);
            let smap = self.s_map(el);
            for r in 0..so.s_dim() {
                // Reduced local rows below the element tail carry the same
                // indices as the full layout, so row ownership transfers.
                if !self.complex.owns_s_row(el, r) {
                    continue;
                }
                for c in 0..so.v_dim() {
                    let v = so.sucsym[(r, c)];
                    if v != 0.0 {
                        coo.push(smap[r], vmap[c], v);
                    }
                }
            }
        }
        coo.to_csr()
    }

    /// Largest relative disagreement between the shared reduced sym-curl
    /// rows computed by the elements on either side of an entity.
    pub fn sucsym_consistency(&self) -> f64 {
        let mut rows: HashMap<usize, HashMap<usize, f64>> = HashMap::new();
        let mut worst: f64 = 0.0;
        let mut scale: f64 = 0.0;
        for el in 0..self.ops.len() {
            let so = &self.ops[el];
            let vmap = self.v_map(el);
            let smap = self.s_map(el);
            let boundary_rows = self.complex.ops[el].s_holy_offset();
            for r in 0..boundary_rows {
                let mut row = HashMap::new();
                for c in 0..so.v_dim() {
                    let v = so.sucsym[(r, c)];
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

    /// Global reduced div-div.
    pub fn assemble_sdd(&self) -> Csr {
        let mut coo = Coo::new(self.q_dim(), self.s_dim());
        for el in 0..self.ops.len() {
            let so = &self.ops[el];
            let smap = self.s_map(el);
            let q0 = self.complex.q_offset(el);
            for r in 0..so.sdd.nrows() {
                for c in 0..so.s_dim() {
                    let v = so.sdd[(r, c)];
                    if v != 0.0 {
                        coo.push(q0 + r, smap[c], v);
                    }
                }
            }
        }
        coo.to_csr()
    }

    /// Assembled reduced kinematic product.
    pub fn assemble_gram_v(&self) -> Csr {
        let mut coo = Coo::new(self.v_dim(), self.v_dim());
        for el in 0..self.ops.len() {
            let map = self.v_map(el);
            coo.push_block(&map, &map, &self.ops[el].gram_v);
        }
        coo.to_csr()
    }

    /// Assembled reduced tensor product.
    pub fn assemble_gram_s(&self) -> Csr {
        let mut coo = Coo::new(self.s_dim(), self.s_dim());
        for el in 0..self.ops.len() {
            let map = self.s_map(el);
            coo.push_block(&map, &map, &self.ops[el].gram_s);
        }
        coo.to_csr()
    }

    /// Diagonal of the squared reduced kinematic component norm.
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

    /// Diagonal of the squared reduced tensor component norm.
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

    // ----- transfers between the full and reduced global layouts -----

    /// Truncation of a full global kinematic vector.
    pub fn reduce_v(&self, x: &DVector<f64>) -> DVector<f64> {
        let mut out = DVector::zeros(self.v_dim());
        for el in 0..self.ops.len() {
            let local = &self.ops[el].r_v * self.complex.restrict_v(el, x);
            for (i, &g) in self.v_map(el).iter().enumerate() {
                out[g] = local[i];
            }
        }
        out
    }

    /// Truncation of a full global tensor vector.
    pub fn reduce_s(&self, x: &DVector<f64>) -> DVector<f64> {
        let mut out = DVector::zeros(self.s_dim());
        for el in 0..self.ops.len() {
            let local = &self.ops[el].r_sigma * self.complex.restrict_s(el, x);
            for (i, &g) in self.s_map(el).iter().enumerate() {
                out[g] = local[i];
            }
        }
        out
    }

    /// Extension of a reduced global kinematic vector (shared blocks are
    /// copied, so the per-element extensions agree where they overlap).
    pub fn extend_v(&self, x: &DVector<f64>) -> DVector<f64> {
        let mut out = DVector::zeros(self.complex.v_dim());
        for el in 0..self.ops.len() {
            let local = &self.ops[el].e_v * self.restrict_reduced_v(el, x);
            for (i, &g) in self.complex.v_map(el).iter().enumerate() {
                out[g] = local[i];
            }
        }
        out
    }

    /// Extension of a reduced global tensor vector.
    pub fn extend_s(&self, x: &DVector<f64>) -> DVector<f64> {
        let mut out = DVector::zeros(self.complex.s_dim());
        for el in 0..self.ops.len() {
            let local = &self.ops[el].e_sigma * self.restrict_reduced_s(el, x);
            for (i, &g) in self.complex.s_map(el).iter().enumerate() {
                out[g] = local[i];
            }
        }
        out
    }

    /// Restriction of a reduced global kinematic vector to an element.
    pub fn restrict_reduced_v(&self, el: usize, x: &DVector<f64>) -> DVector<f64> {
        let map = self.v_map(el);
        DVector::from_iterator(map.len(), map.iter().map(|&g| x[g]))
    }

    /// Restriction of a reduced global tensor vector to an element.
    pub fn restrict_reduced_s(&self, el: usize, x: &DVector<f64>) -> DVector<f64> {
        let map = self.s_map(el);
        DVector::from_iterator(map.len(), map.iter().map(|&g| x[g]))
    }

    /// Reduced kinematic interpolation (truncation of the full one).
    pub fn interpolate_v(&self, f: &VectorField) -> DVector<f64> {
        let mut out = DVector::zeros(self.v_dim());
        for el in 0..self.ops.len() {
            let local = &self.ops[el].r_v * self.complex.ops[el].interpolate_v(f);
            for (i, &g) in self.v_map(el).iter().enumerate() {
                out[g] = local[i];
            }
        }
        out
    }

    /// Reduced tensor interpolation.
    pub fn interpolate_s(&self, tau: &SymTensorField) -> DVector<f64> {
        let mut out = DVector::zeros(self.s_dim());
        for el in 0..self.ops.len() {
            let local = &self.ops[el].r_sigma * self.complex.ops[el].interpolate_s(tau);
            for (i, &g) in self.s_map(el).iter().enumerate() {
                out[g] = local[i];
            }
        }
        out
    }

    /// Frobenius norms `(|SDD o SUCSYM|, |SDD|, |SUCSYM|)` of the reduced
    /// global operators.
    pub fn composition_residual(&self) -> (f64, f64, f64) {
        let mut prod2 = 0.0;
        let mut dd2 = 0.0;
        for so in &self.ops {
            prod2 += (&so.sdd * &so.sucsym).norm_squared();
            dd2 += so.sdd.norm_squared();
        }
        let sucsym = self.assemble_sucsym();
        let u2: f64 = sucsym.val.iter().map(|v| v * v).sum();
        (prod2.sqrt(), dd2.sqrt(), u2.sqrt())
    }

    /// Worst saddle inf-sup constant over the elements.
    pub fn min_inf_sup(&self) -> f64 {
        self.ops.iter().map(|s| s.inf_sup).fold(f64::INFINITY, f64::min)
    }

    /// Worst right-hand-side cross-check over the elements.
    pub fn max_rhs_cross_check(&self) -> f64 {
        self.ops.iter().map(|s| s.rhs_cross_check).fold(0.0, f64::max)
    }

    /// Total dofs removed, summed over elements.
    pub fn dof_reduction(&self) -> usize {
        self.ops.iter().map(|s| s.dof_reduction()).sum()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ddr::stack_resize;
    use crate::fields::ScalarField;
    use crate::mesh::{hexagon_mesh, square_mesh, triangle_mesh, DEFAULT_THETA};
    use crate::oracle::RawPoly;

    fn single(mesh: &Mesh, k: usize) -> (ElementOps, SerendipityOps) {
        let ops = ElementOps::new(mesh, 0, k);
        let ser = SerendipityOps::new(mesh, &ops, DEFAULT_THETA);
        (ops, ser)
    }

    fn random_coords(n: usize, seed: f64) -> DVector<f64> {
        DVector::from_fn(n, |i, _| (seed + 0.7 * i as f64).sin())
    }

    #[test]
    fn reduced_dimensions_match_the_selection() {
        let tri = triangle_mesh(1);
        let (ops, ser) = single(&tri, 3);
        assert_eq!(ser.selection.eta, 3);
        assert_eq!(ser.ell(), 0);
        assert_eq!(ops.v_dim(), 24);
        assert_eq!(ser.v_dim(), 20);
        assert_eq!(ser.s_dim(), 20);
        assert_eq!(ser.dof_reduction(), 8);

        let sq = square_mesh(1);
        let (ops, ser) = single(&sq, 3);
        assert_eq!(ser.selection.eta, 4);
        assert_eq!(ser.ell(), -1);
        assert_eq!(ops.v_dim(), 30);
        assert_eq!(ser.v_dim(), 24);
        assert_eq!(ser.s_dim(), 24);
        assert_eq!(ser.dof_reduction(), 12);
    }

    #[test]
    fn complement_subspace_is_degree_nested() {
        // The reduction truncates complement coefficients, which is only
        // the orthogonal projection because the first members of the
        // degree `k - 1` complement basis span the lower-degree complement
        // exactly.
        for k in [3usize, 4, 5] {
            let mesh = hexagon_mesh(2);
            let ops = ElementOps::new(&mesh, 0, k);
            let ki = k as i32;
            for m in 0..(ki - 1) {
                let small = subspace::choly(&ops.basis, m);
                if small.is_empty() {
                    continue;
                }
                let pad = stack_resize(Codomain::SymTensor, dim_p(m), dim_p(ki - 1));
                let diff = &pad * &small.coords - ops.choly.coords.columns(0, small.len());
                assert!(diff.norm() < 1e-12, "k={k} m={m}: {}", diff.norm());
            }
        }
    }

    #[test]
    fn saddle_is_well_posed_and_cross_checked() {
        for (name, mesh) in [
            ("triangle", triangle_mesh(1)),
            ("square", square_mesh(1)),
            ("hexagon", hexagon_mesh(2)),
        ] {
            for k in [3usize, 4, 5] {
                let (_, ser) = single(&mesh, k);
                assert!(
                    ser.inf_sup > 1e-10,
                    "{name} k={k}: inf-sup {}",
                    ser.inf_sup
                );
                assert!(
                    ser.rhs_cross_check < 1e-11,
                    "{name} k={k}: cross-check {}",
                    ser.rhs_cross_check
                );
            }
        }
    }

    #[test]
    fn serendipity_operators_are_polynomially_consistent() {
        for k in [3usize, 4] {
            let ki = k as i32;
            for mesh in [triangle_mesh(1), square_mesh(1), hexagon_mesh(2)] {
                let (ops, ser) = single(&mesh, k);

                // Kinematic side: exhaust the degree-k vector basis.
                for j in 0..2 * dim_p(ki) {
                    let mut c = DVector::zeros(2 * dim_p(ki));
                    c[j] = 1.0;
                    let v = ops.basis.poly_from_on(&c, ki, Codomain::Vector);
                    let dof = ops.interpolate_v_poly(&v);
                    let red = &ser.r_v * &dof;
                    let sc = ops.basis.on_from_poly(&v.apply(DiffOp::SymCurl), ki - 1);
                    let scale = sc.norm().max(1.0);
                    assert!(
                        (&ser.s_v * &red - sc).norm() / scale < 1e-10,
                        "S_V inconsistent (k={k}, member {j})"
                    );
                    assert!(
                        (&ser.e_v * &red - &dof).norm() / dof.norm().max(1.0) < 1e-10,
                        "E_V inconsistent (k={k}, member {j})"
                    );
                }

                // Tensor side: exhaust the degree `k - 1` tensor basis.
                for j in 0..3 * dim_p(ki - 1) {
                    let mut c = DVector::zeros(3 * dim_p(ki - 1));
                    c[j] = 1.0;
                    let tau = ops.basis.poly_from_on(&c, ki - 1, Codomain::SymTensor);
                    let dof = ops.interpolate_s_poly(&tau);
                    let red = &ser.r_sigma * &dof;
                    assert!(
                        (&ser.s_sigma * &red - &c).norm() < 1e-10,
                        "S_Sigma inconsistent (k={k}, member {j})"
                    );
                    assert!(
                        (&ser.e_sigma * &red - &dof).norm() / dof.norm().max(1.0) < 1e-10,
                        "E_Sigma inconsistent (k={k}, member {j})"
                    );
                }
            }
        }
    }

    #[test]
    fn reductions_invert_extensions() {
        for k in [3usize, 4, 5] {
            for mesh in [triangle_mesh(1), square_mesh(1), hexagon_mesh(2)] {
                let (_, ser) = single(&mesh, k);
                let rv = &ser.r_v * &ser.e_v - DMatrix::identity(ser.v_dim(), ser.v_dim());
                assert!(rv.norm() < 1e-10, "R_V E_V != id (k={k}): {}", rv.norm());
                let rs = &ser.r_sigma * &ser.e_sigma
                    - DMatrix::identity(ser.s_dim(), ser.s_dim());
                assert!(rs.norm() < 1e-10, "R_S E_S != id (k={k}): {}", rs.norm());
            }
        }
    }

    #[test]
    fn serendipity_tensors_have_the_right_projections() {
        for k in [3usize, 4] {
            for mesh in [triangle_mesh(1), square_mesh(1), hexagon_mesh(2)] {
                let (ops, ser) = single(&mesh, k);
                // Complement moments of the extended field match those of
                // the kinematic serendipity tensor.
                let lhs = ops.choly.project_matrix(&(&ops.csym * &ser.e_v));
                let rhs = ops.choly.project_matrix(&ser.s_v);
                assert!(
                    (&lhs - &rhs).norm() / rhs.norm().max(1.0) < 1e-10,
                    "complement projection of Csym E_V mismatch (k={k})"
                );
                // Reduced complement moments of the tensor serendipity
                // operator reproduce the input coefficients.
                let nred = 2 * dim_p(ser.ell());
                let proj = ops.choly.project_matrix(&ser.s_sigma);
                let mut sel = DMatrix::zeros(nred, ser.s_dim());
                for j in 0..nred {
                    sel[(j, ops.s_choly_offset() + j)] = 1.0;
                }
                assert!(
                    (proj.rows(0, nred) - sel).norm() < 1e-10,
                    "reduced complement moments of S_Sigma mismatch (k={k})"
                );
            }
        }
    }

    #[test]
    fn serendipity_operators_commute() {
        for k in [3usize, 4, 5] {
            for mesh in [triangle_mesh(1), square_mesh(1), hexagon_mesh(2)] {
                let (_, ser) = single(&mesh, k);
                let lhs = &ser.s_sigma * &ser.sucsym;
                let diff = (&lhs - &ser.s_v).norm() / ser.s_v.norm().max(1.0);
                assert!(diff < 1e-10, "S_Sigma o sucsym != S_V (k={k}): {diff}");
            }
        }
    }

    #[test]
    fn reduced_cochain_maps_commute_with_the_full_ones() {
        for k in [3usize, 4] {
            for mesh in [triangle_mesh(1), square_mesh(1), hexagon_mesh(2)] {
                let (ops, ser) = single(&mesh, k);
                // R_S UCSYM (E_V R_V) = R_S UCSYM.
                let lhs = &ser.r_sigma * &ops.ucsym * &ser.e_v * &ser.r_v;
                let rhs = &ser.r_sigma * &ops.ucsym;
                assert!(
                    (&lhs - &rhs).norm() / rhs.norm().max(1.0) < 1e-10,
                    "reduction does not commute (k={k})"
                );
                // E_S sucsym = UCSYM E_V.
                let lhs = &ser.e_sigma * &ser.sucsym;
                let rhs = &ops.ucsym * &ser.e_v;
                assert!(
                    (&lhs - &rhs).norm() / rhs.norm().max(1.0) < 1e-10,
                    "extension does not commute (k={k})"
                );
            }
        }
    }

    #[test]
    fn reduced_complex_property_holds_locally() {
        for k in [3usize, 4, 5] {
            for mesh in [triangle_mesh(1), square_mesh(1), hexagon_mesh(2)] {
                let (_, ser) = single(&mesh, k);
                let prod = &ser.sdd * &ser.sucsym;
                let scale = ser.sdd.norm() * ser.sucsym.norm();
                assert!(
                    prod.norm() / scale.max(1.0) < 1e-12,
                    "sdd o sucsym != 0 (k={k}): {}",
                    prod.norm()
                );
            }
        }
    }

    #[test]
    fn saddle_diagonal_sums_the_four_seminorms() {
        let mesh = hexagon_mesh(2);
        let k = 4usize;
        let ki = k as i32;
        let ops = ElementOps::new(&mesh, 0, k);
        let ser = SerendipityOps::new(&mesh, &ops, DEFAULT_THETA);
        let nred = 2 * dim_p(ser.ell());
        let parts = saddle_parts(&ops, nred);
        let nt = 3 * dim_p(ki - 1);
        let h = ops.h;
        let ups = random_coords(nt, 0.3);
        let mu = random_coords(nred, 1.1);

        // Full quadratic form of the saddle matrix at (ups, mu): the
        // coupling terms cancel pairwise.
        let mut m = DMatrix::zeros(nt + nred, nt + nred);
        m.view_mut((0, 0), (nt, nt)).copy_from(&parts.s);
        m.view_mut((0, nt), (nt, nred)).copy_from(&(-&parts.c));
        m.view_mut((nt, 0), (nred, nt)).copy_from(&parts.c.transpose());
        let mut z = DVector::zeros(nt + nred);
        z.rows_mut(0, nt).copy_from(&ups);
        z.rows_mut(nt, nred).copy_from(&mu);
        let quad = (z.transpose() * &m * &z)[(0, 0)];

        let mut parts_sum = h.powi(4) * (parts.ddd * &ups).norm_squared();
        for le in 0..ops.edges.len() {
            parts_sum += h * (&parts.nn[le] * &ups).norm_squared();
            parts_sum += h.powi(3) * (&parts.de[le] * &ups).norm_squared();
        }
        for lv in 0..ops.n_vertices {
            let vals = &parts.vv[lv] * &ups;
            parts_sum +=
                h * h * (vals[0] * vals[0] + 2.0 * vals[1] * vals[1] + vals[2] * vals[2]);
        }
        assert!(
            (quad - parts_sum).abs() / parts_sum < 1e-12,
            "{quad} vs {parts_sum}"
        );
    }

    #[test]
    fn two_selected_edges_give_the_identity_reduction() {
        // With an unreachable threshold the selection falls back to a pair
        // of edges, the reduced degree equals `k - 2`, and every map is the
        // identity between spaces of equal size.
        let mesh = square_mesh(1);
        let ops = ElementOps::new(&mesh, 0, 3);
        let ser = SerendipityOps::new(&mesh, &ops, f64::INFINITY);
        assert_eq!(ser.selection.eta, 2);
        assert_eq!(ser.ell(), 1);
        assert_eq!(ser.v_dim(), ops.v_dim());
        assert_eq!(ser.s_dim(), ops.s_dim());
        let idv = DMatrix::identity(ops.v_dim(), ops.v_dim());
        let ids = DMatrix::identity(ops.s_dim(), ops.s_dim());
        assert!((&ser.e_v - &idv).norm() < 1e-10, "{}", (&ser.e_v - &idv).norm());
        assert!((&ser.e_sigma - &ids).norm() < 1e-10);
        assert!((&ser.sucsym - &ops.ucsym).norm() / ops.ucsym.norm() < 1e-12);
        assert!((&ser.sdd - &ops.dd).norm() / ops.dd.norm() < 1e-12);
    }

    #[test]
    fn global_reduced_complex_and_layout() {
        for (mesh, k) in [
            (square_mesh(3), 3usize),
            (hexagon_mesh(2), 4),
            (triangle_mesh(1), 4),
        ] {
            let complex = Complex::new(&mesh, k);
            let ser = SerendipityComplex::new(&complex, DEFAULT_THETA);

            // Euler characteristic is preserved by the reduction.
            let full = complex.v_dim() as i64 - complex.s_dim() as i64
                + complex.q_dim() as i64;
            let red = ser.v_dim() as i64 - ser.s_dim() as i64 + ser.q_dim() as i64;
            assert_eq!(full, red);
            assert_eq!(
                complex.v_dim() + complex.s_dim(),
                ser.v_dim() + ser.s_dim() + ser.dof_reduction()
            );

            assert!(ser.min_inf_sup() > 1e-10);
            assert!(ser.max_rhs_cross_check() < 1e-11);
            assert!(ser.sucsym_consistency() < 1e-12);

            let (prod, dd, uc) = ser.composition_residual();
            assert!(prod / (dd * uc).max(1.0) < 1e-13, "k={k}: {prod}");

            // Assembled operator agrees with per-element application.
            let sucsym = ser.assemble_sucsym();
            let x = random_coords(ser.v_dim(), 0.17);
            let y = sucsym.matvec(&x);
            for el in 0..ser.ops.len() {
                let local = &ser.ops[el].sucsym * ser.restrict_reduced_v(el, &x);
                for (i, &g) in ser.s_map(el).iter().enumerate() {
                    assert!(
                        (y[g] - local[i]).abs() < 1e-11 * (1.0 + local[i].abs()),
                        "assembled sucsym row mismatch"
                    );
                }
            }
        }
    }

    #[test]
    fn global_cochain_identities() {
        let mesh = square_mesh(3);
        let complex = Complex::new(&mesh, 3);
        let ser = SerendipityComplex::new(&complex, DEFAULT_THETA);
        let sucsym = ser.assemble_sucsym();
        let ucsym = complex.assemble_ucsym();

        // Reduction is a cochain map: sucsym . R_V = R_S . ucsym.
        let x = random_coords(complex.v_dim(), 0.41);
        let lhs = sucsym.matvec(&ser.reduce_v(&x));
        let rhs = ser.reduce_s(&ucsym.matvec(&x));
        assert!((&lhs - &rhs).norm() / rhs.norm().max(1.0) < 1e-11);

        // Extension is a cochain map: E_S . sucsym = ucsym . E_V.
        let xr = random_coords(ser.v_dim(), 0.83);
        let lhs = ser.extend_s(&sucsym.matvec(&xr));
        let rhs = ucsym.matvec(&ser.extend_v(&xr));
        assert!((&lhs - &rhs).norm() / rhs.norm().max(1.0) < 1e-11);

        // Interpolates of fields with vanishing sym-curl survive the
        // round trip (degree-one fields with symmetric gradient).
        let x1 = RawPoly::monomial(1, 0, 1.0);
        let x2 = RawPoly::monomial(0, 1, 1.0);
        let rot = VectorField::new(
            ScalarField::from_poly(x2.scale(-1.0)),
            ScalarField::from_poly(x1),
        );
        let dof = complex.interpolate_v(&rot);
        let back = ser.extend_v(&ser.reduce_v(&dof));
        assert!((&back - &dof).norm() / dof.norm() < 1e-11);

        // And the interpolation itself commutes with the reduction.
        let p1 = RawPoly::monomial(2, 1, 1.0).add(&RawPoly::monomial(0, 2, -0.5));
        let p2 = RawPoly::monomial(1, 0, 1.0).add(&RawPoly::monomial(0, 3, 2.0));
        let field = VectorField::new(ScalarField::from_poly(p1), ScalarField::from_poly(p2));
        let direct = ser.interpolate_v(&field);
        let reduced = ser.reduce_v(&complex.interpolate_v(&field));
        assert!((&direct - &reduced).norm() / reduced.norm() < 1e-12);

        // Its sym-curl interpolates consistently through the reduced map.
        let sc = SymTensorField::symcurl_of(&field);
        let lhs = sucsym.matvec(&ser.interpolate_v(&field));
        let rhs = ser.interpolate_s(&sc);
        assert!((&lhs - &rhs).norm() / rhs.norm().max(1.0) < 1e-10);
    }

    #[test]
    fn extension_membership_certificate() {
        // E_S R_S tau - tau lies in the range of the full sym-curl: checked
        // by least squares on a small mesh.
        let mesh = square_mesh(2);
        let complex = Complex::new(&mesh, 3);
        let ser = SerendipityComplex::new(&complex, DEFAULT_THETA);
        let ucsym = complex.assemble_ucsym().to_dense();
        let x = random_coords(complex.s_dim(), 0.29);
        let diff = ser.extend_s(&ser.reduce_s(&x)) - &x;
        let res = crate::linalg::lstsq_relative_residual(&ucsym, &diff);
        assert!(res < 1e-10, "membership residual {res}");
    }

    #[test]
    fn reduced_products_match_extended_ones() {
        let mesh = hexagon_mesh(2);
        let complex = Complex::new(&mesh, 3);
        let ser = SerendipityComplex::new(&complex, DEFAULT_THETA);
        let gv = ser.assemble_gram_v();
        let gs = ser.assemble_gram_s();
        let gv_full = complex.assemble_gram_v();
        let gs_full = complex.assemble_gram_s();

        let x = random_coords(ser.v_dim(), 0.37);
        let y = random_coords(ser.v_dim(), 0.61);
        let lhs = (x.transpose() * gv.matvec(&y))[(0, 0)];
        let ex = ser.extend_v(&x);
        let ey = ser.extend_v(&y);
        let rhs = (ex.transpose() * gv_full.matvec(&ey))[(0, 0)];
        assert!((lhs - rhs).abs() / rhs.abs().max(1.0) < 1e-11);

        let x = random_coords(ser.s_dim(), 0.53);
        let y = random_coords(ser.s_dim(), 0.71);
        let lhs = (x.transpose() * gs.matvec(&y))[(0, 0)];
        let ex = ser.extend_s(&x);
        let ey = ser.extend_s(&y);
        let rhs = (ex.transpose() * gs_full.matvec(&ey))[(0, 0)];
        assert!((lhs - rhs).abs() / rhs.abs().max(1.0) < 1e-11);
    }
}
