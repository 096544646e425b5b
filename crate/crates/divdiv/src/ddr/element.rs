//! All local matrices of the discrete complex on a single element.
//!
//! Every operator is a dense matrix acting on the local degree-of-freedom
//! vector (vertices, then edges, then element blocks; see the module
//! documentation). The edge frame `(t_E, n_E)` is always the global one, so
//! rows attached to shared entities come out identical in the elements on
//! both sides of an edge.

use nalgebra::{DMatrix, DVector};

use super::{
    s_edge_block, s_holy_block, s_local_dim, v_edge_block, v_element_block, v_local_dim,
    S_VERTEX_BLOCK, V_VERTEX_BLOCK,
};
use crate::fields::{SymTensorField, VectorField};
use crate::geometry::Vec2;
use crate::linalg::ScaledLu;
use crate::mesh::Mesh;
use crate::poly::basis::{EdgeBasis, ElementBasis};
use crate::poly::subspace::{self, SubspaceBasis};
use crate::poly::{dim_p, dim_p_edge, Codomain, DiffOp, Polynomial};

/// Local operators of the degree-`k` complex on one element.
pub struct ElementOps {
    pub element: usize,
    pub k: usize,
    pub h: f64,
    pub n_vertices: usize,
    /// Vertex coordinates, in the element's loop order.
    pub vertex_xy: Vec<Vec2>,
    pub basis: ElementBasis,
    /// Edge bases in local order, each carrying the global frame.
    pub edges: Vec<EdgeBasis>,
    /// Outward orientation signs `omega_TE`.
    pub omega: Vec<f64>,
    /// Local vertex positions of each edge's `[start, end]` (relative to the
    /// global tangent).
    pub endpoint_lv: Vec<[usize; 2]>,
    /// Hessian subspace of degree `k - 4`.
    pub holy: SubspaceBasis,
    /// Its complement of degree `k - 1`.
    pub choly: SubspaceBasis,
    /// Per edge, the boundary trace system: maps kinematic dofs to the
    /// stacked edge coefficients (degree `k`, x then y) of the polynomial
    /// matching the edge moments and the endpoint values and tangential
    /// derivatives.
    pub trace: Vec<DMatrix<f64>>,
    /// Discrete sym-curl into full symmetric tensors of degree `k - 1`
    /// (stacked orthonormal coordinates).
    pub csym: DMatrix<f64>,
    /// Interpolation of the discrete sym-curl into the tensor space.
    pub ucsym: DMatrix<f64>,
    /// Kinematic potential of degree `k` (stacked coordinates).
    pub pv: DMatrix<f64>,
    /// Per edge, the normal-normal trace of degree `k - 1` of the tensor
    /// potential (edge coefficients from tensor dofs).
    pub psigma_e: Vec<DMatrix<f64>>,
    /// Discrete div-div into scalars of degree `k - 2`.
    pub dd: DMatrix<f64>,
    /// Tensor potential of degree `k - 1` (stacked coordinates).
    pub psigma: DMatrix<f64>,
    /// Local product on the kinematic space (potential part plus boundary
    /// stabilization).
    pub gram_v: DMatrix<f64>,
    /// Local product on the tensor space.
    pub gram_s: DMatrix<f64>,
    /// Diagonal weights of the squared kinematic component norm.
    pub tnorm_v: DVector<f64>,
    /// Diagonal weights of the squared tensor component norm.
    pub tnorm_s: DVector<f64>,
}

impl ElementOps {
    pub fn new(mesh: &Mesh, element: usize, k: usize) -> ElementOps {
        assert!(k >= 3, "the complex needs k >= 3");
        let ki = k as i32;
        let el = &mesh.elements[element];
        let n = el.vertices.len();
        let h = el.h;
        let vertex_xy: Vec<Vec2> = el.vertices.iter().map(|&v| mesh.vertices[v]).collect();

        let basis = ElementBasis::new(mesh, element, ki + 2, (2 * ki + 4) as usize);
        let edges: Vec<EdgeBasis> = el
            .edges
            .iter()
            .map(|&e| EdgeBasis::new(mesh, e, ki, (2 * ki + 2) as usize))
            .collect();
        let omega = el.omega_te.clone();
        let endpoint_lv: Vec<[usize; 2]> = el
            .edges
            .iter()
            .map(|&e| {
                let ends = mesh.edges[e].v;
                let find = |v: usize| el.vertices.iter().position(|&w| w == v).unwrap();
                [find(ends[0]), find(ends[1])]
            })
            .collect();

        let holy = subspace::holy(&basis, ki - 4);
        let choly = subspace::choly(&basis, ki - 1);

        let mut ops = ElementOps {
            element,
            k,
            h,
            n_vertices: n,
            vertex_xy,
            basis,
            edges,
            omega,
            endpoint_lv,
            holy,
            choly,
            trace: Vec::new(),
            csym: DMatrix::zeros(0, 0),
            ucsym: DMatrix::zeros(0, 0),
            pv: DMatrix::zeros(0, 0),
            psigma_e: Vec::new(),
            dd: DMatrix::zeros(0, 0),
            psigma: DMatrix::zeros(0, 0),
            gram_v: DMatrix::zeros(0, 0),
            gram_s: DMatrix::zeros(0, 0),
            tnorm_v: DVector::zeros(0),
            tnorm_s: DVector::zeros(0),
        };
        ops.trace = ops.build_traces();
        ops.csym = ops.build_csym();
        ops.ucsym = ops.build_ucsym();
        ops.pv = ops.build_pv();
        ops.psigma_e = ops.build_psigma_e();
        ops.dd = ops.build_dd();
        ops.psigma = ops.build_psigma();
        ops.gram_v = ops.build_gram_v();
        ops.gram_s = ops.build_gram_s();
        ops.tnorm_v = ops.build_tnorm_v();
        ops.tnorm_s = ops.build_tnorm_s();
        ops
    }

    pub fn v_dim(&self) -> usize {
        v_local_dim(self.k, self.n_vertices)
    }

    pub fn s_dim(&self) -> usize {
        s_local_dim(self.k, self.n_vertices)
    }

    pub fn v_vertex_offset(&self, lv: usize) -> usize {
        lv * V_VERTEX_BLOCK
    }

    pub fn v_edge_offset(&self, le: usize) -> usize {
        self.n_vertices * V_VERTEX_BLOCK + le * v_edge_block(self.k)
    }

    pub fn v_element_offset(&self) -> usize {
        self.n_vertices * (V_VERTEX_BLOCK + v_edge_block(self.k))
    }

    pub fn s_vertex_offset(&self, lv: usize) -> usize {
        lv * S_VERTEX_BLOCK
    }

    /// Offset of the normal-normal block of a local edge; the closure block
    /// follows at `+ dim_p_edge(k - 3)`.
    pub fn s_edge_offset(&self, le: usize) -> usize {
        self.n_vertices * S_VERTEX_BLOCK + le * s_edge_block(self.k)
    }

    pub fn s_holy_offset(&self) -> usize {
        self.n_vertices * (S_VERTEX_BLOCK + s_edge_block(self.k))
    }

    pub fn s_choly_offset(&self) -> usize {
        self.s_holy_offset() + s_holy_block(self.k)
    }

    // ----- reconstruction matrices -----

    /// Hermite-type boundary trace: on each edge, the unique `P^k` vector
    /// polynomial with the stored moments of degree `k - 4`, the endpoint
    /// values and the endpoint tangential derivatives.
    fn build_traces(&self) -> Vec<DMatrix<f64>> {
        let ki = self.k as i32;
        let nk = dim_p_edge(ki);
        let nmom = dim_p_edge(ki - 4);
        let vdim = self.v_dim();
        let mut out = Vec::with_capacity(self.edges.len());
        for (le, eb) in self.edges.iter().enumerate() {
            let mut a = DMatrix::zeros(nk, nk);
            for i in 0..nmom {
                a[(i, i)] = 1.0;
            }
            let ends = eb.on_end_values(ki);
            let dends = eb.on_deriv_end_values(ki);
            for j in 0..nk {
                a[(nmom, j)] = ends[(0, j)];
                a[(nmom + 1, j)] = ends[(1, j)];
                a[(nmom + 2, j)] = dends[(0, j)];
                a[(nmom + 3, j)] = dends[(1, j)];
            }
            let lu = ScaledLu::new(a);
            let mut tr = DMatrix::zeros(2 * nk, vdim);
            for c in 0..2 {
                let mut rhs = DMatrix::zeros(nk, vdim);
                for i in 0..nmom {
                    rhs[(i, self.v_edge_offset(le) + c * nmom + i)] = 1.0;
                }
                for (end, lv) in self.endpoint_lv[le].iter().enumerate() {
                    let vo = self.v_vertex_offset(*lv);
                    rhs[(nmom + end, vo + c)] = 1.0;
                    // Tangential derivative (GRAD v) t_E of component c.
                    rhs[(nmom + 2 + end, vo + 2 + 2 * c)] = eb.tangent.x;
                    rhs[(nmom + 2 + end, vo + 2 + 2 * c + 1)] = eb.tangent.y;
                }
                let x = lu.solve(&rhs).expect("edge trace system is singular");
                tr.rows_mut(c * nk, nk).copy_from(&x);
            }
            out.push(tr);
        }
        out
    }

    /// Boundary pairing `sum_E omega_TE int_E v_dT . (tau t_E)` for the
    /// family of symmetric tensors whose stacked coordinates (degree `m`)
    /// are the columns of `coords`; one row per column, over kinematic dofs.
    pub fn boundary_vt_pairing(&self, coords: &DMatrix<f64>, m: i32) -> DMatrix<f64> {
        let ki = self.k as i32;
        let nk = dim_p_edge(ki);
        let dim = dim_p(m);
        let mut out = DMatrix::zeros(coords.ncols(), self.v_dim());
        for (le, eb) in self.edges.iter().enumerate() {
            let ve = self.basis.on_values_at(&eb.quad.points, m);
            let comp = |c: usize| &ve * coords.rows(c * dim, dim);
            let (v0, v1, v2) = (comp(0), comp(1), comp(2));
            let t = eb.tangent;
            let tx = &v0 * t.x + &v1 * t.y;
            let ty = &v1 * t.x + &v2 * t.y;
            let eon = eb.on_values(ki);
            let ex = &eon * self.trace[le].rows(0, nk);
            let ey = &eon * self.trace[le].rows(nk, nk);
            out += self.omega[le]
                * (weighted_product(&tx, &eb.quad.weights, &ex)
                    + weighted_product(&ty, &eb.quad.weights, &ey));
        }
        out
    }

    /// Discrete sym-curl: tested against the stacked orthonormal tensor
    /// basis of degree `k - 1`. The tested values divided by the Frobenius
    /// weight of each test component are the coordinates.
    fn build_csym(&self) -> DMatrix<f64> {
        let ki = self.k as i32;
        let dim = dim_p(ki - 1);
        let ntest = 3 * dim;
        let ident = DMatrix::identity(ntest, ntest);
        let mut csym = self.boundary_vt_pairing(&ident, ki - 1);
        // Volume term -int_T v_T . VROT tau_j.
        let eo = self.v_element_offset();
        for j in 0..ntest {
            let tau = self.basis.poly_from_on(
                &ident.column(j).into_owned(),
                ki - 1,
                Codomain::SymTensor,
            );
            let vr = self.basis.on_from_poly(&tau.apply(DiffOp::VRot), ki - 2);
            for i in 0..vr.len() {
                csym[(j, eo + i)] -= vr[i];
            }
        }
        // The xy test members have squared Frobenius norm 2, not 1.
        for j in dim..2 * dim {
            for c in 0..csym.ncols() {
                csym[(j, c)] *= 0.5;
            }
        }
        csym
    }

    /// Interpolation of the discrete sym-curl on the tensor dofs. The edge
    /// components carry the sign that makes the normal-normal trace of a
    /// sym-curl, `(SYMCURL v) n . n = -d_t v . n`, and its closure function,
    /// `d_E (SYMCURL v) = -d_t^2 v . t`, exact on boundary traces.
    fn build_ucsym(&self) -> DMatrix<f64> {
        let ki = self.k as i32;
        let nk = dim_p_edge(ki);
        let mut u = DMatrix::zeros(self.s_dim(), self.v_dim());
        // Vertex blocks: the trace-free part of the gradient.
        for lv in 0..self.n_vertices {
            let so = self.s_vertex_offset(lv);
            let vo = self.v_vertex_offset(lv);
            u[(so, vo + 3)] = 1.0; // G_12
            u[(so + 1, vo + 5)] = 0.5; // (G_22 - G_11) / 2
            u[(so + 1, vo + 2)] = -0.5;
            u[(so + 2, vo + 4)] = -1.0; // -G_21
        }
        // Edge blocks from the boundary trace.
        for (le, eb) in self.edges.iter().enumerate() {
            let tx = self.trace[le].rows(0, nk);
            let ty = self.trace[le].rows(nk, nk);
            let d1 = eb.on_deriv_values(ki);
            let dn = (&d1 * tx) * eb.normal.x + (&d1 * ty) * eb.normal.y;
            let proj_nn = edge_project_cols(eb, &dn, ki - 3);
            let d2 = eb.on_deriv2_values(ki);
            let dt = (&d2 * tx) * eb.tangent.x + (&d2 * ty) * eb.tangent.y;
            let proj_de = edge_project_cols(eb, &dt, ki - 2);
            let so = self.s_edge_offset(le);
            u.rows_mut(so, proj_nn.nrows()).copy_from(&(-&proj_nn));
            u.rows_mut(so + dim_p_edge(ki - 3), proj_de.nrows())
                .copy_from(&(-&proj_de));
        }
        // Element blocks: projections of the sym-curl itself.
        let resize = stack_resize(Codomain::SymTensor, dim_p(ki - 1), dim_p(ki - 4));
        let hrows = self.holy.project_matrix(&(&resize * &self.csym));
        u.rows_mut(self.s_holy_offset(), hrows.nrows()).copy_from(&hrows);
        let crows = self.choly.project_matrix(&self.csym);
        u.rows_mut(self.s_choly_offset(), crows.nrows()).copy_from(&crows);
        u
    }

    /// Kinematic potential, defined by testing against the row-rotation of
    /// the degree `k + 1` complement subspace (an isomorphism onto vector
    /// polynomials of degree `k`).
    fn build_pv(&self) -> DMatrix<f64> {
        let ki = self.k as i32;
        let choly_hi = subspace::choly(&self.basis, ki + 1);
        let w = subspace::operator_matrix(
            &self.basis,
            &choly_hi,
            &|p| p.apply(DiffOp::VRot),
            ki,
            Codomain::Vector,
        );
        let pad = stack_resize(Codomain::SymTensor, dim_p(ki - 1), dim_p(ki + 1));
        let mut rhs = -choly_hi.project_matrix(&(&pad * &self.csym));
        rhs += self.boundary_vt_pairing(&choly_hi.coords, ki + 1);
        ScaledLu::new(w.transpose())
            .solve(&rhs)
            .expect("kinematic potential system is singular")
    }

    /// Edge potential: matches the normal-normal moments and the vertex
    /// normal-normal values.
    fn build_psigma_e(&self) -> Vec<DMatrix<f64>> {
        let ki = self.k as i32;
        let nkm1 = dim_p_edge(ki - 1);
        let nmom = dim_p_edge(ki - 3);
        let sdim = self.s_dim();
        let mut out = Vec::with_capacity(self.edges.len());
        for (le, eb) in self.edges.iter().enumerate() {
            let mut a = DMatrix::zeros(nkm1, nkm1);
            for i in 0..nmom {
                a[(i, i)] = 1.0;
            }
            let ends = eb.on_end_values(ki - 1);
            for j in 0..nkm1 {
                a[(nmom, j)] = ends[(0, j)];
                a[(nmom + 1, j)] = ends[(1, j)];
            }
            let mut rhs = DMatrix::zeros(nkm1, sdim);
            for i in 0..nmom {
                rhs[(i, self.s_edge_offset(le) + i)] = 1.0;
            }
            let nrm = eb.normal;
            for (end, lv) in self.endpoint_lv[le].iter().enumerate() {
                let so = self.s_vertex_offset(*lv);
                rhs[(nmom + end, so)] = nrm.x * nrm.x;
                rhs[(nmom + end, so + 1)] = 2.0 * nrm.x * nrm.y;
                rhs[(nmom + end, so + 2)] = nrm.y * nrm.y;
            }
            out.push(ScaledLu::new(a).solve(&rhs).expect("edge potential system is singular"));
        }
        out
    }

    /// Boundary bilinear form
    /// `sum_E omega_TE (int_E P_E d_n q - int_E D q)
    ///  + sum_E omega_TE sum_V omega_EV (s_V n_E . t_E) q(x_V)`
    /// for scalar element polynomials `q`; one row per polynomial, over
    /// tensor dofs. Because the edge potential matches the normal-normal
    /// moments of degree `k - 3`, using it instead of the raw edge dofs is
    /// exact whenever `d_n q` has degree at most `k - 3` on the edge.
    pub fn boundary_q_bilinear(&self, qs: &[Polynomial]) -> DMatrix<f64> {
        let ki = self.k as i32;
        let nmom = dim_p_edge(ki - 3);
        let ncl = dim_p_edge(ki - 2);
        let mut out = DMatrix::zeros(qs.len(), self.s_dim());
        for (row, q) in qs.iter().enumerate() {
            let grad = q.apply(DiffOp::Grad);
            for (le, eb) in self.edges.iter().enumerate() {
                let om = self.omega[le];
                let nq = eb.quad.len();
                let mut dn = DVector::zeros(nq);
                let mut qv = DVector::zeros(nq);
                for (iq, &x) in eb.quad.points.iter().enumerate() {
                    let g = grad.eval(x);
                    dn[iq] = g[0] * eb.normal.x + g[1] * eb.normal.y;
                    qv[iq] = q.eval(x)[0];
                }
                let pn = eb.project(&dn, ki - 1);
                for j in 0..self.s_dim() {
                    let mut acc = 0.0;
                    for i in 0..pn.len() {
                        acc += pn[i] * self.psigma_e[le][(i, j)];
                    }
                    out[(row, j)] += om * acc;
                }
                let pq = eb.project(&qv, ki - 2);
                let so = self.s_edge_offset(le) + nmom;
                for i in 0..ncl {
                    out[(row, so + i)] -= om * pq[i];
                }
                // Vertex closure term.
                let t = eb.tangent;
                let nrm = eb.normal;
                let kappa = [nrm.x * t.x, nrm.x * t.y + nrm.y * t.x, nrm.y * t.y];
                for (end, lv) in self.endpoint_lv[le].iter().enumerate() {
                    let oev = if end == 0 { -1.0 } else { 1.0 };
                    let qval = q.eval(self.vertex_xy[*lv])[0];
                    let so = self.s_vertex_offset(*lv);
                    for c in 0..3 {
                        out[(row, so + c)] += om * oev * kappa[c] * qval;
                    }
                }
            }
        }
        out
    }

    /// Discrete div-div, tested against the orthonormal scalar basis of
    /// degree `k - 2`; the volume term sees only the Hessian block.
    fn build_dd(&self) -> DMatrix<f64> {
        let ki = self.k as i32;
        let ntest = dim_p(ki - 2);
        let qs: Vec<Polynomial> = (0..ntest)
            .map(|j| {
                let mut c = DVector::zeros(ntest);
                c[j] = 1.0;
                self.basis.poly_from_on(&c, ki - 2, Codomain::Scalar)
            })
            .collect();
        let mut dd = -self.boundary_q_bilinear(&qs);
        let ho = self.s_holy_offset();
        for (j, q) in qs.iter().enumerate() {
            let hess = q.apply(DiffOp::Hess);
            let hc = self.holy.project_coords(&self.basis.on_from_poly(&hess, ki - 4));
            for i in 0..hc.len() {
                dd[(j, ho + i)] += hc[i];
            }
        }
        dd
    }

    /// Tensor potential: a square system over the pair of test families
    /// (Hessians of scalars of degree `k + 1` orthogonal to affine
    /// functions, plus the degree `k - 1` complement subspace).
    fn build_psigma(&self) -> DMatrix<f64> {
        let ki = self.k as i32;
        let nt = 3 * dim_p(ki - 1);
        let pperp = subspace::pperp1(&self.basis, ki + 1);
        let n1 = pperp.len();
        let n2 = self.choly.len();
        assert_eq!(n1 + n2, nt);
        let qs: Vec<Polynomial> = (0..n1).map(|j| pperp.member(&self.basis, j)).collect();

        let mut a = DMatrix::zeros(nt, nt);
        let wf = frobenius_weights(dim_p(ki - 1));
        for (j, q) in qs.iter().enumerate() {
            let hess = self.basis.on_from_poly(&q.apply(DiffOp::Hess), ki - 1);
            for i in 0..nt {
                a[(j, i)] = wf[i] * hess[i];
            }
        }
        for j in 0..n2 {
            for i in 0..nt {
                a[(n1 + j, i)] = wf[i] * self.choly.coords[(i, j)];
            }
        }

        let mut rhs = self.boundary_q_bilinear(&qs);
        let nq = dim_p(ki - 2);
        for j in 0..n1 {
            // int_T (DD tau) q_j through the truncation of q_j.
            for i in 0..nq {
                let t = pperp.coords[(i, j)];
                if t != 0.0 {
                    for col in 0..self.s_dim() {
                        rhs[(j, col)] += t * self.dd[(i, col)];
                    }
                }
            }
        }
        let mut full = DMatrix::zeros(nt, self.s_dim());
        full.rows_mut(0, n1).copy_from(&rhs);
        let co = self.s_choly_offset();
        for j in 0..n2 {
            full[(n1 + j, co + j)] = 1.0;
        }
        ScaledLu::new(a).solve(&full).expect("tensor potential system is singular")
    }

    // ----- trace helpers shared with the serendipity construction -----

    /// Edge coefficients (degree `m_proj`) of the normal-normal trace of the
    /// tensor family with stacked coordinates `coords` of degree `m_src`.
    pub fn edge_nn_projection(
        &self,
        le: usize,
        coords: &DMatrix<f64>,
        m_src: i32,
        m_proj: i32,
    ) -> DMatrix<f64> {
        let eb = &self.edges[le];
        let dim = dim_p(m_src);
        let ve = self.basis.on_values_at(&eb.quad.points, m_src);
        let comp = |c: usize| &ve * coords.rows(c * dim, dim);
        let nrm = eb.normal;
        let vals = comp(0) * (nrm.x * nrm.x)
            + comp(1) * (2.0 * nrm.x * nrm.y)
            + comp(2) * (nrm.y * nrm.y);
        edge_project_cols(eb, &vals, m_proj)
    }

    /// Edge coefficients (degree `m_proj`) of the div-div closure function
    /// `d_E tau = d_t (tau n . t) + (VDIV tau) . n` of the tensor family
    /// with stacked coordinates `coords` of degree `m_src`.
    pub fn edge_de_projection(
        &self,
        le: usize,
        coords: &DMatrix<f64>,
        m_src: i32,
        m_proj: i32,
    ) -> DMatrix<f64> {
        let eb = &self.edges[le];
        let dim = dim_p(m_src);
        let [gx, gy] = self.basis.on_grad_values_at(&eb.quad.points, m_src);
        let dx = |c: usize| &gx * coords.rows(c * dim, dim);
        let dy = |c: usize| &gy * coords.rows(c * dim, dim);
        let t = eb.tangent;
        let nrm = eb.normal;
        let kappa = [nrm.x * t.x, nrm.x * t.y + nrm.y * t.x, nrm.y * t.y];
        let mut vals = DMatrix::zeros(eb.quad.len(), coords.ncols());
        for c in 0..3 {
            vals += (dx(c) * t.x + dy(c) * t.y) * kappa[c];
        }
        vals += (dx(0) + dy(1)) * nrm.x + (dx(1) + dy(2)) * nrm.y;
        edge_project_cols(eb, &vals, m_proj)
    }

    /// Values `(s_11, s_12, s_22)` at a local vertex of the tensor family
    /// with stacked coordinates `coords` of degree `m_src`.
    pub fn tensor_vertex_values(
        &self,
        lv: usize,
        coords: &DMatrix<f64>,
        m_src: i32,
    ) -> DMatrix<f64> {
        let dim = dim_p(m_src);
        let ve = self.basis.on_values_at(&[self.vertex_xy[lv]], m_src);
        let mut out = DMatrix::zeros(3, coords.ncols());
        for c in 0..3 {
            out.row_mut(c).copy_from(&(&ve * coords.rows(c * dim, dim)));
        }
        out
    }

    // ----- discrete products and norms -----

    fn build_gram_v(&self) -> DMatrix<f64> {
        let ki = self.k as i32;
        let nk = dim_p_edge(ki);
        let dp = dim_p(ki);
        let mut g = self.pv.transpose() * &self.pv;
        for (le, eb) in self.edges.iter().enumerate() {
            let ve = self.basis.on_values_at(&eb.quad.points, ki);
            let px = edge_project_cols(eb, &(&ve * self.pv.rows(0, dp)), ki);
            let py = edge_project_cols(eb, &(&ve * self.pv.rows(dp, dp)), ki);
            let dx = px - self.trace[le].rows(0, nk);
            let dy = py - self.trace[le].rows(nk, nk);
            g += self.h * (dx.transpose() * &dx + dy.transpose() * &dy);
        }
        g
    }

    fn build_gram_s(&self) -> DMatrix<f64> {
        let ki = self.k as i32;
        let nmom = dim_p_edge(ki - 3);
        let ncl = dim_p_edge(ki - 2);
        let wf = frobenius_weights(dim_p(ki - 1));
        let mut weighted = self.psigma.clone();
        for j in 0..weighted.ncols() {
            for i in 0..weighted.nrows() {
                weighted[(i, j)] *= wf[i];
            }
        }
        let mut g = self.psigma.transpose() * weighted;

        for le in 0..self.edges.len() {
            let d1 =
                &self.psigma_e[le] - self.edge_nn_projection(le, &self.psigma, ki - 1, ki - 1);
            g += self.h * (d1.transpose() * &d1);
            let mut d2 = -self.edge_de_projection(le, &self.psigma, ki - 1, ki - 2);
            let so = self.s_edge_offset(le) + nmom;
            for i in 0..ncl {
                d2[(i, so + i)] += 1.0;
            }
            g += self.h.powi(3) * (d2.transpose() * &d2);
        }
        for lv in 0..self.n_vertices {
            let mut d3 = -self.tensor_vertex_values(lv, &self.psigma, ki - 1);
            let so = self.s_vertex_offset(lv);
            for c in 0..3 {
                d3[(c, so + c)] += 1.0;
            }
            let w = [1.0, 2.0, 1.0];
            for c in 0..3 {
                let row = d3.row(c);
                g += (self.h * self.h * w[c]) * (row.transpose() * row);
            }
        }
        let resize = stack_resize(Codomain::SymTensor, dim_p(ki - 1), dim_p(ki - 4));
        let mut d4 = -self.holy.project_matrix(&(&resize * &self.psigma));
        let ho = self.s_holy_offset();
        for i in 0..self.holy.len() {
            d4[(i, ho + i)] += 1.0;
        }
        g += d4.transpose() * &d4;
        let mut d5 = -self.choly.project_matrix(&self.psigma);
        let co = self.s_choly_offset();
        for i in 0..self.choly.len() {
            d5[(i, co + i)] += 1.0;
        }
        g += d5.transpose() * &d5;
        g
    }

    fn build_tnorm_v(&self) -> DVector<f64> {
        let h2 = self.h * self.h;
        let mut w = DVector::zeros(self.v_dim());
        for lv in 0..self.n_vertices {
            let o = self.v_vertex_offset(lv);
            w[o] = h2;
            w[o + 1] = h2;
            for i in 2..6 {
                w[o + i] = h2 * h2;
            }
        }
        for le in 0..self.edges.len() {
            let o = self.v_edge_offset(le);
            for i in 0..v_edge_block(self.k) {
                w[o + i] = self.h;
            }
        }
        let o = self.v_element_offset();
        for i in 0..v_element_block(self.k) {
            w[o + i] = 1.0;
        }
        w
    }

    fn build_tnorm_s(&self) -> DVector<f64> {
        let h2 = self.h * self.h;
        let mut w = DVector::zeros(self.s_dim());
        for lv in 0..self.n_vertices {
            let o = self.s_vertex_offset(lv);
            w[o] = h2;
            w[o + 1] = 2.0 * h2;
            w[o + 2] = h2;
        }
        let nmom = dim_p_edge(self.k as i32 - 3);
        let ncl = dim_p_edge(self.k as i32 - 2);
        for le in 0..self.edges.len() {
            let o = self.s_edge_offset(le);
            for i in 0..nmom {
                w[o + i] = self.h;
            }
            for i in 0..ncl {
                w[o + nmom + i] = self.h.powi(3);
            }
        }
        for i in self.s_holy_offset()..self.s_dim() {
            w[i] = 1.0;
        }
        w
    }

    // ----- interpolation -----

    /// Local interpolation of a smooth vector field.
    pub fn interpolate_v(&self, f: &VectorField) -> DVector<f64> {
        let ki = self.k as i32;
        let nmom = dim_p_edge(ki - 4);
        let mut dof = DVector::zeros(self.v_dim());
        for lv in 0..self.n_vertices {
            let x = self.vertex_xy[lv];
            let o = self.v_vertex_offset(lv);
            let v = f.eval(x);
            dof[o] = v.x;
            dof[o + 1] = v.y;
            let g = f.grad(x);
            dof[o + 2] = g[0][0];
            dof[o + 3] = g[0][1];
            dof[o + 4] = g[1][0];
            dof[o + 5] = g[1][1];
        }
        for (le, eb) in self.edges.iter().enumerate() {
            let o = self.v_edge_offset(le);
            for c in 0..2 {
                let vals = DVector::from_iterator(
                    eb.quad.len(),
                    eb.quad.points.iter().map(|&x| {
                        let v = f.eval(x);
                        if c == 0 {
                            v.x
                        } else {
                            v.y
                        }
                    }),
                );
                let p = eb.project(&vals, ki - 4);
                dof.rows_mut(o + c * nmom, nmom).copy_from(&p);
            }
        }
        let o = self.v_element_offset();
        let nel = dim_p(ki - 2);
        for c in 0..2 {
            let vals = DVector::from_iterator(
                self.basis.quad.len(),
                self.basis.quad.points.iter().map(|&x| {
                    let v = f.eval(x);
                    if c == 0 {
                        v.x
                    } else {
                        v.y
                    }
                }),
            );
            dof.rows_mut(o + c * nel, nel).copy_from(&self.basis.project(&vals, ki - 2));
        }
        dof
    }

    /// Local interpolation of a vector polynomial (exact).
    pub fn interpolate_v_poly(&self, p: &Polynomial) -> DVector<f64> {
        let ki = self.k as i32;
        let nmom = dim_p_edge(ki - 4);
        let mut dof = DVector::zeros(self.v_dim());
        let grad = p.apply(DiffOp::Grad);
        for lv in 0..self.n_vertices {
            let x = self.vertex_xy[lv];
            let o = self.v_vertex_offset(lv);
            let v = p.eval(x);
            dof[o] = v[0];
            dof[o + 1] = v[1];
            for (i, gv) in grad.eval(x).into_iter().enumerate() {
                dof[o + 2 + i] = gv;
            }
        }
        for (le, eb) in self.edges.iter().enumerate() {
            let o = self.v_edge_offset(le);
            for c in 0..2 {
                let vals = DVector::from_iterator(
                    eb.quad.len(),
                    eb.quad.points.iter().map(|&x| p.eval(x)[c]),
                );
                dof.rows_mut(o + c * nmom, nmom).copy_from(&eb.project(&vals, ki - 4));
            }
        }
        let o = self.v_element_offset();
        let coords = self.basis.on_from_poly(p, ki - 2);
        dof.rows_mut(o, coords.len()).copy_from(&coords);
        dof
    }

    /// Local interpolation of a smooth symmetric tensor field.
    pub fn interpolate_s(&self, tau: &SymTensorField) -> DVector<f64> {
        let ki = self.k as i32;
        let nmom = dim_p_edge(ki - 3);
        let ncl = dim_p_edge(ki - 2);
        let mut dof = DVector::zeros(self.s_dim());
        for lv in 0..self.n_vertices {
            let o = self.s_vertex_offset(lv);
            for (c, v) in tau.eval(self.vertex_xy[lv]).into_iter().enumerate() {
                dof[o + c] = v;
            }
        }
        for (le, eb) in self.edges.iter().enumerate() {
            let o = self.s_edge_offset(le);
            let nn = DVector::from_iterator(
                eb.quad.len(),
                eb.quad.points.iter().map(|&x| tau.apply_to(x, eb.normal, eb.normal)),
            );
            dof.rows_mut(o, nmom).copy_from(&eb.project(&nn, ki - 3));
            let t = eb.tangent;
            let nrm = eb.normal;
            let de = DVector::from_iterator(
                eb.quad.len(),
                eb.quad.points.iter().map(|&x| {
                    // d_t (tau n . t): chain rule through the components.
                    let kappa = [nrm.x * t.x, nrm.x * t.y + nrm.y * t.x, nrm.y * t.y];
                    let mut dt = 0.0;
                    for c in 0..3 {
                        let gx = tau.comps[c].partial(x, (1, 0));
                        let gy = tau.comps[c].partial(x, (0, 1));
                        dt += kappa[c] * (gx * t.x + gy * t.y);
                    }
                    let vd = tau.vdiv(x);
                    dt + vd.x * nrm.x + vd.y * nrm.y
                }),
            );
            dof.rows_mut(o + nmom, ncl).copy_from(&eb.project(&de, ki - 2));
        }
        let stack = |m: i32| -> DVector<f64> {
            let dim = dim_p(m);
            let mut out = DVector::zeros(3 * dim);
            for c in 0..3 {
                let vals = DVector::from_iterator(
                    self.basis.quad.len(),
                    self.basis.quad.points.iter().map(|&x| tau.eval(x)[c]),
                );
                out.rows_mut(c * dim, dim).copy_from(&self.basis.project(&vals, m));
            }
            out
        };
        let hc = self.holy.project_coords(&stack(ki - 4));
        dof.rows_mut(self.s_holy_offset(), hc.len()).copy_from(&hc);
        let cc = self.choly.project_coords(&stack(ki - 1));
        dof.rows_mut(self.s_choly_offset(), cc.len()).copy_from(&cc);
        dof
    }

    /// Local interpolation of a symmetric tensor polynomial (exact).
    pub fn interpolate_s_poly(&self, tau: &Polynomial) -> DVector<f64> {
        assert_eq!(tau.codomain, Codomain::SymTensor);
        let ki = self.k as i32;
        let nmom = dim_p_edge(ki - 3);
        let ncl = dim_p_edge(ki - 2);
        let mut dof = DVector::zeros(self.s_dim());
        for lv in 0..self.n_vertices {
            let o = self.s_vertex_offset(lv);
            for (c, v) in tau.eval(self.vertex_xy[lv]).into_iter().enumerate() {
                dof[o + c] = v;
            }
        }
        let vdiv = tau.apply(DiffOp::VDiv);
        for (le, eb) in self.edges.iter().enumerate() {
            let o = self.s_edge_offset(le);
            let t = eb.tangent;
            let nrm = eb.normal;
            let kappa = [nrm.x * t.x, nrm.x * t.y + nrm.y * t.x, nrm.y * t.y];
            let nt = scalar_combination(tau, &kappa);
            let gnt = nt.apply(DiffOp::Grad);
            let nn = DVector::from_iterator(
                eb.quad.len(),
                eb.quad.points.iter().map(|&x| {
                    let v = tau.eval(x);
                    v[0] * nrm.x * nrm.x + 2.0 * v[1] * nrm.x * nrm.y + v[2] * nrm.y * nrm.y
                }),
            );
            dof.rows_mut(o, nmom).copy_from(&eb.project(&nn, ki - 3));
            let de = DVector::from_iterator(
                eb.quad.len(),
                eb.quad.points.iter().map(|&x| {
                    let g = gnt.eval(x);
                    let vd = vdiv.eval(x);
                    g[0] * t.x + g[1] * t.y + vd[0] * nrm.x + vd[1] * nrm.y
                }),
            );
            dof.rows_mut(o + nmom, ncl).copy_from(&eb.project(&de, ki - 2));
        }
        let hc = self.holy.project_coords(&self.basis.on_from_poly(tau, ki - 4));
        dof.rows_mut(self.s_holy_offset(), hc.len()).copy_from(&hc);
        let cc = self.choly.project_coords(&self.basis.on_from_poly(tau, ki - 1));
        dof.rows_mut(self.s_choly_offset(), cc.len()).copy_from(&cc);
        dof
    }
}

/// `a^T diag(w) b` over quadrature values.
fn weighted_product(a: &DMatrix<f64>, w: &[f64], b: &DMatrix<f64>) -> DMatrix<f64> {
    let mut wa = a.clone();
    for q in 0..wa.nrows() {
        for j in 0..wa.ncols() {
            wa[(q, j)] *= w[q];
        }
    }
    wa.transpose() * b
}

/// Edge coefficients (degree `m`) of columnwise sampled values.
fn edge_project_cols(eb: &EdgeBasis, vals: &DMatrix<f64>, m: i32) -> DMatrix<f64> {
    let on = eb.on_values(m);
    weighted_product(&on, &eb.quad.weights, vals)
}

/// Componentwise truncation (`to <= from`) or zero-padding (`to >= from`)
/// between stacked coordinate spaces.
pub(crate) fn stack_resize(codomain: Codomain, from_dim: usize, to_dim: usize) -> DMatrix<f64> {
    let ncomp = codomain.components();
    let mut m = DMatrix::zeros(to_dim * ncomp, from_dim * ncomp);
    for c in 0..ncomp {
        for i in 0..from_dim.min(to_dim) {
            m[(c * to_dim + i, c * from_dim + i)] = 1.0;
        }
    }
    m
}

/// Frobenius weights of stacked symmetric-tensor coordinates.
pub(crate) fn frobenius_weights(dim: usize) -> DVector<f64> {
    let mut w = DVector::from_element(3 * dim, 1.0);
    for i in dim..2 * dim {
        w[i] = 2.0;
    }
    w
}

/// Scalar polynomial `sum_c weights[c] p_c` from the components of a
/// symmetric tensor polynomial.
fn scalar_combination(p: &Polynomial, weights: &[f64; 3]) -> Polynomial {
    let d = p.scalar_dim();
    let mut out = Polynomial::zero(p.chart, Codomain::Scalar, p.degree);
    for c in 0..3 {
        for i in 0..d {
            out.coeffs[i] += weights[c] * p.coeffs[c * d + i];
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::{hexagon_mesh, square_mesh, triangle_mesh};
    use crate::poly::Chart;

    fn random_poly(chart: Chart, codomain: Codomain, degree: i32, seed: f64) -> Polynomial {
        let mut p = Polynomial::zero(chart, codomain, degree);
        for (i, c) in p.coeffs.iter_mut().enumerate() {
            *c = (seed + 0.7 * i as f64).sin();
        }
        p
    }

    #[test]
    fn local_dof_counts() {
        assert_eq!(v_local_dim(3, 3), 24);
        assert_eq!(s_local_dim(3, 3), 24);
        assert_eq!(v_local_dim(3, 4), 30);
        assert_eq!(s_local_dim(3, 4), 30);
        assert_eq!(v_local_dim(4, 4), 4 * 6 + 4 * 2 + 12);
        let mesh = square_mesh(1);
        let ops = ElementOps::new(&mesh, 0, 4);
        assert_eq!(ops.v_dim(), 44);
        assert_eq!(ops.ucsym.nrows(), ops.s_dim());
        assert_eq!(ops.ucsym.ncols(), ops.v_dim());
    }

    #[test]
    fn trace_reproduces_polynomials() {
        let mesh = hexagon_mesh(2);
        for k in [3usize, 4, 5] {
            let ops = ElementOps::new(&mesh, 0, k);
            let p = random_poly(ops.basis.chart(), Codomain::Vector, k as i32, 0.23);
            let dof = ops.interpolate_v_poly(&p);
            for (le, eb) in ops.edges.iter().enumerate() {
                let coeffs = &ops.trace[le] * &dof;
                let expect = {
                    let nk = dim_p_edge(k as i32);
                    let mut e = DVector::zeros(2 * nk);
                    for c in 0..2 {
                        let vals = DVector::from_iterator(
                            eb.quad.len(),
                            eb.quad.points.iter().map(|&x| p.eval(x)[c]),
                        );
                        e.rows_mut(c * nk, nk).copy_from(&eb.project(&vals, k as i32));
                    }
                    e
                };
                assert!((coeffs - expect).norm() < 1e-11, "k={k} le={le}");
            }
        }
    }

    #[test]
    fn csym_and_potentials_are_polynomially_consistent() {
        let mesh = triangle_mesh(1);
        for k in [3usize, 4] {
            let ops = ElementOps::new(&mesh, 1, k);
            let ki = k as i32;
            // Csym of an interpolated vector polynomial is its sym-curl.
            let p = random_poly(ops.basis.chart(), Codomain::Vector, ki, 1.1);
            let dof = ops.interpolate_v_poly(&p);
            let got = &ops.csym * &dof;
            let expect = ops.basis.on_from_poly(&p.apply(DiffOp::SymCurl), ki - 1);
            assert!((&got - &expect).norm() < 1e-10 * (1.0 + expect.norm()), "csym k={k}");
            // The kinematic potential reproduces the polynomial.
            let got = &ops.pv * &dof;
            let expect = ops.basis.on_from_poly(&p, ki);
            assert!((&got - &expect).norm() < 1e-10 * (1.0 + expect.norm()), "pv k={k}");
            // The tensor potential reproduces tensor polynomials.
            let tau = random_poly(ops.basis.chart(), Codomain::SymTensor, ki - 1, 0.55);
            let sdof = ops.interpolate_s_poly(&tau);
            let got = &ops.psigma * &sdof;
            let expect = ops.basis.on_from_poly(&tau, ki - 1);
            assert!((&got - &expect).norm() < 1e-9 * (1.0 + expect.norm()), "psigma k={k}");
            // Edge potential: normal-normal trace of the polynomial.
            for (le, eb) in ops.edges.iter().enumerate() {
                let got = &ops.psigma_e[le] * &sdof;
                let vals = DVector::from_iterator(
                    eb.quad.len(),
                    eb.quad.points.iter().map(|&x| tau.apply_to_nn(x, eb.normal)),
                );
                let expect = eb.project(&vals, ki - 1);
                assert!((&got - &expect).norm() < 1e-10, "psigma_e k={k} le={le}");
            }
        }
    }

    impl Polynomial {
        fn apply_to_nn(&self, x: Vec2, n: Vec2) -> f64 {
            let v = self.eval(x);
            v[0] * n.x * n.x + 2.0 * v[1] * n.x * n.y + v[2] * n.y * n.y
        }
    }

    #[test]
    fn interpolation_commutes_with_symcurl() {
        let mesh = square_mesh(2);
        for k in [3usize, 4, 5] {
            let ops = ElementOps::new(&mesh, 3, k);
            let p = random_poly(ops.basis.chart(), Codomain::Vector, k as i32, 2.4);
            let lhs = &ops.ucsym * ops.interpolate_v_poly(&p);
            let rhs = ops.interpolate_s_poly(&p.apply(DiffOp::SymCurl));
            assert!((&lhs - &rhs).norm() < 1e-10 * (1.0 + rhs.norm()), "k={k}");
        }
    }

    #[test]
    fn interpolation_commutes_with_divdiv() {
        let mesh = hexagon_mesh(2);
        for k in [3usize, 4] {
            let ops = ElementOps::new(&mesh, 1, k);
            let ki = k as i32;
            // Degree above k - 1 exercises the projection in the range.
            let tau = random_poly(ops.basis.chart(), Codomain::SymTensor, ki + 1, 0.9);
            let lhs = &ops.dd * ops.interpolate_s_poly(&tau);
            let rhs = ops.basis.on_from_poly(&tau.divdiv(), ki - 2);
            assert!((&lhs - &rhs).norm() < 1e-9 * (1.0 + rhs.norm()), "k={k}");
        }
    }

    #[test]
    fn local_complex_property() {
        let meshes = [triangle_mesh(1), square_mesh(1), hexagon_mesh(2)];
        for mesh in &meshes {
            for k in [3usize, 4, 5] {
                let ops = ElementOps::new(mesh, 0, k);
                let prod = &ops.dd * &ops.ucsym;
                let rel = prod.norm() / (ops.dd.norm() * ops.ucsym.norm());
                assert!(rel < 1e-13, "k={k}: {rel:.3e}");
            }
        }
    }

    #[test]
    fn tensor_potential_commutes_with_interpolated_symcurl() {
        let mesh = hexagon_mesh(2);
        for k in [3usize, 4] {
            let ops = ElementOps::new(&mesh, 2, k);
            let diff = &ops.psigma * &ops.ucsym - &ops.csym;
            let rel = diff.norm() / ops.csym.norm();
            assert!(rel < 1e-11, "k={k}: {rel:.3e}");
        }
    }

    #[test]
    fn products_are_polynomially_consistent() {
        let mesh = square_mesh(2);
        for k in [3usize, 4] {
            let ops = ElementOps::new(&mesh, 0, k);
            let ki = k as i32;
            // (I w, v)_V = int w . P_V v for a polynomial w: the
            // stabilization must not see polynomial data.
            let w = random_poly(ops.basis.chart(), Codomain::Vector, ki, 3.3);
            let iw = ops.interpolate_v_poly(&w);
            let wc = ops.basis.on_from_poly(&w, ki);
            let lhs = &ops.gram_v * &iw;
            let rhs = ops.pv.transpose() * wc;
            assert!((&lhs - &rhs).norm() < 1e-9 * rhs.norm(), "k={k} V");
            // Same on the tensor side with the Frobenius pairing.
            let tau = random_poly(ops.basis.chart(), Codomain::SymTensor, ki - 1, 0.2);
            let it = ops.interpolate_s_poly(&tau);
            let mut tc = ops.basis.on_from_poly(&tau, ki - 1);
            let wf = frobenius_weights(dim_p(ki - 1));
            for i in 0..tc.len() {
                tc[i] *= wf[i];
            }
            let lhs = &ops.gram_s * &it;
            let rhs = ops.psigma.transpose() * tc;
            assert!((&lhs - &rhs).norm() < 1e-9 * rhs.norm(), "k={k} S");
        }
    }

    #[test]
    fn component_norm_of_vertex_value() {
        let mesh = triangle_mesh(1);
        let ops = ElementOps::new(&mesh, 0, 3);
        let mut dof = DVector::zeros(ops.v_dim());
        dof[ops.v_vertex_offset(1)] = 1.0;
        let sq: f64 = (0..dof.len()).map(|i| ops.tnorm_v[i] * dof[i] * dof[i]).sum();
        assert!((sq.sqrt() - ops.h).abs() < 1e-14);
    }

    #[test]
    fn gram_matrices_are_spd() {
        let mesh = hexagon_mesh(2);
        let ops = ElementOps::new(&mesh, 0, 3);
        for (g, n) in [(&ops.gram_v, ops.v_dim()), (&ops.gram_s, ops.s_dim())] {
            assert_eq!(g.nrows(), n);
            let sym = (g - g.transpose()).norm() / g.norm();
            assert!(sym < 1e-12, "asymmetry {sym:.3e}");
            let chol = g.clone().cholesky();
            assert!(chol.is_some(), "local product is not positive definite");
        }
    }
}
