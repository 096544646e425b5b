//! Orthonormal polynomial bases on elements and edges.
//!
//! Bases are orthonormalized against quadrature with a QR factorization of
//! the weighted Vandermonde matrix, which is much better conditioned than a
//! Cholesky factorization of the Gram matrix. Because the QR factor is
//! triangular in the graded monomial order, the resulting families are
//! *degree-nested*: the first `dim P^m` members form an orthonormal basis
//! of `P^m`, so an `L2`-orthogonal projection onto a lower degree is a
//! plain coefficient truncation.

use nalgebra::{DMatrix, DVector};

use super::quad::{edge_rule, element_rule, QuadRule};
use super::{dim_p, dim_p_edge, Chart, Codomain, Polynomial};
use crate::geometry::Vec2;
use crate::mesh::Mesh;

/// Upper-triangular change of basis from monomials to an orthonormal family,
/// computed from weighted values. Returns `Rinv` with positive diagonal.
fn orthonormal_transform(vals: &DMatrix<f64>, weights: &[f64]) -> DMatrix<f64> {
    let (nq, dim) = vals.shape();
    assert!(nq >= dim, "quadrature too weak to orthonormalize ({nq} < {dim})");
    let mut b = vals.clone();
    for q in 0..nq {
        let s = weights[q].sqrt();
        for j in 0..dim {
            b[(q, j)] *= s;
        }
    }
    let qr = b.qr();
    let r = qr.r();
    let mut rinv = r
        .solve_upper_triangular(&DMatrix::identity(dim, dim))
        .expect("Vandermonde matrix is rank deficient");
    for j in 0..dim {
        if r[(j, j)] < 0.0 {
            for i in 0..dim {
                rinv[(i, j)] = -rinv[(i, j)];
            }
        }
    }
    rinv
}

/// Per-element quadrature and orthonormal scalar basis up to `max_deg`.
pub struct ElementBasis {
    pub element: usize,
    pub center: Vec2,
    pub h: f64,
    pub max_deg: i32,
    pub quad: QuadRule,
    mono_coeff_to_on: DMatrix<f64>,
    on_vals: DMatrix<f64>,
}

impl ElementBasis {
    /// Builds the basis for one element; `quad_deg` is the polynomial degree
    /// the element rule must integrate exactly (at least `2 * max_deg`).
    pub fn new(mesh: &Mesh, element: usize, max_deg: i32, quad_deg: usize) -> Self {
        assert!(quad_deg >= (2 * max_deg.max(0)) as usize);
        let el = &mesh.elements[element];
        let quad = element_rule(mesh, element, quad_deg);
        let mono_vals = monomial_values(&quad.points, el.x_t, el.h, max_deg);
        let rinv = orthonormal_transform(&mono_vals, &quad.weights);
        let on_vals = &mono_vals * &rinv;
        ElementBasis {
            element,
            center: el.x_t,
            h: el.h,
            max_deg,
            quad,
            mono_coeff_to_on: rinv,
            on_vals,
        }
    }

    pub fn chart(&self) -> Chart {
        Chart::Element { center: self.center, h: self.h }
    }

    pub fn dim(&self, m: i32) -> usize {
        dim_p(m.min(self.max_deg))
    }

    /// Values of the orthonormal basis of `P^m` at the quadrature points.
    pub fn on_values(&self, m: i32) -> DMatrix<f64> {
        self.on_vals.columns(0, self.dim(m)).into_owned()
    }

    /// Values of the orthonormal basis of `P^m` at arbitrary points.
    pub fn on_values_at(&self, points: &[Vec2], m: i32) -> DMatrix<f64> {
        let mono = monomial_values(points, self.center, self.h, m.min(self.max_deg));
        let d = self.dim(m);
        &mono * self.mono_coeff_to_on.view((0, 0), (d, d))
    }

    /// Monomial coefficients (one column per member) of the orthonormal
    /// basis of `P^m`.
    pub fn on_coeffs(&self, m: i32) -> DMatrix<f64> {
        let d = self.dim(m);
        self.mono_coeff_to_on.view((0, 0), (d, d)).into_owned()
    }

    /// Gradient values of the orthonormal basis of `P^m` at arbitrary
    /// points, one matrix per derivative direction.
    pub fn on_grad_values_at(&self, points: &[Vec2], m: i32) -> [DMatrix<f64>; 2] {
        let d = self.dim(m);
        let deg = m.min(self.max_deg).max(0);
        let np = deg as usize + 1;
        let mut gx = DMatrix::zeros(points.len(), d);
        let mut gy = DMatrix::zeros(points.len(), d);
        for (q, &x) in points.iter().enumerate() {
            let xi = (x - self.center) / self.h;
            let mut p1 = vec![1.0; np];
            let mut p2 = vec![1.0; np];
            for p in 1..np {
                p1[p] = p1[p - 1] * xi.x;
                p2[p] = p2[p - 1] * xi.y;
            }
            for i in 0..d {
                let (a, b) = super::exponent(i);
                let (a, b) = (a as usize, b as usize);
                if a > 0 {
                    gx[(q, i)] = a as f64 * p1[a - 1] * p2[b] / self.h;
                }
                if b > 0 {
                    gy[(q, i)] = b as f64 * p1[a] * p2[b - 1] / self.h;
                }
            }
        }
        let rinv = self.mono_coeff_to_on.view((0, 0), (d, d));
        [&gx * rinv, &gy * rinv]
    }

    /// `L2(T)`-orthogonal projection onto `P^m` of a function sampled at the
    /// quadrature points, in orthonormal coordinates.
    pub fn project(&self, values: &DVector<f64>, m: i32) -> DVector<f64> {
        let on = self.on_values(m);
        let mut out = DVector::zeros(on.ncols());
        for j in 0..on.ncols() {
            out[j] = (0..self.quad.len())
                .map(|q| self.quad.weights[q] * on[(q, j)] * values[q])
                .sum();
        }
        out
    }

    /// Converts stacked per-component orthonormal coordinates into a
    /// polynomial in monomial coordinates.
    pub fn poly_from_on(&self, coords: &DVector<f64>, m: i32, codomain: Codomain) -> Polynomial {
        let d = self.dim(m);
        let ncomp = codomain.components();
        assert_eq!(coords.len(), d * ncomp);
        let mut p = Polynomial::zero(self.chart(), codomain, m.min(self.max_deg).max(-1));
        let rinv = self.mono_coeff_to_on.view((0, 0), (d, d));
        for c in 0..ncomp {
            let block = coords.rows(c * d, d);
            let mono = &rinv * block;
            for i in 0..d {
                p.coeffs[c * d + i] = mono[i];
            }
        }
        p
    }

    /// Stacked orthonormal coordinates of the projection of a polynomial
    /// onto `(P^m)^c`; exact when `p.degree <= m`.
    pub fn on_from_poly(&self, p: &Polynomial, m: i32) -> DVector<f64> {
        let vals = self.poly_values(p);
        let d = self.dim(m);
        let ncomp = p.codomain.components();
        let mut out = DVector::zeros(d * ncomp);
        for c in 0..ncomp {
            let proj = self.project(&vals.column(c).into_owned(), m);
            out.rows_mut(c * d, d).copy_from(&proj);
        }
        out
    }

    /// Values of all components of a polynomial at the quadrature points
    /// (one column per component).
    pub fn poly_values(&self, p: &Polynomial) -> DMatrix<f64> {
        self.poly_values_at(p, &self.quad.points)
    }

    pub fn poly_values_at(&self, p: &Polynomial, points: &[Vec2]) -> DMatrix<f64> {
        let ncomp = p.codomain.components();
        let mut out = DMatrix::zeros(points.len(), ncomp);
        for (q, x) in points.iter().enumerate() {
            for (c, v) in p.eval(*x).into_iter().enumerate() {
                out[(q, c)] = v;
            }
        }
        out
    }
}

/// Values at quadrature points of a family of fields with a common codomain,
/// one matrix per component. The workhorse for assembling local products.
pub struct ValueSet {
    pub codomain: Codomain,
    pub comps: Vec<DMatrix<f64>>,
}

impl ValueSet {
    /// Values of the family whose stacked orthonormal coordinates are the
    /// columns of `coords` (degree `m` per component).
    pub fn from_on_coords(basis: &ElementBasis, coords: &DMatrix<f64>, m: i32, codomain: Codomain) -> Self {
        let d = basis.dim(m);
        let ncomp = codomain.components();
        assert_eq!(coords.nrows(), d * ncomp);
        let on = basis.on_values(m);
        let comps = (0..ncomp)
            .map(|c| &on * coords.rows(c * d, d))
            .collect();
        ValueSet { codomain, comps }
    }

    /// The orthonormal basis family of `(P^m)^c` itself.
    pub fn on_basis(basis: &ElementBasis, m: i32, codomain: Codomain) -> Self {
        let d = basis.dim(m);
        let ncomp = codomain.components();
        let coords = DMatrix::identity(d * ncomp, d * ncomp);
        Self::from_on_coords(basis, &coords, m, codomain)
    }

    pub fn len(&self) -> usize {
        self.comps.first().map_or(0, |m| m.ncols())
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// From a set of polynomials (columns) sharing a codomain.
    pub fn from_polys(basis: &ElementBasis, polys: &[Polynomial]) -> Self {
        let codomain = polys.first().map_or(Codomain::Scalar, |p| p.codomain);
        let nq = basis.quad.len();
        let ncomp = codomain.components();
        let mut comps = vec![DMatrix::zeros(nq, polys.len()); ncomp];
        for (j, p) in polys.iter().enumerate() {
            assert_eq!(p.codomain, codomain);
            let vals = basis.poly_values(p);
            for c in 0..ncomp {
                for q in 0..nq {
                    comps[c][(q, j)] = vals[(q, c)];
                }
            }
        }
        ValueSet { codomain, comps }
    }

    /// Gram-type matrix `int_T a_i : b_j` with the Frobenius pairing.
    pub fn product(&self, other: &ValueSet, weights: &[f64]) -> DMatrix<f64> {
        assert_eq!(self.codomain, other.codomain);
        let mut g = DMatrix::zeros(self.len(), other.len());
        for c in 0..self.comps.len() {
            let cw = self.codomain.component_weight(c);
            let a = &self.comps[c];
            let b = &other.comps[c];
            for i in 0..a.ncols() {
                for j in 0..b.ncols() {
                    let mut acc = 0.0;
                    for q in 0..weights.len() {
                        acc += weights[q] * a[(q, i)] * b[(q, j)];
                    }
                    g[(i, j)] += cw * acc;
                }
            }
        }
        g
    }
}

/// Per-edge quadrature and orthonormal basis (with respect to the physical
/// arclength measure) up to `max_deg`.
pub struct EdgeBasis {
    pub edge: usize,
    pub midpoint: Vec2,
    pub tangent: Vec2,
    pub normal: Vec2,
    pub h: f64,
    pub max_deg: i32,
    pub quad: QuadRule,
    pub s: Vec<f64>,
    mono_coeff_to_on: DMatrix<f64>,
    on_vals: DMatrix<f64>,
    /// Monomial values at the endpoints `s = -1/2` (row 0) and `s = +1/2`.
    mono_end: DMatrix<f64>,
}

impl EdgeBasis {
    pub fn new(mesh: &Mesh, edge: usize, max_deg: i32, quad_deg: usize) -> Self {
        assert!(quad_deg >= (2 * max_deg.max(0)) as usize);
        let e = &mesh.edges[edge];
        let (quad, s) = edge_rule(e.midpoint, e.tangent, e.h, quad_deg);
        let dim = dim_p_edge(max_deg);
        let mut mono_vals = DMatrix::zeros(quad.len(), dim);
        for (q, &sq) in s.iter().enumerate() {
            let mut p = 1.0;
            for j in 0..dim {
                mono_vals[(q, j)] = p;
                p *= sq;
            }
        }
        let rinv = orthonormal_transform(&mono_vals, &quad.weights);
        let on_vals = &mono_vals * &rinv;
        let mut mono_end = DMatrix::zeros(2, dim);
        for (row, send) in [(0usize, -0.5f64), (1, 0.5)] {
            let mut p = 1.0;
            for j in 0..dim {
                mono_end[(row, j)] = p;
                p *= send;
            }
        }
        EdgeBasis {
            edge,
            midpoint: e.midpoint,
            tangent: e.tangent,
            normal: e.normal,
            h: e.h,
            max_deg,
            quad,
            s,
            mono_coeff_to_on: rinv,
            on_vals,
            mono_end,
        }
    }

    pub fn chart(&self) -> Chart {
        Chart::Edge { midpoint: self.midpoint, tangent: self.tangent, h: self.h }
    }

    pub fn dim(&self, m: i32) -> usize {
        dim_p_edge(m.min(self.max_deg))
    }

    pub fn on_values(&self, m: i32) -> DMatrix<f64> {
        self.on_vals.columns(0, self.dim(m)).into_owned()
    }

    /// Values of the orthonormal basis of `P^m(E)` at the two endpoints
    /// (row 0: start of the tangent, row 1: end).
    pub fn on_end_values(&self, m: i32) -> DMatrix<f64> {
        let d = self.dim(m);
        self.mono_end.columns(0, d) * self.mono_coeff_to_on.view((0, 0), (d, d))
    }

    /// Values of the arclength derivative of the orthonormal basis of
    /// `P^m(E)` at the quadrature points.
    pub fn on_deriv_values(&self, m: i32) -> DMatrix<f64> {
        let d = self.dim(m);
        let mut out = DMatrix::zeros(self.quad.len(), d);
        let rinv = self.mono_coeff_to_on.view((0, 0), (d, d));
        for (q, &sq) in self.s.iter().enumerate() {
            // d/dl s^j = j s^{j-1} / h.
            let mut pow = vec![0.0; d];
            let mut p = 1.0;
            for j in 1..d {
                pow[j] = j as f64 * p / self.h;
                p *= sq;
            }
            for j in 0..d {
                let mut acc = 0.0;
                for i in 1..d {
                    acc += pow[i] * rinv[(i, j)];
                }
                out[(q, j)] = acc;
            }
        }
        out
    }

    /// Endpoint values of the arclength derivative of the orthonormal basis.
    pub fn on_deriv_end_values(&self, m: i32) -> DMatrix<f64> {
        let d = self.dim(m);
        let rinv = self.mono_coeff_to_on.view((0, 0), (d, d));
        let mut out = DMatrix::zeros(2, d);
        for (row, send) in [(0usize, -0.5f64), (1, 0.5)] {
            let mut pow = vec![0.0; d];
            let mut p = 1.0;
            for j in 1..d {
                pow[j] = j as f64 * p / self.h;
                p *= send;
            }
            for j in 0..d {
                out[(row, j)] = (1..d).map(|i| pow[i] * rinv[(i, j)]).sum();
            }
        }
        out
    }

    /// Second arclength derivative values at the quadrature points.
    pub fn on_deriv2_values(&self, m: i32) -> DMatrix<f64> {
        let d = self.dim(m);
        let rinv = self.mono_coeff_to_on.view((0, 0), (d, d));
        let mut out = DMatrix::zeros(self.quad.len(), d);
        for (q, &sq) in self.s.iter().enumerate() {
            let mut pow = vec![0.0; d];
            let mut p = 1.0;
            for j in 2..d {
                pow[j] = (j * (j - 1)) as f64 * p / (self.h * self.h);
                p *= sq;
            }
            for j in 0..d {
                out[(q, j)] = (2..d).map(|i| pow[i] * rinv[(i, j)]).sum();
            }
        }
        out
    }

    /// `L2(E)` projection of values sampled at the quadrature points.
    pub fn project(&self, values: &DVector<f64>, m: i32) -> DVector<f64> {
        let on = self.on_values(m);
        let mut out = DVector::zeros(on.ncols());
        for j in 0..on.ncols() {
            out[j] = (0..self.quad.len())
                .map(|q| self.quad.weights[q] * on[(q, j)] * values[q])
                .sum();
        }
        out
    }

    pub fn poly_from_on(&self, coords: &DVector<f64>, m: i32, codomain: Codomain) -> Polynomial {
        let d = self.dim(m);
        let ncomp = codomain.components();
        assert_eq!(coords.len(), d * ncomp);
        let mut p = Polynomial::zero(self.chart(), codomain, m.min(self.max_deg).max(-1));
        let rinv = self.mono_coeff_to_on.view((0, 0), (d, d));
        for c in 0..ncomp {
            let mono = &rinv * coords.rows(c * d, d);
            for i in 0..d {
                p.coeffs[c * d + i] = mono[i];
            }
        }
        p
    }

    pub fn on_from_poly(&self, p: &Polynomial, m: i32) -> DVector<f64> {
        let d = self.dim(m);
        let ncomp = p.codomain.components();
        let mut out = DVector::zeros(d * ncomp);
        for c in 0..ncomp {
            let vals = DVector::from_iterator(
                self.quad.len(),
                self.quad.points.iter().map(|&x| p.eval(x)[c]),
            );
            out.rows_mut(c * d, d).copy_from(&self.project(&vals, m));
        }
        out
    }
}

/// Scaled monomial values `xi^(a,b)` at the given points, all degrees up to
/// `max_deg`, one column per monomial in graded order.
pub fn monomial_values(points: &[Vec2], center: Vec2, h: f64, max_deg: i32) -> DMatrix<f64> {
    let dim = dim_p(max_deg);
    let mut out = DMatrix::zeros(points.len(), dim);
    let np = (max_deg.max(0) + 1) as usize;
    for (q, &x) in points.iter().enumerate() {
        let xi = (x - center) / h;
        let mut p1 = vec![1.0; np];
        let mut p2 = vec![1.0; np];
        for p in 1..np {
            p1[p] = p1[p - 1] * xi.x;
            p2[p] = p2[p - 1] * xi.y;
        }
        for i in 0..dim {
            let (a, b) = super::exponent(i);
            out[(q, i)] = p1[a as usize] * p2[b as usize];
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::{hexagon_mesh, square_mesh};

    #[test]
    fn element_basis_is_orthonormal_and_nested() {
        let mesh = hexagon_mesh(2);
        let basis = ElementBasis::new(&mesh, 0, 5, 10);
        let on = basis.on_values(5);
        let g = ValueSet { codomain: Codomain::Scalar, comps: vec![on] }
            .product(&ValueSet { codomain: Codomain::Scalar, comps: vec![basis.on_values(5)] }, &basis.quad.weights);
        for i in 0..g.nrows() {
            for j in 0..g.ncols() {
                let expect = if i == j { 1.0 } else { 0.0 };
                assert!((g[(i, j)] - expect).abs() < 1e-12, "({i},{j}) {}", g[(i, j)]);
            }
        }
        // Nested: the low-degree block of the high-degree transform matches
        // the standalone low-degree transform.
        let low = basis.on_coeffs(2);
        let high = basis.on_coeffs(5);
        for i in 0..low.nrows() {
            for j in 0..low.ncols() {
                assert!((low[(i, j)] - high[(i, j)]).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn projection_reproduces_polynomials() {
        let mesh = square_mesh(2);
        let basis = ElementBasis::new(&mesh, 1, 4, 8);
        let mut p = Polynomial::zero(basis.chart(), Codomain::Scalar, 3);
        for (i, c) in p.coeffs.iter_mut().enumerate() {
            *c = (i as f64 + 1.0).sqrt();
        }
        let coords = basis.on_from_poly(&p, 3);
        let back = basis.poly_from_on(&coords, 3, Codomain::Scalar);
        let x = Vec2::new(0.7, 0.2);
        assert!((p.eval(x)[0] - back.eval(x)[0]).abs() < 1e-12);
        // Truncation to P^1 is the L2(T) projection.
        let trunc = coords.rows(0, 3).into_owned();
        let proj = basis.poly_from_on(&trunc, 1, Codomain::Scalar);
        let vals = basis.poly_values(&p).column(0).into_owned();
        let direct = basis.project(&vals, 1);
        let direct_p = basis.poly_from_on(&direct, 1, Codomain::Scalar);
        assert!((proj.eval(x)[0] - direct_p.eval(x)[0]).abs() < 1e-12);
    }

    #[test]
    fn edge_basis_endpoints_and_derivatives() {
        let mesh = square_mesh(2);
        let basis = EdgeBasis::new(&mesh, 0, 4, 9);
        let on = basis.on_values(4);
        let mut g: DMatrix<f64> = DMatrix::zeros(on.ncols(), on.ncols());
        for i in 0..on.ncols() {
            for j in 0..on.ncols() {
                g[(i, j)] = (0..basis.quad.len())
                    .map(|q| basis.quad.weights[q] * on[(q, i)] * on[(q, j)])
                    .sum();
            }
        }
        for i in 0..g.nrows() {
            for j in 0..g.ncols() {
                let expect = if i == j { 1.0 } else { 0.0 };
                assert!((g[(i, j)] - expect).abs() < 1e-12);
            }
        }
        // Endpoint evaluation agrees with polynomial evaluation.
        let mut coords = DVector::zeros(basis.dim(3));
        for (i, c) in coords.iter_mut().enumerate() {
            *c = 1.0 / (i as f64 + 2.0);
        }
        let p = basis.poly_from_on(&coords, 3, Codomain::Scalar);
        let x0 = basis.midpoint - basis.tangent * (basis.h / 2.0);
        let ends = basis.on_end_values(3);
        let v0: f64 = (0..coords.len()).map(|j| ends[(0, j)] * coords[j]).sum();
        assert!((v0 - p.eval(x0)[0]).abs() < 1e-12);
        // Derivative values integrate to the endpoint difference.
        let dvals = basis.on_deriv_values(3);
        for j in 0..basis.dim(3) {
            let int: f64 = (0..basis.quad.len())
                .map(|q| basis.quad.weights[q] * dvals[(q, j)])
                .sum();
            assert!((int - (ends[(1, j)] - ends[(0, j)])).abs() < 1e-12);
        }
    }
}
