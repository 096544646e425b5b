//! Exact polynomial calculus on elements and edges.
//!
//! Polynomials are stored in *scaled monomial* coordinates. On an element
//! `T` with interior point `x_T` and diameter `h_T` the scalar basis is
//! `xi^(a,b) = ((x - x_T)/h_T)_1^a ((x - x_T)/h_T)_2^b`, ordered by total
//! degree and, within a degree, by increasing exponent of the second
//! variable. On an edge `E` the variable is the scaled arclength
//! `s = (x - x_E) . t_E / h_E`, which runs over `[-1/2, 1/2]`.
//!
//! Vector and tensor-valued polynomials stack one scalar coefficient block
//! per component; symmetric tensors store `(xx, xy, yy)` and their Frobenius
//! product doubles the off-diagonal term. All differential operators act
//! exactly on coefficients.

pub mod basis;
pub mod quad;
pub mod subspace;

use crate::geometry::{rot90, Vec2};

/// Value type of a polynomial.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Codomain {
    Scalar,
    Vector,
    /// Symmetric 2x2 tensors, components `(xx, xy, yy)`.
    SymTensor,
    /// Full 2x2 tensors, components `(11, 12, 21, 22)`.
    Tensor,
}

impl Codomain {
    pub fn components(self) -> usize {
        match self {
            Codomain::Scalar => 1,
            Codomain::Vector => 2,
            Codomain::SymTensor => 3,
            Codomain::Tensor => 4,
        }
    }

    /// Weight of each component in the natural pointwise inner product
    /// (doubles the mixed entry of symmetric tensors).
    pub fn component_weight(self, comp: usize) -> f64 {
        match self {
            Codomain::SymTensor if comp == 1 => 2.0,
            _ => 1.0,
        }
    }
}

/// Number of scalar monomials of total degree at most `m` in two variables.
pub fn dim_p(m: i32) -> usize {
    if m < 0 {
        0
    } else {
        ((m + 1) * (m + 2) / 2) as usize
    }
}

/// Same in one variable (edge polynomials).
pub fn dim_p_edge(m: i32) -> usize {
    if m < 0 {
        0
    } else {
        (m + 1) as usize
    }
}

/// Exponent pair of the `i`-th scaled monomial.
pub fn exponent(i: usize) -> (u32, u32) {
    let mut d = 0usize;
    let mut off = 0usize;
    while off + d + 1 <= i {
        off += d + 1;
        d += 1;
    }
    let b = i - off;
    ((d - b) as u32, b as u32)
}

/// Index of the scaled monomial with exponents `(a, b)`.
pub fn monomial_index(a: u32, b: u32) -> usize {
    let d = (a + b) as usize;
    d * (d + 1) / 2 + b as usize
}

/// Chart on which a polynomial lives.
#[derive(Debug, Clone, Copy)]
pub enum Chart {
    Element { center: Vec2, h: f64 },
    Edge { midpoint: Vec2, tangent: Vec2, h: f64 },
}

impl Chart {
    pub fn h(&self) -> f64 {
        match self {
            Chart::Element { h, .. } | Chart::Edge { h, .. } => *h,
        }
    }
}

/// Differential and algebraic operators on polynomial fields.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DiffOp {
    /// Scalar -> vector, `(d2 q, -d1 q)`.
    Curl,
    /// Vector -> scalar, `d2 v1 - d1 v2`.
    Rot,
    /// Vector -> scalar.
    Div,
    /// Scalar -> vector or vector -> tensor (`GRAD v` has rows `grad v_i`).
    Grad,
    /// Vector -> symmetric tensor.
    SymCurl,
    /// (Sym)tensor -> vector, row-wise divergence.
    VDiv,
    /// (Sym)tensor -> vector, row-wise rotation `(d2 t_i1 - d1 t_i2)`.
    VRot,
    /// Scalar -> symmetric tensor.
    Hess,
    /// Pointwise map to a symmetric, trace-free tensor.
    Cmap,
}

/// A polynomial field on an element or edge chart.
#[derive(Debug, Clone)]
pub struct Polynomial {
    pub chart: Chart,
    pub codomain: Codomain,
    pub degree: i32,
    /// Component-major coefficients: `coeffs[c * dim + i]`.
    pub coeffs: Vec<f64>,
}

impl Polynomial {
    pub fn zero(chart: Chart, codomain: Codomain, degree: i32) -> Self {
        let dim = match chart {
            Chart::Element { .. } => dim_p(degree),
            Chart::Edge { .. } => dim_p_edge(degree),
        };
        Polynomial { chart, codomain, degree, coeffs: vec![0.0; dim * codomain.components()] }
    }

    pub fn scalar_dim(&self) -> usize {
        match self.chart {
            Chart::Element { .. } => dim_p(self.degree),
            Chart::Edge { .. } => dim_p_edge(self.degree),
        }
    }

    pub fn component(&self, c: usize) -> &[f64] {
        let d = self.scalar_dim();
        &self.coeffs[c * d..(c + 1) * d]
    }

    /// Evaluates all components at a physical point.
    pub fn eval(&self, x: Vec2) -> Vec<f64> {
        let d = self.scalar_dim();
        let ncomp = self.codomain.components();
        match self.chart {
            Chart::Element { center, h } => {
                let xi = (x - center) / h;
                let mut pow1 = vec![1.0; (self.degree.max(0) + 1) as usize];
                let mut pow2 = pow1.clone();
                for p in 1..pow1.len() {
                    pow1[p] = pow1[p - 1] * xi.x;
                    pow2[p] = pow2[p - 1] * xi.y;
                }
                (0..ncomp)
                    .map(|c| {
                        (0..d)
                            .map(|i| {
                                let (a, b) = exponent(i);
                                self.coeffs[c * d + i] * pow1[a as usize] * pow2[b as usize]
                            })
                            .sum()
                    })
                    .collect()
            }
            Chart::Edge { midpoint, tangent, h } => {
                let s = (x - midpoint).dot(&tangent) / h;
                (0..ncomp)
                    .map(|c| {
                        let mut acc = 0.0;
                        for i in (0..d).rev() {
                            acc = acc * s + self.coeffs[c * d + i];
                        }
                        acc
                    })
                    .collect()
            }
        }
    }

    pub fn add_scaled(&mut self, other: &Polynomial, factor: f64) {
        assert_eq!(self.degree, other.degree);
        for (a, b) in self.coeffs.iter_mut().zip(other.coeffs.iter()) {
            *a += factor * b;
        }
    }

    /// Applies a differential or algebraic operator; degrees drop by the
    /// order of the operator.
    pub fn apply(&self, op: DiffOp) -> Polynomial {
        let Chart::Element { .. } = self.chart else {
            panic!("differential operators act on element polynomials");
        };
        let dx = |c: usize| self.partial(c, 0);
        let dy = |c: usize| self.partial(c, 1);
        match (op, self.codomain) {
            (DiffOp::Curl, Codomain::Scalar) => {
                self.from_components(Codomain::Vector, self.degree - 1, vec![dy(0), neg(dx(0))])
            }
            (DiffOp::Rot, Codomain::Vector) => {
                self.from_components(Codomain::Scalar, self.degree - 1, vec![sub(dy(0), dx(1))])
            }
            (DiffOp::Div, Codomain::Vector) => {
                self.from_components(Codomain::Scalar, self.degree - 1, vec![add(dx(0), dy(1))])
            }
            (DiffOp::Grad, Codomain::Scalar) => {
                self.from_components(Codomain::Vector, self.degree - 1, vec![dx(0), dy(0)])
            }
            (DiffOp::Grad, Codomain::Vector) => self.from_components(
                Codomain::Tensor,
                self.degree - 1,
                vec![dx(0), dy(0), dx(1), dy(1)],
            ),
            (DiffOp::SymCurl, Codomain::Vector) => self.from_components(
                Codomain::SymTensor,
                self.degree - 1,
                vec![dy(0), scale(sub(dy(1), dx(0)), 0.5), neg(dx(1))],
            ),
            (DiffOp::VDiv, Codomain::SymTensor) => self.from_components(
                Codomain::Vector,
                self.degree - 1,
                vec![add(dx(0), dy(1)), add(dx(1), dy(2))],
            ),
            (DiffOp::VDiv, Codomain::Tensor) => self.from_components(
                Codomain::Vector,
                self.degree - 1,
                vec![add(dx(0), dy(1)), add(dx(2), dy(3))],
            ),
            (DiffOp::VRot, Codomain::SymTensor) => self.from_components(
                Codomain::Vector,
                self.degree - 1,
                vec![sub(dy(0), dx(1)), sub(dy(1), dx(2))],
            ),
            (DiffOp::VRot, Codomain::Tensor) => self.from_components(
                Codomain::Vector,
                self.degree - 1,
                vec![sub(dy(0), dx(1)), sub(dy(2), dx(3))],
            ),
            (DiffOp::Hess, Codomain::Scalar) => {
                let gx = self.partial(0, 0);
                let gy = self.partial(0, 1);
                let gxp = Polynomial {
                    chart: self.chart,
                    codomain: Codomain::Scalar,
                    degree: self.degree - 1,
                    coeffs: gx,
                };
                let gyp = Polynomial {
                    chart: self.chart,
                    codomain: Codomain::Scalar,
                    degree: self.degree - 1,
                    coeffs: gy,
                };
                self.from_components(
                    Codomain::SymTensor,
                    self.degree - 2,
                    vec![gxp.partial(0, 0), gxp.partial(0, 1), gyp.partial(0, 1)],
                )
            }
            (DiffOp::Cmap, Codomain::Tensor) => {
                let d = self.scalar_dim();
                let t = |c: usize| self.coeffs[c * d..(c + 1) * d].to_vec();
                self.from_components(
                    Codomain::SymTensor,
                    self.degree,
                    vec![
                        t(1),
                        scale(sub(t(3), t(0)), 0.5),
                        neg(t(2)),
                    ],
                )
            }
            (DiffOp::Cmap, Codomain::SymTensor) => {
                let d = self.scalar_dim();
                let t = |c: usize| self.coeffs[c * d..(c + 1) * d].to_vec();
                self.from_components(
                    Codomain::SymTensor,
                    self.degree,
                    vec![t(1), scale(sub(t(2), t(0)), 0.5), neg(t(1))],
                )
            }
            (op, dom) => panic!("operator {op:?} is not defined on {dom:?} fields"),
        }
    }

    /// Second-order combination `DIV (VDIV tau)` for symmetric tensors.
    pub fn divdiv(&self) -> Polynomial {
        self.apply(DiffOp::VDiv).apply(DiffOp::Div)
    }

    /// Coefficients of the partial derivative of one scalar component
    /// (degree drops by one).
    fn partial(&self, comp: usize, axis: usize) -> Vec<f64> {
        let Chart::Element { h, .. } = self.chart else { unreachable!() };
        let d_in = self.scalar_dim();
        let out_dim = dim_p(self.degree - 1);
        let mut out = vec![0.0; out_dim];
        for i in 0..d_in {
            let (a, b) = exponent(i);
            let c = self.coeffs[comp * d_in + i];
            if c == 0.0 {
                continue;
            }
            if axis == 0 && a > 0 {
                out[monomial_index(a - 1, b)] += c * a as f64 / h;
            } else if axis == 1 && b > 0 {
                out[monomial_index(a, b - 1)] += c * b as f64 / h;
            }
        }
        out
    }

    fn from_components(
        &self,
        codomain: Codomain,
        degree: i32,
        comps: Vec<Vec<f64>>,
    ) -> Polynomial {
        let degree = degree.max(-1);
        let dim = dim_p(degree);
        let mut coeffs = vec![0.0; dim * codomain.components()];
        for (c, comp) in comps.into_iter().enumerate() {
            for (i, v) in comp.into_iter().enumerate().take(dim) {
                coeffs[c * dim + i] = v;
            }
        }
        Polynomial { chart: self.chart, codomain, degree, coeffs }
    }

    /// Multiplies by the scaled coordinate `xi_axis`, raising the degree.
    pub fn mul_xi(&self, axis: usize) -> Polynomial {
        let Chart::Element { .. } = self.chart else {
            panic!("mul_xi acts on element polynomials");
        };
        let d_in = self.scalar_dim();
        let degree = self.degree + 1;
        let d_out = dim_p(degree);
        let ncomp = self.codomain.components();
        let mut coeffs = vec![0.0; d_out * ncomp];
        for c in 0..ncomp {
            for i in 0..d_in {
                let (a, b) = exponent(i);
                let j = if axis == 0 {
                    monomial_index(a + 1, b)
                } else {
                    monomial_index(a, b + 1)
                };
                coeffs[c * d_out + j] += self.coeffs[c * d_in + i];
            }
        }
        Polynomial { chart: self.chart, codomain: self.codomain, degree, coeffs }
    }
}

/// Tangential derivative of an edge polynomial (with respect to physical
/// arclength).
pub fn edge_derivative(p: &Polynomial) -> Polynomial {
    let Chart::Edge { h, .. } = p.chart else {
        panic!("edge_derivative acts on edge polynomials");
    };
    let d_in = p.scalar_dim();
    let degree = (p.degree - 1).max(-1);
    let d_out = dim_p_edge(degree);
    let ncomp = p.codomain.components();
    let mut coeffs = vec![0.0; d_out * ncomp];
    for c in 0..ncomp {
        for i in 1..d_in {
            coeffs[c * d_out + i - 1] = p.coeffs[c * d_in + i] * i as f64 / h;
        }
    }
    Polynomial { chart: p.chart, codomain: p.codomain, degree, coeffs }
}

/// The constant-coefficient isomorphism `v -> (-v_2, v_1)` applied to the
/// value of a vector polynomial; kept here for symmetry with [`rot90`].
pub fn perp(v: Vec2) -> Vec2 {
    rot90(v)
}

fn neg(v: Vec<f64>) -> Vec<f64> {
    v.into_iter().map(|x| -x).collect()
}

fn add(a: Vec<f64>, b: Vec<f64>) -> Vec<f64> {
    a.into_iter().zip(b).map(|(x, y)| x + y).collect()
}

fn sub(a: Vec<f64>, b: Vec<f64>) -> Vec<f64> {
    a.into_iter().zip(b).map(|(x, y)| x - y).collect()
}

fn scale(v: Vec<f64>, f: f64) -> Vec<f64> {
    v.into_iter().map(|x| f * x).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn chart() -> Chart {
        Chart::Element { center: Vec2::new(0.25, -0.5), h: 0.8 }
    }

    #[test]
    fn monomial_indexing_round_trips() {
        for i in 0..dim_p(6) {
            let (a, b) = exponent(i);
            assert_eq!(monomial_index(a, b), i);
        }
        assert_eq!(dim_p(3), 10);
        assert_eq!(dim_p(2), 6);
        assert_eq!(dim_p(-1), 0);
        assert_eq!(dim_p_edge(2), 3);
    }

    #[test]
    fn symcurl_of_linear_field() {
        // v = (x2, 0): SYMCURL v = [[1, 0], [0, 0]] (constant).
        let ch = Chart::Element { center: Vec2::zeros(), h: 2.0 };
        let mut v = Polynomial::zero(ch, Codomain::Vector, 1);
        // v1 = x2 = h * xi2.
        v.coeffs[monomial_index(0, 1)] = 2.0;
        let sc = v.apply(DiffOp::SymCurl);
        let val = sc.eval(Vec2::new(0.3, 0.7));
        assert!((val[0] - 1.0).abs() < 1e-15);
        assert!(val[1].abs() < 1e-15);
        assert!(val[2].abs() < 1e-15);
    }

    #[test]
    fn cmap_of_identity_vanishes() {
        let mut t = Polynomial::zero(chart(), Codomain::Tensor, 0);
        t.coeffs[0] = 1.0; // 11
        t.coeffs[3] = 1.0; // 22
        let c = t.apply(DiffOp::Cmap);
        assert!(c.coeffs.iter().all(|&x| x == 0.0));
    }

    #[test]
    fn symcurl_equals_cmap_of_grad() {
        let mut v = Polynomial::zero(chart(), Codomain::Vector, 3);
        for (i, c) in v.coeffs.iter_mut().enumerate() {
            *c = (i as f64 * 0.37).sin();
        }
        let a = v.apply(DiffOp::SymCurl);
        let b = v.apply(DiffOp::Grad).apply(DiffOp::Cmap);
        let x = Vec2::new(0.4, -0.2);
        for (u, w) in a.eval(x).iter().zip(b.eval(x).iter()) {
            assert!((u - w).abs() < 1e-13);
        }
    }

    #[test]
    fn vrot_of_hessian_vanishes() {
        let mut q = Polynomial::zero(chart(), Codomain::Scalar, 5);
        for (i, c) in q.coeffs.iter_mut().enumerate() {
            *c = ((i * i) as f64 * 0.11).cos();
        }
        let vr = q.apply(DiffOp::Hess).apply(DiffOp::VRot);
        assert!(vr.coeffs.iter().all(|&x| x.abs() < 1e-12));
    }

    #[test]
    fn divdiv_of_hessian_is_bilaplacian() {
        // q = x1^2 x2^2 has DIV DIV HESS q = 8.
        let ch = Chart::Element { center: Vec2::zeros(), h: 1.0 };
        let mut q = Polynomial::zero(ch, Codomain::Scalar, 4);
        q.coeffs[monomial_index(2, 2)] = 1.0;
        let dd = q.apply(DiffOp::Hess).divdiv();
        let v = dd.eval(Vec2::new(0.2, 0.9));
        assert!((v[0] - 8.0).abs() < 1e-12);
    }

    #[test]
    fn edge_derivative_matches() {
        let ch = Chart::Edge {
            midpoint: Vec2::new(0.5, 0.0),
            tangent: Vec2::new(1.0, 0.0),
            h: 1.0,
        };
        // p(s) = s^2 => dp/dl = 2 s with s = x - 1/2.
        let mut p = Polynomial::zero(ch, Codomain::Scalar, 2);
        p.coeffs[2] = 1.0;
        let dp = edge_derivative(&p);
        let v = dp.eval(Vec2::new(0.75, 0.0));
        assert!((v[0] - 0.5).abs() < 1e-15);
    }
}
