//! Independent exact polynomial arithmetic in global coordinates.
//!
//! This module deliberately shares no code with [`crate::poly`]: it stores
//! unscaled exponent/coefficient maps and integrates over polygons with the
//! divergence theorem and one-dimensional Gauss rules. The verification
//! suites use it as a second opinion on projections, differential operators
//! and quadrature.

use std::collections::BTreeMap;

use crate::geometry::Vec2;
use crate::poly::quad::gauss_legendre;

/// Sparse bivariate polynomial in the global coordinates `(x1, x2)`.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct RawPoly {
    terms: BTreeMap<(u32, u32), f64>,
}

impl RawPoly {
    pub fn zero() -> Self {
        RawPoly::default()
    }

    pub fn constant(c: f64) -> Self {
        RawPoly::monomial(0, 0, c)
    }

    pub fn monomial(a: u32, b: u32, c: f64) -> Self {
        let mut p = RawPoly::default();
        if c != 0.0 {
            p.terms.insert((a, b), c);
        }
        p
    }

    /// Polynomial in one variable (`axis` 0 or 1) with coefficients in
    /// increasing degree.
    pub fn univariate(axis: usize, coeffs: &[f64]) -> Self {
        let mut p = RawPoly::default();
        for (d, &c) in coeffs.iter().enumerate() {
            if c != 0.0 {
                let e = if axis == 0 { (d as u32, 0) } else { (0, d as u32) };
                *p.terms.entry(e).or_insert(0.0) += c;
            }
        }
        p
    }

    pub fn degree(&self) -> u32 {
        self.terms.keys().map(|&(a, b)| a + b).max().unwrap_or(0)
    }

    pub fn add(&self, other: &RawPoly) -> RawPoly {
        let mut out = self.clone();
        for (&e, &c) in &other.terms {
            let v = out.terms.entry(e).or_insert(0.0);
            *v += c;
            if *v == 0.0 {
                out.terms.remove(&e);
            }
        }
        out
    }

    pub fn scale(&self, f: f64) -> RawPoly {
        let mut out = RawPoly::default();
        if f != 0.0 {
            for (&e, &c) in &self.terms {
                out.terms.insert(e, c * f);
            }
        }
        out
    }

    pub fn sub(&self, other: &RawPoly) -> RawPoly {
        self.add(&other.scale(-1.0))
    }

    pub fn mul(&self, other: &RawPoly) -> RawPoly {
        let mut out = RawPoly::default();
        for (&(a1, b1), &c1) in &self.terms {
            for (&(a2, b2), &c2) in &other.terms {
                *out.terms.entry((a1 + a2, b1 + b2)).or_insert(0.0) += c1 * c2;
            }
        }
        out.terms.retain(|_, c| *c != 0.0);
        out
    }

    pub fn diff(&self, axis: usize) -> RawPoly {
        let mut out = RawPoly::default();
        for (&(a, b), &c) in &self.terms {
            match axis {
                0 if a > 0 => {
                    *out.terms.entry((a - 1, b)).or_insert(0.0) += c * a as f64;
                }
                1 if b > 0 => {
                    *out.terms.entry((a, b - 1)).or_insert(0.0) += c * b as f64;
                }
                _ => {}
            }
        }
        out
    }

    /// Arbitrary partial derivative `d^(i+j) / dx1^i dx2^j`.
    pub fn partial(&self, i: u32, j: u32) -> RawPoly {
        let mut p = self.clone();
        for _ in 0..i {
            p = p.diff(0);
        }
        for _ in 0..j {
            p = p.diff(1);
        }
        p
    }

    pub fn eval(&self, x: Vec2) -> f64 {
        self.terms
            .iter()
            .map(|(&(a, b), &c)| c * x.x.powi(a as i32) * x.y.powi(b as i32))
            .sum()
    }

    /// Exact integral over a polygon (counterclockwise vertex loop) via the
    /// divergence theorem: `int_T p = sum_E int_E F . n` with
    /// `F = (int p dx1, 0)`, evaluated with a one-dimensional Gauss rule of
    /// sufficient order on each side.
    pub fn polygon_integral(&self, vertices: &[Vec2]) -> f64 {
        let anti = self.antiderivative_x();
        let deg = anti.degree() as usize;
        let (gx, gw) = gauss_legendre(deg / 2 + 1);
        let n = vertices.len();
        let mut total = 0.0;
        for i in 0..n {
            let a = vertices[i];
            let b = vertices[(i + 1) % n];
            let d = b - a;
            let len = d.norm();
            if len == 0.0 {
                continue;
            }
            // Outward normal of a counterclockwise loop.
            let nx = d.y / len;
            if nx == 0.0 {
                continue;
            }
            for (xg, wg) in gx.iter().zip(&gw) {
                let t = 0.5 * (1.0 + xg);
                let p = a + d * t;
                total += 0.5 * len * wg * anti.eval(p) * nx;
            }
        }
        total
    }

    fn antiderivative_x(&self) -> RawPoly {
        let mut out = RawPoly::default();
        for (&(a, b), &c) in &self.terms {
            out.terms.insert((a + 1, b), c / (a as f64 + 1.0));
        }
        out
    }
}

/// Integral of a product of raw polynomials over a polygon.
pub fn polygon_product_integral(ps: &[&RawPoly], vertices: &[Vec2]) -> f64 {
    let mut acc = RawPoly::constant(1.0);
    for p in ps {
        acc = acc.mul(p);
    }
    acc.polygon_integral(vertices)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn arithmetic_and_eval() {
        let p = RawPoly::monomial(2, 1, 3.0).add(&RawPoly::constant(-1.0));
        assert_eq!(p.eval(Vec2::new(2.0, 0.5)), 3.0 * 4.0 * 0.5 - 1.0);
        let q = p.mul(&p);
        assert_eq!(q.eval(Vec2::new(2.0, 0.5)), 25.0);
        let d = RawPoly::monomial(3, 2, 1.0).partial(1, 1);
        assert_eq!(d, RawPoly::monomial(2, 1, 6.0));
    }

    #[test]
    fn polygon_integrals_match_closed_forms() {
        let square = [
            Vec2::new(0.0, 0.0),
            Vec2::new(1.0, 0.0),
            Vec2::new(1.0, 1.0),
            Vec2::new(0.0, 1.0),
        ];
        let p = RawPoly::monomial(2, 2, 1.0);
        assert!((p.polygon_integral(&square) - 1.0 / 9.0).abs() < 1e-15);
        let tri = [Vec2::new(0.0, 0.0), Vec2::new(1.0, 0.0), Vec2::new(0.0, 1.0)];
        assert!((p.polygon_integral(&tri) - 1.0 / 180.0).abs() < 1e-16);
        assert!((RawPoly::constant(1.0).polygon_integral(&tri) - 0.5).abs() < 1e-15);
        // Non-convex polygon: L-shape of area 3/4.
        let ell = [
            Vec2::new(0.0, 0.0),
            Vec2::new(1.0, 0.0),
            Vec2::new(1.0, 0.5),
            Vec2::new(0.5, 0.5),
            Vec2::new(0.5, 1.0),
            Vec2::new(0.0, 1.0),
        ];
        assert!((RawPoly::constant(1.0).polygon_integral(&ell) - 0.75).abs() < 1e-15);
    }

    #[test]
    fn univariate_product_is_separable() {
        // f(t) = t^2 - 2 t^3 + t^4; u = f(x) f(y); int over unit square
        // equals (int f)^2 = (1/30)^2.
        let f = [0.0, 0.0, 1.0, -2.0, 1.0];
        let u = RawPoly::univariate(0, &f).mul(&RawPoly::univariate(1, &f));
        let square = [
            Vec2::new(0.0, 0.0),
            Vec2::new(1.0, 0.0),
            Vec2::new(1.0, 1.0),
            Vec2::new(0.0, 1.0),
        ];
        let exact = (1.0 / 30.0) * (1.0 / 30.0);
        assert!((u.polygon_integral(&square) - exact).abs() < 1e-15);
    }
}
