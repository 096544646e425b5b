//! Smooth fields with exact partial derivatives of every order, used to
//! feed the interpolation operators and manufactured-solution studies.

use std::sync::Arc;

use crate::geometry::Vec2;
use crate::oracle::RawPoly;

/// A scalar field together with all of its partial derivatives:
/// `partial(x, (i, j))` returns `d^(i+j) f / dx1^i dx2^j` at `x`.
#[derive(Clone)]
pub struct ScalarField {
    f: Arc<dyn Fn(Vec2, (u32, u32)) -> f64 + Send + Sync>,
}

impl ScalarField {
    pub fn new(f: impl Fn(Vec2, (u32, u32)) -> f64 + Send + Sync + 'static) -> Self {
        ScalarField { f: Arc::new(f) }
    }

    pub fn eval(&self, x: Vec2) -> f64 {
        (self.f)(x, (0, 0))
    }

    pub fn partial(&self, x: Vec2, order: (u32, u32)) -> f64 {
        (self.f)(x, order)
    }

    pub fn from_poly(p: RawPoly) -> Self {
        ScalarField::new(move |x, (i, j)| p.partial(i, j).eval(x))
    }

    pub fn zero() -> Self {
        ScalarField::new(|_, _| 0.0)
    }

    /// `sin(a pi x1) sin(b pi x2)`.
    pub fn sine_product(a: f64, b: f64) -> Self {
        let pi = std::f64::consts::PI;
        ScalarField::new(move |x, (i, j)| {
            let wa = a * pi;
            let wb = b * pi;
            wa.powi(i as i32)
                * wb.powi(j as i32)
                * phase(wa * x.x, i)
                * phase(wb * x.y, j)
        })
    }
}

/// `d^n/dt^n sin(t)` evaluated by phase shift.
fn phase(t: f64, n: u32) -> f64 {
    match n % 4 {
        0 => t.sin(),
        1 => t.cos(),
        2 => -t.sin(),
        _ => -t.cos(),
    }
}

/// A vector field as a pair of scalar fields.
#[derive(Clone)]
pub struct VectorField {
    pub comps: [ScalarField; 2],
}

impl VectorField {
    pub fn new(v1: ScalarField, v2: ScalarField) -> Self {
        VectorField { comps: [v1, v2] }
    }

    pub fn eval(&self, x: Vec2) -> Vec2 {
        Vec2::new(self.comps[0].eval(x), self.comps[1].eval(x))
    }

    /// Jacobian with rows `grad v_i`.
    pub fn grad(&self, x: Vec2) -> [[f64; 2]; 2] {
        [
            [self.comps[0].partial(x, (1, 0)), self.comps[0].partial(x, (0, 1))],
            [self.comps[1].partial(x, (1, 0)), self.comps[1].partial(x, (0, 1))],
        ]
    }
}

/// A symmetric tensor field, components `(xx, xy, yy)`.
#[derive(Clone)]
pub struct SymTensorField {
    pub comps: [ScalarField; 3],
}

impl SymTensorField {
    pub fn new(xx: ScalarField, xy: ScalarField, yy: ScalarField) -> Self {
        SymTensorField { comps: [xx, xy, yy] }
    }

    /// Hessian of a scalar potential.
    pub fn hessian_of(u: &ScalarField) -> Self {
        let uxx = u.clone();
        let uxy = u.clone();
        let uyy = u.clone();
        SymTensorField {
            comps: [
                ScalarField::new(move |x, (i, j)| uxx.partial(x, (i + 2, j))),
                ScalarField::new(move |x, (i, j)| uxy.partial(x, (i + 1, j + 1))),
                ScalarField::new(move |x, (i, j)| uyy.partial(x, (i, j + 2))),
            ],
        }
    }

    /// Symmetric curl of a vector potential.
    pub fn symcurl_of(v: &VectorField) -> Self {
        let v1a = v.comps[0].clone();
        let v1b = v.comps[0].clone();
        let v2a = v.comps[1].clone();
        let v2b = v.comps[1].clone();
        SymTensorField {
            comps: [
                ScalarField::new(move |x, (i, j)| v1a.partial(x, (i, j + 1))),
                ScalarField::new(move |x, (i, j)| {
                    0.5 * (v2a.partial(x, (i, j + 1)) - v1b.partial(x, (i + 1, j)))
                }),
                ScalarField::new(move |x, (i, j)| -v2b.partial(x, (i + 1, j))),
            ],
        }
    }

    pub fn eval(&self, x: Vec2) -> [f64; 3] {
        [self.comps[0].eval(x), self.comps[1].eval(x), self.comps[2].eval(x)]
    }

    /// `tau(x) n . n` and friends.
    pub fn apply_to(&self, x: Vec2, a: Vec2, b: Vec2) -> f64 {
        let t = self.eval(x);
        t[0] * a.x * b.x + t[1] * (a.x * b.y + a.y * b.x) + t[2] * a.y * b.y
    }

    /// Row-wise divergence `(d1 t11 + d2 t12, d1 t21 + d2 t22)`.
    pub fn vdiv(&self, x: Vec2) -> Vec2 {
        Vec2::new(
            self.comps[0].partial(x, (1, 0)) + self.comps[1].partial(x, (0, 1)),
            self.comps[1].partial(x, (1, 0)) + self.comps[2].partial(x, (0, 1)),
        )
    }

    pub fn divdiv(&self, x: Vec2) -> f64 {
        self.comps[0].partial(x, (2, 0))
            + 2.0 * self.comps[1].partial(x, (1, 1))
            + self.comps[2].partial(x, (0, 2))
    }
}

/// The biquartic bubble `u = (x1 x2 (1 - x1) (1 - x2))^2` on the unit
/// square; its Hessian has vanishing tangential boundary action.
pub fn biquartic_bubble() -> RawPoly {
    let f = [0.0, 0.0, 1.0, -2.0, 1.0];
    RawPoly::univariate(0, &f).mul(&RawPoly::univariate(1, &f))
}
