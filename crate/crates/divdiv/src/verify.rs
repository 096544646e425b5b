//! Verification suites for the discrete complexes.
//!
//! Four groups of computations, each returning a serializable report:
//!
//! * identity suites — every algebraic identity of the construction,
//!   evaluated on exhaustive polynomial bases plus seeded random
//!   degree-of-freedom fields;
//! * spectral estimates — Poincaré constants of the two discrete operators,
//!   kernel/surjectivity certificates, and Poincaré–Korn constants for
//!   hybrid (element + edge) vector fields;
//! * counting — degree-of-freedom accounting for the serendipity reduction;
//! * convergence — consistency and adjoint-consistency functionals of
//!   manufactured solutions with log-log slopes, plus a mixed plate solve.
//!
//! All random draws come from a seeded ChaCha8 stream, so reports are
//! reproducible bit for bit. File output goes through a temporary file and
//! an atomic rename: a crashed run never leaves a partial report behind.

use std::path::{Path, PathBuf};

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::ddr::{frobenius_weights, Complex, ElementOps};
use crate::fields::{biquartic_bubble, ScalarField, SymTensorField, VectorField};
use crate::linalg::{
    cg_solve, largest_generalized_eigenvalue, linear_fit_slope, lstsq_relative_residual,
    rank_with_tol, smallest_generalized_eigenvalue, ConstraintBasis, Coo, Csr,
};
use crate::mesh::Mesh;
use crate::oracle::RawPoly;
use crate::poly::basis::{EdgeBasis, ElementBasis};
use crate::poly::{dim_p, Codomain, DiffOp};
use crate::serendipity::{SerendipityComplex, SerendipityOps};

/// Default number of random degree-of-freedom draws in identity suites.
pub const DEFAULT_DRAWS: usize = 50;
/// Default number of random test fields when sampling dual norms.
pub const DEFAULT_SUP_DRAWS: usize = 200;

// ---------------------------------------------------------------------------
// Reports.
// ---------------------------------------------------------------------------

/// One verified property: a measured value against an acceptance criterion.
/// `anchor` is a short stable tag naming the property, shared between
/// suites so results can be collated across runs.
#[derive(Clone, Debug, Serialize)]
pub struct Check {
    pub name: String,
    pub anchor: String,
    pub value: f64,
    pub criterion: String,
    pub pass: bool,
}

impl Check {
    pub fn below(name: &str, anchor: &str, value: f64, tol: f64) -> Check {
        Check {
            name: name.to_string(),
            anchor: anchor.to_string(),
            value,
            criterion: format!("<= {tol:.1e}"),
            pass: value.is_finite() && value <= tol,
        }
    }

    pub fn at_least(name: &str, anchor: &str, value: f64, bound: f64) -> Check {
        Check {
            name: name.to_string(),
            anchor: anchor.to_string(),
            value,
            criterion: format!(">= {bound:.1e}"),
            pass: value.is_finite() && value >= bound,
        }
    }

    pub fn near(name: &str, anchor: &str, value: f64, target: f64, tol: f64) -> Check {
        Check {
            name: name.to_string(),
            anchor: anchor.to_string(),
            value,
            criterion: format!("within {tol} of {target}"),
            pass: value.is_finite() && (value - target).abs() <= tol,
        }
    }

    /// Integer equality (dimension counts), stored as a float value.
    pub fn equals(name: &str, anchor: &str, value: usize, target: usize) -> Check {
        Check {
            name: name.to_string(),
            anchor: anchor.to_string(),
            value: value as f64,
            criterion: format!("== {target}"),
            pass: value == target,
        }
    }
}

/// A named collection of checks with the environment that produced them.
#[derive(Clone, Debug, Serialize)]
pub struct Report {
    pub suite: String,
    pub family: String,
    pub k: usize,
    pub theta: f64,
    pub seed: u64,
    pub checks: Vec<Check>,
}

impl Report {
    pub fn new(suite: &str, family: &str, k: usize, theta: f64, seed: u64) -> Report {
        Report {
            suite: suite.to_string(),
            family: family.to_string(),
            k,
            theta,
            seed,
            checks: Vec::new(),
        }
    }

    pub fn push(&mut self, check: Check) {
        self.checks.push(check);
    }

    pub fn pass(&self) -> bool {
        self.checks.iter().all(|c| c.pass)
    }

    pub fn failures(&self) -> Vec<&Check> {
        self.checks.iter().filter(|c| !c.pass).collect()
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serialization cannot fail")
    }

    pub fn csv_header() -> &'static str {
        "suite,family,k,theta,seed,name,anchor,value,criterion,pass"
    }

    /// CSV rows (without header), one per check.
    pub fn to_csv_rows(&self) -> String {
        let mut out = String::new();
        for c in &self.checks {
            out.push_str(&format!(
                "{},{},{},{},{},{},{},{:.6e},{},{}\n",
                self.suite,
                self.family,
                self.k,
                self.theta,
                self.seed,
                c.name.replace(',', ";"),
                c.anchor,
                c.value,
                c.criterion.replace(',', ";"),
                c.pass
            ));
        }
        out
    }

    pub fn to_csv(&self) -> String {
        format!("{}\n{}", Report::csv_header(), self.to_csv_rows())
    }

    pub fn write_json(&self, path: &Path) -> std::io::Result<()> {
        write_atomic(path, &self.to_json())
    }

    pub fn write_csv(&self, path: &Path) -> std::io::Result<()> {
        write_atomic(path, &self.to_csv())
    }
}

/// Writes a whole file through a sibling temporary and an atomic rename.
pub fn write_atomic(path: &Path, contents: &str) -> std::io::Result<()> {
    let mut tmp = PathBuf::from(path);
    let mut name = tmp
        .file_name()
        .map(|n| n.to_os_string())
        .unwrap_or_default();
    name.push(".tmp");
    tmp.set_file_name(name);
    std::fs::write(&tmp, contents)?;
    std::fs::rename(&tmp, path)
}

// ---------------------------------------------------------------------------
// Shared helpers: manufactured fields and coordinate extraction.
// ---------------------------------------------------------------------------

fn poly_field(p: RawPoly) -> ScalarField {
    ScalarField::from_poly(p)
}

/// `(1, 0)`, `(0, 1)` and `x`: a basis of the kernel of the symmetric curl.
pub fn rt1_basis() -> [VectorField; 3] {
    let one = || RawPoly::constant(1.0);
    let zero = || RawPoly::zero();
    [
        VectorField::new(poly_field(one()), poly_field(zero())),
        VectorField::new(poly_field(zero()), poly_field(one())),
        VectorField::new(
            poly_field(RawPoly::monomial(1, 0, 1.0)),
            poly_field(RawPoly::monomial(0, 1, 1.0)),
        ),
    ]
}

/// `(1, 0)`, `(0, 1)` and `(-y, x)`: rigid motions, the kernel of the
/// symmetric gradient.
pub fn rigid_motion_basis() -> [VectorField; 3] {
    let one = || RawPoly::constant(1.0);
    let zero = || RawPoly::zero();
    [
        VectorField::new(poly_field(one()), poly_field(zero())),
        VectorField::new(poly_field(zero()), poly_field(one())),
        VectorField::new(
            poly_field(RawPoly::monomial(0, 1, -1.0)),
            poly_field(RawPoly::monomial(1, 0, 1.0)),
        ),
    ]
}

/// Row-wise rotated divergence `(d2 t11 - d1 t12, d2 t12 - d1 t22)` of a
/// symmetric tensor field.
fn vrot_field(t: &SymTensorField) -> VectorField {
    let (a0, a1) = (t.comps[0].clone(), t.comps[1].clone());
    let (b1, b2) = (t.comps[1].clone(), t.comps[2].clone());
    VectorField::new(
        ScalarField::new(move |x, (i, j)| a0.partial(x, (i, j + 1)) - a1.partial(x, (i + 1, j))),
        ScalarField::new(move |x, (i, j)| b1.partial(x, (i, j + 1)) - b2.partial(x, (i + 1, j))),
    )
}

/// Stacked orthonormal coordinates of the element-wise `L2` projection of a
/// vector field onto `(P^m)^2`.
fn field_coords_v(ops: &ElementOps, f: &VectorField, m: i32) -> DVector<f64> {
    let quad = &ops.basis.quad;
    let d = ops.basis.dim(m);
    let mut out = DVector::zeros(2 * d);
    for c in 0..2 {
        let vals = DVector::from_iterator(
            quad.len(),
            quad.points.iter().map(|&x| {
                let v = f.eval(x);
                if c == 0 {
                    v.x
                } else {
                    v.y
                }
            }),
        );
        out.rows_mut(c * d, d).copy_from(&ops.basis.project(&vals, m));
    }
    out
}

/// Same for a symmetric tensor field, components `(xx, xy, yy)`.
fn field_coords_s(ops: &ElementOps, t: &SymTensorField, m: i32) -> DVector<f64> {
    let quad = &ops.basis.quad;
    let d = ops.basis.dim(m);
    let mut out = DVector::zeros(3 * d);
    for c in 0..3 {
        let vals = DVector::from_iterator(
            quad.len(),
            quad.points.iter().map(|&x| t.eval(x)[c]),
        );
        out.rows_mut(c * d, d).copy_from(&ops.basis.project(&vals, m));
    }
    out
}

/// Scalar version.
fn field_coords_q(ops: &ElementOps, f: &ScalarField, m: i32) -> DVector<f64> {
    let quad = &ops.basis.quad;
    let vals = DVector::from_iterator(quad.len(), quad.points.iter().map(|&x| f.eval(x)));
    ops.basis.project(&vals, m)
}

fn scatter_add(a: &mut DMatrix<f64>, rows: &[usize], cols: &[usize], local: &DMatrix<f64>) {
    for (i, &gi) in rows.iter().enumerate() {
        for (j, &gj) in cols.iter().enumerate() {
            a[(gi, gj)] += local[(i, j)];
        }
    }
}

fn csr_frob(m: &Csr) -> f64 {
    m.val.iter().map(|v| v * v).sum::<f64>().sqrt()
}

fn sample_unit(rng: &mut ChaCha8Rng, n: usize) -> DVector<f64> {
    let mut v = DVector::from_fn(n, |_, _| rng.gen_range(-1.0..1.0));
    let norm = v.norm();
    if norm > 0.0 {
        v /= norm;
    }
    v
}

/// `sum_T pv_T^T (w coords)`: the global functional `v -> sum_T (w, P_V v_T)`.
fn assemble_pv_pairing(complex: &Complex, f: &VectorField) -> DVector<f64> {
    let ki = complex.k as i32;
    let mut out = DVector::zeros(complex.v_dim());
    for (el, ops) in complex.ops.iter().enumerate() {
        let wc = field_coords_v(ops, f, ki);
        let local = ops.pv.transpose() * wc;
        for (i, &g) in complex.v_map(el).iter().enumerate() {
            out[g] += local[i];
        }
    }
    out
}

/// `sum_T psigma_T^T diag(w_F) (tau coords)`: the global functional
/// `tau_h -> sum_T int tau : P_Sigma tau_T` (Frobenius pairing).
fn assemble_psigma_pairing(complex: &Complex, t: &SymTensorField) -> DVector<f64> {
    let ki = complex.k as i32;
    let wf = frobenius_weights(dim_p(ki - 1));
    let mut out = DVector::zeros(complex.s_dim());
    for (el, ops) in complex.ops.iter().enumerate() {
        let tc = field_coords_s(ops, t, ki - 1).component_mul(&wf);
        let local = ops.psigma.transpose() * tc;
        for (i, &g) in complex.s_map(el).iter().enumerate() {
            out[g] += local[i];
        }
    }
    out
}

/// Element-wise coordinates of the projection of a scalar field onto
/// `P^{k-2}`, laid out like the range of the discrete div-div operator.
fn assemble_q_coords(complex: &Complex, f: &ScalarField) -> DVector<f64> {
    let ki = complex.k as i32;
    let mut out = DVector::zeros(complex.q_dim());
    for (el, ops) in complex.ops.iter().enumerate() {
        let qc = field_coords_q(ops, f, ki - 2);
        out.rows_mut(complex.q_offset(el), qc.len()).copy_from(&qc);
    }
    out
}

/// First element writing each global row, following the layout maps. Rows
/// attached to shared entities are identical across writers, so any
/// consistent choice works for transposing overwrite-scattered operators.
fn row_writers(maps: &[Vec<usize>], dim: usize) -> Vec<usize> {
    let mut writer = vec![usize::MAX; dim];
    for (el, map) in maps.iter().enumerate() {
        for &g in map {
            if writer[g] == usize::MAX {
                writer[g] = el;
            }
        }
    }
    writer
}

/// Transpose-application of the kinematic extension: pulls a functional on
/// the full space back to the reduced space.
fn extend_v_transpose(ser: &SerendipityComplex, r: &DVector<f64>) -> DVector<f64> {
    let complex = ser.complex;
    let maps: Vec<Vec<usize>> = (0..complex.ops.len()).map(|el| complex.v_map(el)).collect();
    let writer = row_writers(&maps, complex.v_dim());
    let mut out = DVector::zeros(ser.v_dim());
    for (el, sops) in ser.ops.iter().enumerate() {
        let map = &maps[el];
        let mut masked = DVector::zeros(map.len());
        for (i, &g) in map.iter().enumerate() {
            if writer[g] == el {
                masked[i] = r[g];
            }
        }
        let local = sops.e_v.transpose() * masked;
        for (i, &g) in ser.v_map(el).iter().enumerate() {
            out[g] += local[i];
        }
    }
    out
}

/// Tensor-side analogue of [`extend_v_transpose`].
fn extend_s_transpose(ser: &SerendipityComplex, r: &DVector<f64>) -> DVector<f64> {
    let complex = ser.complex;
    let maps: Vec<Vec<usize>> = (0..complex.ops.len()).map(|el| complex.s_map(el)).collect();
    let writer = row_writers(&maps, complex.s_dim());
    let mut out = DVector::zeros(ser.s_dim());
    for (el, sops) in ser.ops.iter().enumerate() {
        let map = &maps[el];
        let mut masked = DVector::zeros(map.len());
        for (i, &g) in map.iter().enumerate() {
            if writer[g] == el {
                masked[i] = r[g];
            }
        }
        let local = sops.e_sigma.transpose() * masked;
        for (i, &g) in ser.s_map(el).iter().enumerate() {
            out[g] += local[i];
        }
    }
    out
}

// ---------------------------------------------------------------------------
// Identity suites.
// ---------------------------------------------------------------------------

/// Which family of identities to exercise.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub enum SuiteMode {
    /// Identities of the full complex only.
    Full,
    /// Identities of the serendipity construction and the reduced complex.
    Serendipity,
    /// Identities coupling the two complexes (cochain maps, isomorphisms).
    Cross,
}

impl SuiteMode {
    fn label(self) -> &'static str {
        match self {
            SuiteMode::Full => "identities.full",
            SuiteMode::Serendipity => "identities.serendipity",
            SuiteMode::Cross => "identities.cross",
        }
    }
}

/// Runs one identity suite on a mesh. Exhaustive polynomial bases feed the
/// polynomial-consistency identities; `draws` seeded random fields feed the
/// degree-of-freedom-level identities.
pub fn run_identity_suite(
    mesh: &Mesh,
    family: &str,
    k: usize,
    mode: SuiteMode,
    theta: f64,
    seed: u64,
    draws: usize,
) -> Report {
    let complex = Complex::new(mesh, k);
    let mut report = Report::new(mode.label(), family, k, theta, seed);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    match mode {
        SuiteMode::Full => full_identities(&complex, &mut report, &mut rng, draws),
        SuiteMode::Serendipity => {
            let ser = SerendipityComplex::new(&complex, theta);
            serendipity_identities(&complex, &ser, &mut report, &mut rng, draws);
        }
        SuiteMode::Cross => {
            let ser = SerendipityComplex::new(&complex, theta);
            cross_identities(&complex, &ser, &mut report, &mut rng, draws);
        }
    }
    report
}

fn full_identities(complex: &Complex, report: &mut Report, rng: &mut ChaCha8Rng, draws: usize) {
    let ki = complex.k as i32;
    let mut r_pv = 0.0f64;
    let mut r_psig = 0.0f64;
    let mut r_comm_v = 0.0f64;
    let mut r_comm_s = 0.0f64;
    let mut r_l2v = 0.0f64;
    let mut r_l2s = 0.0f64;

    for ops in &complex.ops {
        let nv = 2 * dim_p(ki);
        // Kinematic potential left-inverts interpolation on degree-k fields,
        // and the product against interpolates of polynomials is exact.
        for j in 0..nv {
            let mut c = DVector::zeros(nv);
            c[j] = 1.0;
            let p = ops.basis.poly_from_on(&c, ki, Codomain::Vector);
            let dof = ops.interpolate_v_poly(&p);
            let mut diff = &ops.pv * &dof;
            diff[j] -= 1.0;
            r_pv = r_pv.max(diff.norm());

            let lhs = &ops.gram_v * &dof;
            let rhs = ops.pv.row(j).transpose();
            r_l2v = r_l2v.max((lhs - &rhs).norm() / rhs.norm().max(1.0));

            let sc = p.apply(DiffOp::SymCurl);
            let lhs = &ops.ucsym * &dof;
            let rhs = ops.interpolate_s_poly(&sc);
            r_comm_v = r_comm_v.max((lhs - &rhs).norm() / rhs.norm().max(1.0));
        }

        // Tensor potential of the discrete sym-curl is the polynomial
        // sym-curl, as matrices on the kinematic space.
        let d = &ops.psigma * &ops.ucsym - &ops.csym;
        r_psig = r_psig.max(d.norm() / ops.csym.norm().max(1.0));

        // Discrete div-div of an interpolate projects the smooth div-div;
        // checked within the native degree and one degree beyond.
        let wf = frobenius_weights(dim_p(ki - 1));
        for deg in [ki - 1, ki + 1] {
            let ns = 3 * dim_p(deg);
            for j in 0..ns {
                let mut c = DVector::zeros(ns);
                c[j] = 1.0;
                let tau = ops.basis.poly_from_on(&c, deg, Codomain::SymTensor);
                let dof = ops.interpolate_s_poly(&tau);
                let lhs = &ops.dd * &dof;
                let rhs = ops.basis.on_from_poly(&tau.divdiv(), ki - 2);
                r_comm_s = r_comm_s.max((lhs - &rhs).norm() / rhs.norm().max(1.0));

                if deg == ki - 1 {
                    let lhs = &ops.gram_s * &dof;
                    let rhs = ops.psigma.row(j).transpose() * wf[j];
                    r_l2s = r_l2s.max((lhs - &rhs).norm() / rhs.norm().max(1.0));
                }
            }
        }
    }

    report.push(Check::below(
        "kinematic potential left-inverts interpolation on degree-k fields",
        "PVT.consistency",
        r_pv,
        1e-10,
    ));
    report.push(Check::below(
        "tensor potential of the discrete sym-curl is the polynomial sym-curl",
        "PSigmaT.circ.uCsymT=CsymT",
        r_psig,
        1e-10,
    ));
    report.push(Check::below(
        "discrete sym-curl commutes with interpolation on polynomials",
        "commutation",
        r_comm_v,
        1e-10,
    ));
    report.push(Check::below(
        "discrete div-div of an interpolate projects the smooth div-div",
        "commutation",
        r_comm_s,
        1e-10,
    ));
    report.push(Check::below(
        "kinematic product against polynomial interpolates is the exact pairing",
        "L2prod.VT:polynomial.consistency",
        r_l2v,
        1e-10,
    ));
    report.push(Check::below(
        "tensor product against polynomial interpolates is the exact pairing",
        "L2prod.SigmaT:polynomial.consistency",
        r_l2s,
        1e-10,
    ));

    // Degree-of-freedom-level identities, global.
    let ucsym = complex.assemble_ucsym();
    let dd = complex.assemble_dd();
    let uc_norm = csr_frob(&ucsym);
    let dd_norm = csr_frob(&dd);

    let mut r_complex = 0.0f64;
    for _ in 0..draws {
        let x = sample_unit(rng, complex.v_dim());
        let y = ucsym.matvec(&x);
        let z = dd.matvec(&y);
        r_complex = r_complex.max(z.norm() / (dd_norm * y.norm()).max(1e-300));
    }
    let (prod, ddn, ucn) = complex.composition_residual();
    report.push(Check::below(
        "div-div of a sym-curl vanishes on random fields",
        "complex.S",
        r_complex,
        1e-12,
    ));
    report.push(Check::below(
        "div-div composed with sym-curl vanishes as a matrix",
        "complex.S",
        prod / (ddn * ucn).max(1e-300),
        1e-12,
    ));

    let mut r_rt1 = 0.0f64;
    for w in rt1_basis().iter() {
        let x = complex.interpolate_v(w);
        let y = ucsym.matvec(&x);
        r_rt1 = r_rt1.max(y.norm() / (uc_norm * x.norm()).max(1e-300));
    }
    report.push(Check::below(
        "interpolated rigid-translation-plus-dilation fields are in the kernel",
        "complex.V",
        r_rt1,
        1e-12,
    ));
    report.push(Check::below(
        "assembled sym-curl rows agree across elements",
        "cochain.single.valued",
        complex.ucsym_consistency(),
        1e-12,
    ));

    let zero_v = complex.interpolate_v(&VectorField::new(ScalarField::zero(), ScalarField::zero()));
    let zero_s = complex.interpolate_s(&SymTensorField::new(
        ScalarField::zero(),
        ScalarField::zero(),
        ScalarField::zero(),
    ));
    report.push(Check::below(
        "zero fields interpolate and map to zero",
        "zero.fields",
        zero_v.norm() + zero_s.norm() + ucsym.matvec(&zero_v).norm() + dd.matvec(&zero_s).norm(),
        1e-14,
    ));
}

fn serendipity_identities(
    complex: &Complex,
    ser: &SerendipityComplex,
    report: &mut Report,
    rng: &mut ChaCha8Rng,
    draws: usize,
) {
    let ki = complex.k as i32;
    let mut r_sv = 0.0f64;
    let mut r_ev = 0.0f64;
    let mut r_ss = 0.0f64;
    let mut r_es = 0.0f64;
    let mut r_chp1 = 0.0f64;
    let mut r_chp2 = 0.0f64;
    let mut r_vl = 0.0f64;
    let mut r_commute = 0.0f64;

    for (el, sops) in ser.ops.iter().enumerate() {
        let ops = &complex.ops[el];
        let nv = 2 * dim_p(ki);
        for j in 0..nv {
            let mut c = DVector::zeros(nv);
            c[j] = 1.0;
            let p = ops.basis.poly_from_on(&c, ki, Codomain::Vector);
            let dof = ops.interpolate_v_poly(&p);
            let red = &sops.r_v * &dof;
            let sc = ops.basis.on_from_poly(&p.apply(DiffOp::SymCurl), ki - 1);
            r_sv = r_sv.max((&sops.s_v * &red - &sc).norm() / sc.norm().max(1.0));
            r_ev = r_ev.max((&sops.e_v * &red - &dof).norm() / dof.norm().max(1.0));
        }
        let ns = 3 * dim_p(ki - 1);
        for j in 0..ns {
            let mut c = DVector::zeros(ns);
            c[j] = 1.0;
            let tau = ops.basis.poly_from_on(&c, ki - 1, Codomain::SymTensor);
            let dof = ops.interpolate_s_poly(&tau);
            let red = &sops.r_sigma * &dof;
            r_ss = r_ss.max((&sops.s_sigma * &red - &c).norm());
            r_es = r_es.max((&sops.e_sigma * &red - &dof).norm() / dof.norm().max(1.0));
        }

        // Complement moments of the serendipity tensors.
        let lhs = ops.choly.project_matrix(&(&ops.csym * &sops.e_v));
        let rhs = ops.choly.project_matrix(&sops.s_v);
        r_chp1 = r_chp1.max((&lhs - &rhs).norm() / rhs.norm().max(1.0));

        let nred = 2 * dim_p(sops.ell());
        let proj = ops.choly.project_matrix(&sops.s_sigma);
        let mut sel = DMatrix::zeros(nred, sops.s_dim());
        for j in 0..nred {
            sel[(j, ops.s_choly_offset() + j)] = 1.0;
        }
        r_chp2 = r_chp2.max((proj.rows(0, nred) - &sel).norm());

        // The element component of an extension projects back onto the
        // reduced element component. The full element block interleaves as
        // [x: dim_p(k-2) | y: dim_p(k-2)], the reduced one as
        // [x: dim_p(ell) | y: dim_p(ell)].
        let off = ops.v_element_offset();
        let dfull = dim_p(ki - 2);
        let dred = dim_p(sops.ell());
        for c in 0..2 {
            for i in 0..dred {
                let mut row = sops.e_v.row(off + c * dfull + i).clone_owned();
                row[off + c * dred + i] -= 1.0;
                r_vl = r_vl.max(row.norm());
            }
        }

        // Serendipity tensor of the reduced sym-curl is the kinematic one.
        r_commute = r_commute
            .max((&sops.s_sigma * &sops.sucsym - &sops.s_v).norm() / sops.s_v.norm().max(1.0));
    }

    report.push(Check::below(
        "kinematic serendipity tensor reproduces polynomial sym-curls",
        "SV:polynomial.consistency",
        r_sv,
        1e-10,
    ));
    report.push(Check::below(
        "kinematic extension reproduces polynomial interpolates",
        "EV:polynomial.consistency",
        r_ev,
        1e-10,
    ));
    report.push(Check::below(
        "tensor serendipity operator reproduces polynomial tensors",
        "SS:polynomial.consistency",
        r_ss,
        1e-10,
    ));
    report.push(Check::below(
        "tensor extension reproduces polynomial interpolates",
        "ES:polynomial.consistency",
        r_es,
        1e-10,
    ));
    report.push(Check::below(
        "complement moments of the extended sym-curl match the serendipity tensor",
        "cHproj.k-1.Csym",
        r_chp1,
        1e-10,
    ));
    report.push(Check::below(
        "retained complement moments of the tensor serendipity operator are the inputs",
        "cHproj.ellT+1.SSigma",
        r_chp2,
        1e-10,
    ));
    report.push(Check::below(
        "extension element component projects onto the reduced component",
        "vlproj.ell.T.EPT",
        r_vl,
        1e-10,
    ));
    report.push(Check::below(
        "serendipity tensor of the reduced sym-curl is the kinematic one",
        "commutation",
        r_commute,
        1e-10,
    ));

    // Reduced complex, global.
    let sucsym = ser.assemble_sucsym();
    let sdd = ser.assemble_sdd();
    let suc_norm = csr_frob(&sucsym);
    let sdd_norm = csr_frob(&sdd);

    let mut r_complex = 0.0f64;
    for _ in 0..draws {
        let x = sample_unit(rng, ser.v_dim());
        let y = sucsym.matvec(&x);
        let z = sdd.matvec(&y);
        r_complex = r_complex.max(z.norm() / (sdd_norm * y.norm()).max(1e-300));
    }
    report.push(Check::below(
        "reduced div-div of a reduced sym-curl vanishes on random fields",
        "complex.S",
        r_complex,
        1e-12,
    ));

    let mut r_rt1 = 0.0f64;
    for w in rt1_basis().iter() {
        let x = ser.reduce_v(&complex.interpolate_v(w));
        let y = sucsym.matvec(&x);
        r_rt1 = r_rt1.max(y.norm() / (suc_norm * x.norm()).max(1e-300));
    }
    report.push(Check::below(
        "reduced interpolates of kernel fields stay in the kernel",
        "complex.V",
        r_rt1,
        1e-12,
    ));
    report.push(Check::below(
        "assembled reduced sym-curl rows agree across elements",
        "cochain.single.valued",
        ser.sucsym_consistency(),
        1e-12,
    ));
    report.push(Check::at_least(
        "local serendipity saddles are uniformly well posed",
        "infsup.AT",
        ser.min_inf_sup(),
        1e-10,
    ));
    report.push(Check::below(
        "the two right-hand-side assemblies of the tensor problem agree",
        "LSigmaT.bis",
        ser.max_rhs_cross_check(),
        1e-11,
    ));
}

fn cross_identities(
    complex: &Complex,
    ser: &SerendipityComplex,
    report: &mut Report,
    rng: &mut ChaCha8Rng,
    draws: usize,
) {
    let ki = complex.k as i32;
    let ucsym = complex.assemble_ucsym();
    let dd = complex.assemble_dd();
    let sucsym = ser.assemble_sucsym();
    let sdd = ser.assemble_sdd();

    let mut r_iso_v = 0.0f64;
    let mut r_iso_s = 0.0f64;
    let mut r_ev = 0.0f64;
    let mut r_rs = 0.0f64;
    let mut r_es = 0.0f64;
    for _ in 0..draws {
        let xr = sample_unit(rng, ser.v_dim());
        r_iso_v = r_iso_v.max((ser.reduce_v(&ser.extend_v(&xr)) - &xr).norm());
        let lhs = ser.extend_s(&sucsym.matvec(&xr));
        let rhs = ucsym.matvec(&ser.extend_v(&xr));
        r_ev = r_ev.max((&lhs - &rhs).norm() / rhs.norm().max(1e-300));

        let yr = sample_unit(rng, ser.s_dim());
        r_iso_s = r_iso_s.max((ser.reduce_s(&ser.extend_s(&yr)) - &yr).norm());
        let lhs = sdd.matvec(&yr);
        let rhs = dd.matvec(&ser.extend_s(&yr));
        r_es = r_es.max((&lhs - &rhs).norm() / rhs.norm().max(1e-300));

        let x = sample_unit(rng, complex.v_dim());
        let lhs = sucsym.matvec(&ser.reduce_v(&x));
        let rhs = ser.reduce_s(&ucsym.matvec(&x));
        r_rs = r_rs.max((&lhs - &rhs).norm() / rhs.norm().max(1e-300));
    }
    report.push(Check::below(
        "kinematic reduction inverts the extension",
        "isomorphism.V",
        r_iso_v,
        1e-10,
    ));
    report.push(Check::below(
        "tensor reduction inverts the extension",
        "isomorphism.S",
        r_iso_s,
        1e-10,
    ));
    report.push(Check::below(
        "extension intertwines the two sym-curls",
        "cochain.EV",
        r_ev,
        1e-10,
    ));
    report.push(Check::below(
        "reduction intertwines the two sym-curls",
        "cochain.RS",
        r_rs,
        1e-10,
    ));
    report.push(Check::below(
        "reduced div-div is the full div-div of the extension",
        "cochain.ES",
        r_es,
        1e-10,
    ));

    // Polynomial consistency of the composed round trip.
    let mut r_rev = 0.0f64;
    let mut r_res = 0.0f64;
    for (el, sops) in ser.ops.iter().enumerate() {
        let ops = &complex.ops[el];
        let nv = 2 * dim_p(ki);
        for j in 0..nv {
            let mut c = DVector::zeros(nv);
            c[j] = 1.0;
            let p = ops.basis.poly_from_on(&c, ki, Codomain::Vector);
            let dof = ops.interpolate_v_poly(&p);
            let back = &sops.e_v * (&sops.r_v * &dof);
            r_rev = r_rev.max((back - &dof).norm() / dof.norm().max(1.0));
        }
        let ns = 3 * dim_p(ki - 1);
        for j in 0..ns {
            let mut c = DVector::zeros(ns);
            c[j] = 1.0;
            let tau = ops.basis.poly_from_on(&c, ki - 1, Codomain::SymTensor);
            let dof = ops.interpolate_s_poly(&tau);
            let back = &sops.e_sigma * (&sops.r_sigma * &dof);
            r_res = r_res.max((back - &dof).norm() / dof.norm().max(1.0));
        }
    }
    report.push(Check::below(
        "extend-after-reduce reproduces polynomial kinematic interpolates",
        "R.E.V:polynomial.consistency",
        r_rev,
        1e-10,
    ));
    report.push(Check::below(
        "extend-after-reduce reproduces polynomial tensor interpolates",
        "R.E.S:polynomial.consistency",
        r_res,
        1e-10,
    ));

    // Homotopy certificate at desk scale: the round trip moves tensor
    // fields only within the range of the sym-curl.
    if complex.s_dim() <= 1500 {
        let ucd = ucsym.to_dense();
        let mut r_mem = 0.0f64;
        for _ in 0..5 {
            let y = ucsym.matvec(&sample_unit(rng, complex.v_dim()));
            let diff = ser.extend_s(&ser.reduce_s(&y)) - &y;
            if diff.norm() > 1e-13 * y.norm().max(1.0) {
                r_mem = r_mem.max(lstsq_relative_residual(&ucd, &diff));
            }
        }
        report.push(Check::below(
            "the tensor round trip stays inside the sym-curl range",
            "isomorphism.S",
            r_mem,
            1e-10,
        ));
    }
}

// ---------------------------------------------------------------------------
// Cohomology.
// ---------------------------------------------------------------------------

/// Kernel dimensions, surjectivity, and cohomology-space dimensions of both
/// complexes, via dense rank computations (intended for small meshes).
pub fn run_cohomology_suite(mesh: &Mesh, family: &str, k: usize, theta: f64) -> Report {
    let complex = Complex::new(mesh, k);
    let ser = SerendipityComplex::new(&complex, theta);
    let mut report = Report::new("cohomology", family, k, theta, 0);

    let uc = complex.assemble_ucsym().to_dense();
    let ddm = complex.assemble_dd().to_dense();
    let suc = ser.assemble_sucsym().to_dense();
    let sddm = ser.assemble_sdd().to_dense();

    let rank_uc = rank_with_tol(&uc, 1e-9);
    let rank_dd = rank_with_tol(&ddm, 1e-9);
    let rank_suc = rank_with_tol(&suc, 1e-9);
    let rank_sdd = rank_with_tol(&sddm, 1e-9);

    let ker_uc = complex.v_dim() - rank_uc;
    let ker_suc = ser.v_dim() - rank_suc;
    report.push(Check::equals(
        "kernel of the sym-curl has the dimension of its polynomial kernel",
        "cohomology.V",
        ker_uc,
        3,
    ));
    report.push(Check::equals(
        "kernel of the reduced sym-curl has the same dimension",
        "cohomology.V",
        ker_suc,
        3,
    ));
    report.push(Check::equals(
        "div-div is surjective",
        "cohomology.Q",
        rank_dd,
        complex.q_dim(),
    ));
    report.push(Check::equals(
        "reduced div-div is surjective",
        "cohomology.Q",
        rank_sdd,
        ser.q_dim(),
    ));

    let h_sigma = (complex.s_dim() - rank_dd) as i64 - rank_uc as i64;
    let sh_sigma = (ser.s_dim() - rank_sdd) as i64 - rank_suc as i64;
    report.push(Check::equals(
        "middle cohomology of the full complex is trivial",
        "cohomology.Sigma",
        h_sigma.unsigned_abs() as usize,
        0,
    ));
    report.push(Check::equals(
        "middle cohomology of the reduced complex is trivial",
        "cohomology.Sigma",
        sh_sigma.unsigned_abs() as usize,
        0,
    ));
    report.push(Check::equals(
        "cohomology dimensions match between the complexes",
        "cohomology.match",
        (ker_uc == ker_suc && h_sigma == sh_sigma) as usize,
        1,
    ));

    let euler = complex.v_dim() as i64 - complex.s_dim() as i64 + complex.q_dim() as i64;
    let seuler = ser.v_dim() as i64 - ser.s_dim() as i64 + ser.q_dim() as i64;
    report.push(Check::equals(
        "Euler characteristics of both complexes equal the kernel dimension",
        "cohomology.match",
        (euler == 3 && seuler == 3) as usize,
        1,
    ));
    report
}

// ---------------------------------------------------------------------------
// Poincaré constants.
// ---------------------------------------------------------------------------

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub enum PoincareCase {
    /// Component norm of a kinematic field against its sym-curl, on the
    /// orthogonal complement of the polynomial kernel.
    SymCurlV,
    /// Component norm of a tensor field against its div-div, on the
    /// product-orthogonal complement of the div-div kernel.
    DivDivSigma,
}

#[derive(Clone, Debug, Serialize)]
pub struct PoincareEstimate {
    pub case_: PoincareCase,
    /// The certified constant: `lambda^{-1/2}` for the extreme eigenvalue of
    /// the constrained (kinematic) or normal-matrix (tensor) problem.
    pub constant: f64,
    /// The extreme eigenvalue behind the constant.
    pub eigenvalue: f64,
    /// Dimension of the subspace the constant was certified on.
    pub subspace_dim: usize,
    /// Kinematic case: certified dimension of the seminorm kernel
    /// (expected 3). Tensor case: smallest eigenvalue of the div-div
    /// normal matrix, whose positivity certifies surjectivity.
    pub certificate: f64,
}

/// Estimates the discrete Poincaré constant by a generalized eigenproblem.
/// Dense linear algebra throughout: intended for desk-scale meshes.
///
/// Tensor case: the kernel-orthogonality product is taken to be the
/// component-norm product itself (trivially uniformly equivalent), which
/// turns the constant into the quotient-norm constant
/// `lambda_min(DD T^{-1} DD^T)^{-1/2}` — the tightest complement choice.
pub fn estimate_poincare(mesh: &Mesh, k: usize, case_: PoincareCase) -> PoincareEstimate {
    let complex = Complex::new(mesh, k);
    match case_ {
        PoincareCase::SymCurlV => {
            let (a, m, b) = poincare_v_parts(&complex);
            let cb = ConstraintBasis::new(&b);
            let ar = cb.reduce(&a);
            let mr = cb.reduce(&m);
            let lambda = smallest_generalized_eigenvalue(&ar, &mr);
            // Kernel certificate without a full spectrum: the three kernel
            // fields interpolate to independent seminorm-zero vectors, and
            // constrained positivity excludes a fourth direction.
            let mut kernel_ok = lambda > 0.0;
            let mut gram = DMatrix::zeros(3, 3);
            let interp: Vec<DVector<f64>> =
                rt1_basis().iter().map(|w| complex.interpolate_v(w)).collect();
            let a_scale = a.diagonal().amax().max(1e-300);
            for (i, x) in interp.iter().enumerate() {
                if (&a * x).norm() > 1e-9 * a_scale * x.norm() {
                    kernel_ok = false;
                }
                for (j, y) in interp.iter().enumerate() {
                    gram[(i, j)] = x.dot(y);
                }
            }
            if rank_with_tol(&gram, 1e-10) != 3 {
                kernel_ok = false;
            }
            PoincareEstimate {
                case_,
                constant: 1.0 / lambda.max(1e-300).sqrt(),
                eigenvalue: lambda,
                subspace_dim: ar.nrows(),
                certificate: if kernel_ok { 3.0 } else { f64::NAN },
            }
        }
        PoincareCase::DivDivSigma => {
            let d = complex.assemble_dd().to_dense();
            let tinv = complex.tnorm_s_diag().map(|t| 1.0 / t);
            let kmat = &d * DMatrix::from_diagonal(&tinv) * d.transpose();
            let kmat = 0.5 * (&kmat + kmat.transpose());
            let lambda = kmat
                .symmetric_eigen()
                .eigenvalues
                .iter()
                .fold(f64::INFINITY, |a, &b| a.min(b));
            PoincareEstimate {
                case_,
                constant: 1.0 / lambda.max(1e-300).sqrt(),
                eigenvalue: lambda,
                subspace_dim: complex.q_dim(),
                certificate: lambda,
            }
        }
    }
}

/// Seminorm matrix, component-norm matrix, and kernel-orthogonality
/// constraint columns for the kinematic Poincaré estimate.
fn poincare_v_parts(complex: &Complex) -> (DMatrix<f64>, DMatrix<f64>, DMatrix<f64>) {
    let ki = complex.k as i32;
    let n = complex.v_dim();
    let mut a = DMatrix::zeros(n, n);
    for (el, ops) in complex.ops.iter().enumerate() {
        let local =
            ops.ucsym.transpose() * DMatrix::from_diagonal(&ops.tnorm_s) * &ops.ucsym;
        let map = complex.v_map(el);
        scatter_add(&mut a, &map, &map, &local);
    }
    let a = 0.5 * (&a + a.transpose());
    let m = DMatrix::from_diagonal(&complex.tnorm_v_diag());
    let mut b = DMatrix::zeros(n, 3);
    for (j, w) in rt1_basis().iter().enumerate() {
        for (el, ops) in complex.ops.iter().enumerate() {
            let wc = field_coords_v(ops, w, ki);
            let local = ops.pv.transpose() * wc;
            for (i, &g) in complex.v_map(el).iter().enumerate() {
                b[(g, j)] += local[i];
            }
        }
    }
    (a, m, b)
}

// ---------------------------------------------------------------------------
// Hybrid Poincaré–Korn constants.
// ---------------------------------------------------------------------------

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub enum HybridCase {
    /// Full gradient seminorm; kernel = constant fields.
    Grad,
    /// Symmetric-curl seminorm; kernel = translations plus dilation.
    SymCurl,
    /// Symmetric-gradient seminorm; kernel = rigid motions.
    SymGrad,
}

impl HybridCase {
    pub fn anchor(self) -> &'static str {
        match self {
            HybridCase::Grad => "hho-Poin",
            HybridCase::SymCurl => "hho-SymCurl",
            HybridCase::SymGrad => "hho-Korn",
        }
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct HybridEstimate {
    pub case_: HybridCase,
    /// `C` in `|u|_{L2} <= C (seminorm + jumps)^{1/2}` over the kernel
    /// complement.
    pub constant: f64,
    pub eigenvalue: f64,
    pub element_dim: usize,
    pub edge_dim: usize,
}

/// Smallest eigenvalue of the jump-stabilized seminorm against the `L2`
/// mass on hybrid (element + edge) vector fields, with the case's kernel
/// removed by orthogonality constraints. Edge unknowns are eliminated
/// exactly: their block of the quadratic form is a multiple of the identity
/// in edge-orthonormal coordinates.
pub fn hybrid_poincare_korn(mesh: &Mesh, k: usize, case_: HybridCase) -> HybridEstimate {
    let ki = k as i32;
    let nd = dim_p(ki);
    let nt = 2 * nd;
    let ne = k + 1;
    let nelem = mesh.elements.len();
    let n = nelem * nt;

    let bases: Vec<ElementBasis> = (0..nelem)
        .map(|el| ElementBasis::new(mesh, el, ki, 2 * k + 2))
        .collect();
    let edge_bases: Vec<EdgeBasis> = (0..mesh.edges.len())
        .map(|e| EdgeBasis::new(mesh, e, ki, 2 * k + 2))
        .collect();

    let mut s = DMatrix::zeros(n, n);
    // Per edge: incident elements with their diameter weights and trace
    // projection matrices (edge coordinates of the element basis).
    let mut traces: Vec<Vec<(usize, f64, DMatrix<f64>)>> = vec![Vec::new(); mesh.edges.len()];

    for (el, elem) in mesh.elements.iter().enumerate() {
        let basis = &bases[el];
        let w = &basis.quad.weights;
        let [gx, gy] = basis.on_grad_values_at(&basis.quad.points, ki);
        let kxx = weighted_gram(&gx, &gx, w);
        let kxy = weighted_gram(&gx, &gy, w);
        let kyy = weighted_gram(&gy, &gy, w);

        let mut local = DMatrix::zeros(nt, nt);
        match case_ {
            HybridCase::Grad => {
                let stiff = &kxx + &kyy;
                local.view_mut((0, 0), (nd, nd)).copy_from(&stiff);
                local.view_mut((nd, nd), (nd, nd)).copy_from(&stiff);
            }
            HybridCase::SymCurl => {
                local
                    .view_mut((0, 0), (nd, nd))
                    .copy_from(&(&kyy + 0.5 * &kxx));
                local.view_mut((0, nd), (nd, nd)).copy_from(&(-0.5 * &kxy));
                local
                    .view_mut((nd, 0), (nd, nd))
                    .copy_from(&(-0.5 * kxy.transpose()));
                local
                    .view_mut((nd, nd), (nd, nd))
                    .copy_from(&(&kxx + 0.5 * &kyy));
            }
            HybridCase::SymGrad => {
                local
                    .view_mut((0, 0), (nd, nd))
                    .copy_from(&(&kxx + 0.5 * &kyy));
                local
                    .view_mut((0, nd), (nd, nd))
                    .copy_from(&(0.5 * kxy.transpose()));
                local.view_mut((nd, 0), (nd, nd)).copy_from(&(0.5 * &kxy));
                local
                    .view_mut((nd, nd), (nd, nd))
                    .copy_from(&(&kyy + 0.5 * &kxx));
            }
        }
        s.view_mut((el * nt, el * nt), (nt, nt)).copy_from(&local);

        let hinv = 1.0 / elem.h;
        for &e in &elem.edges {
            let eb = &edge_bases[e];
            let vals = basis.on_values_at(&eb.quad.points, ki);
            let mut tb = DMatrix::zeros(ne, nd);
            for i in 0..nd {
                let col = eb.project(&vals.column(i).into_owned(), ki);
                tb.set_column(i, &col);
            }
            let tt = tb.transpose() * &tb;
            for c in 0..2 {
                let off = el * nt + c * nd;
                let mut block = s.view_mut((off, off), (nd, nd));
                block += hinv * &tt;
            }
            traces[e].push((el, hinv, tb));
        }
    }

    // Exact elimination of the single-valued edge unknowns.
    for list in &traces {
        let sigma: f64 = list.iter().map(|(_, hinv, _)| hinv).sum();
        for (el_a, ha, ba) in list {
            for (el_b, hb, bb) in list {
                let cross = (ha * hb / sigma) * (ba.transpose() * bb);
                for c in 0..2 {
                    let mut block =
                        s.view_mut((el_a * nt + c * nd, el_b * nt + c * nd), (nd, nd));
                    block -= &cross;
                }
            }
        }
    }
    let s = 0.5 * (&s + s.transpose());

    let kernel: Vec<VectorField> = match case_ {
        HybridCase::Grad => rt1_basis()[..2].to_vec(),
        HybridCase::SymCurl => rt1_basis().to_vec(),
        HybridCase::SymGrad => rigid_motion_basis().to_vec(),
    };
    let mut b = DMatrix::zeros(n, kernel.len());
    for (j, wfield) in kernel.iter().enumerate() {
        for (el, basis) in bases.iter().enumerate() {
            for c in 0..2 {
                let vals = DVector::from_iterator(
                    basis.quad.len(),
                    basis.quad.points.iter().map(|&x| {
                        let v = wfield.eval(x);
                        if c == 0 {
                            v.x
                        } else {
                            v.y
                        }
                    }),
                );
                let coords = basis.project(&vals, ki);
                b.view_mut((el * nt + c * nd, j), (nd, 1)).copy_from(&coords);
            }
        }
    }

    let cb = ConstraintBasis::new(&b);
    let sr = cb.reduce(&s);
    // The element mass matrix is the identity in orthonormal coordinates,
    // and stays the identity under the orthogonal constraint reduction.
    let lambda = sr
        .symmetric_eigen()
        .eigenvalues
        .iter()
        .fold(f64::INFINITY, |a, &v| a.min(v));
    HybridEstimate {
        case_,
        constant: 1.0 / lambda.max(1e-300).sqrt(),
        eigenvalue: lambda,
        element_dim: n,
        edge_dim: mesh.edges.len() * 2 * ne,
    }
}

fn weighted_gram(a: &DMatrix<f64>, b: &DMatrix<f64>, w: &[f64]) -> DMatrix<f64> {
    let mut out = DMatrix::zeros(a.ncols(), b.ncols());
    for q in 0..w.len() {
        for i in 0..a.ncols() {
            let wa = w[q] * a[(q, i)];
            if wa == 0.0 {
                continue;
            }
            for j in 0..b.ncols() {
                out[(i, j)] += wa * b[(q, j)];
            }
        }
    }
    out
}

/// Value of the jump-stabilized seminorm at the trace-matching hybrid
/// interpolant of a smooth field: a kernel-identification helper.
pub fn hybrid_seminorm_of_field(mesh: &Mesh, k: usize, case_: HybridCase, f: &VectorField) -> f64 {
    let ki = k as i32;
    let nd = dim_p(ki);
    let mut total = 0.0;
    for el in 0..mesh.elements.len() {
        let basis = ElementBasis::new(mesh, el, ki, 2 * k + 2);
        let w = &basis.quad.weights;
        let [gx, gy] = basis.on_grad_values_at(&basis.quad.points, ki);
        let mut coords = DVector::zeros(2 * nd);
        for c in 0..2 {
            let vals = DVector::from_iterator(
                basis.quad.len(),
                basis.quad.points.iter().map(|&x| {
                    let v = f.eval(x);
                    if c == 0 {
                        v.x
                    } else {
                        v.y
                    }
                }),
            );
            coords.rows_mut(c * nd, nd).copy_from(&basis.project(&vals, ki));
        }
        let du = [
            &gx * coords.rows(0, nd),
            &gy * coords.rows(0, nd),
            &gx * coords.rows(nd, nd),
            &gy * coords.rows(nd, nd),
        ];
        for q in 0..w.len() {
            let (u1x, u1y, u2x, u2y) = (du[0][q], du[1][q], du[2][q], du[3][q]);
            let dens = match case_ {
                HybridCase::Grad => u1x * u1x + u1y * u1y + u2x * u2x + u2y * u2y,
                HybridCase::SymCurl => {
                    u1y * u1y + 0.5 * (u2y - u1x) * (u2y - u1x) + u2x * u2x
                }
                HybridCase::SymGrad => {
                    u1x * u1x + 0.5 * (u1y + u2x) * (u1y + u2x) + u2y * u2y
                }
            };
            total += w[q] * dens;
        }
        // Jump terms vanish: the edge unknown is the matching trace of the
        // same smooth field, projected onto the same edge space.
        let elem = &mesh.elements[el];
        for &e in &elem.edges {
            let eb = EdgeBasis::new(mesh, e, ki, 2 * k + 2);
            let vals_elem = basis.on_values_at(&eb.quad.points, ki);
            for c in 0..2 {
                let trace_f = DVector::from_iterator(
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
                let edge_dof = eb.project(&trace_f, ki);
                let elem_trace = &vals_elem * coords.rows(c * nd, nd);
                let elem_dof = eb.project(&elem_trace.clone_owned(), ki);
                total += (edge_dof - elem_dof).norm_squared() / elem.h;
            }
        }
    }
    total
}

// ---------------------------------------------------------------------------
// Degree-of-freedom accounting.
// ---------------------------------------------------------------------------

#[derive(Clone, Debug, Serialize)]
pub struct DofRow {
    pub shape: String,
    pub k: usize,
    /// Attached to one representative cell (vertices, edges, interior).
    pub local_full: usize,
    pub local_reduced: usize,
    pub local_gain_percent: f64,
    /// Assembled over a refined mesh, shared entities counted once.
    pub global_full: usize,
    pub global_reduced: usize,
    pub global_gain_percent: f64,
}

impl DofRow {
    /// The headline line: local counts and gain, e.g. `60 → 48, 20.0%`.
    pub fn headline(&self) -> String {
        format!(
            "{} → {}, {:.1}%",
            self.local_full, self.local_reduced, self.local_gain_percent
        )
    }
}

/// Counts degrees of freedom of both complexes for a built-in cell shape.
/// Returns `None` for an unknown shape name.
pub fn dof_report(shape: &str, k: usize, theta: f64) -> Option<DofRow> {
    use crate::mesh::{family_mesh, hexagon_mesh, square_mesh, triangle_mesh};
    let single = match shape {
        "tri" | "triangle" | "triangles" => triangle_mesh(1),
        "square" | "squares" | "quad" => square_mesh(1),
        "hex" | "hexagon" | "hexagons" => hexagon_mesh(2),
        _ => return None,
    };
    // A representative interior cell: the first with the family's full
    // vertex count (clipped boundary cells of the hexagonal family have
    // fewer).
    let max_nv = single
        .elements
        .iter()
        .map(|e| e.vertices.len())
        .max()
        .unwrap();
    let el = single
        .elements
        .iter()
        .position(|e| e.vertices.len() == max_nv)
        .unwrap();
    let ops = ElementOps::new(&single, el, k);
    let ser = SerendipityOps::new(&single, &ops, theta);
    let local_full = ops.v_dim() + ops.s_dim();
    let local_reduced = ser.v_dim() + ser.s_dim();

    let refined = family_mesh(shape, 4).expect("shape name already validated");
    let complex = Complex::new(&refined, k);
    let sc = SerendipityComplex::new(&complex, theta);
    let global_full = complex.v_dim() + complex.s_dim();
    let global_reduced = sc.v_dim() + sc.s_dim();

    Some(DofRow {
        shape: shape.to_string(),
        k,
        local_full,
        local_reduced,
        local_gain_percent: 100.0 * (local_full - local_reduced) as f64 / local_full as f64,
        global_full,
        global_reduced,
        global_gain_percent: 100.0 * (global_full - global_reduced) as f64 / global_full as f64,
    })
}

// ---------------------------------------------------------------------------
// Convergence studies.
// ---------------------------------------------------------------------------

#[derive(Clone, Debug, Serialize)]
pub struct RateRow {
    pub name: String,
    pub anchor: String,
    /// Mesh sizes, one per level.
    pub h: Vec<f64>,
    /// Dual norms of the functional (conjugate-gradient based, primary).
    pub value: Vec<f64>,
    /// Sampled lower bounds (random normalized test fields).
    pub sampled: Vec<f64>,
    pub slope: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct ConvergenceStudy {
    pub family: String,
    pub k: usize,
    pub divisions: Vec<usize>,
    pub theta: f64,
    pub seed: u64,
    pub rows: Vec<RateRow>,
}

impl ConvergenceStudy {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("study serialization cannot fail")
    }

    /// CSV rate table: one line per (row, level).
    pub fn to_csv(&self) -> String {
        let mut out = String::from("name,anchor,h,value,sampled,slope\n");
        for row in &self.rows {
            for i in 0..row.h.len() {
                out.push_str(&format!(
                    "{},{},{:.6e},{:.6e},{:.6e},{:.4}\n",
                    row.name.replace(',', ";"),
                    row.anchor,
                    row.h[i],
                    row.value[i],
                    row.sampled[i],
                    row.slope
                ));
            }
        }
        out
    }

    pub fn row(&self, anchor: &str, reduced: bool) -> Option<&RateRow> {
        self.rows
            .iter()
            .find(|r| r.anchor == anchor && r.name.starts_with("reduced") == reduced)
    }

    /// Slope checks against the expected consistency orders.
    pub fn rate_checks(&self) -> Vec<Check> {
        let k = self.k as f64;
        let mut checks = Vec::new();
        let expected: [(&str, f64, f64); 4] = [
            ("ErrV:est", k + 1.0, 0.2),
            ("ErrS:est", k, 0.2),
            ("adjoint_divdiv", k, 0.3),
            ("adjoint_symcurl", k, 0.4),
        ];
        for (anchor, target, tol) in expected {
            for reduced in [false, true] {
                if let Some(row) = self.row(anchor, reduced) {
                    checks.push(Check::near(
                        &format!("slope of {}", row.name),
                        anchor,
                        row.slope,
                        target,
                        tol,
                    ));
                }
            }
        }
        // Sampled sups are lower bounds for the dual norms.
        let mut worst = 0.0f64;
        for row in &self.rows {
            for i in 0..row.value.len() {
                if row.value[i] > 0.0 {
                    worst = worst.max(row.sampled[i] / row.value[i] - 1.0);
                }
            }
        }
        checks.push(Check::below(
            "sampled sups stay below the dual norms",
            "dual.norm.bound",
            worst,
            1e-6,
        ));
        checks
    }
}

/// The manufactured clamped deflection, its Hessian, and a generic smooth
/// kinematic field.
fn manufactured_fields() -> (ScalarField, SymTensorField, VectorField) {
    let u = ScalarField::from_poly(biquartic_bubble());
    let hess = SymTensorField::hessian_of(&u);
    let w = VectorField::new(
        ScalarField::sine_product(1.0, 1.0),
        ScalarField::sine_product(2.0, 1.0),
    );
    (u, hess, w)
}

/// Dual norm `sqrt(r^T G^{-1} r)` via Jacobi-preconditioned CG.
fn dual_norm(g: &Csr, diag: &DVector<f64>, r: &DVector<f64>) -> f64 {
    if r.norm() == 0.0 {
        return 0.0;
    }
    let sol = cg_solve(&|x| g.matvec(x), diag, r, &[], 1e-11, 4000);
    sol.x.dot(r).max(0.0).sqrt()
}

/// Sampled sup of `|r . v| / |v|_G` over random unit draws.
fn sampled_sup(g: &Csr, r: &DVector<f64>, rng: &mut ChaCha8Rng, draws: usize) -> f64 {
    let mut best = 0.0f64;
    for _ in 0..draws {
        let v = sample_unit(rng, r.len());
        let den = g.matvec(&v).dot(&v).max(0.0).sqrt();
        if den > 0.0 {
            best = best.max((r.dot(&v)).abs() / den);
        }
    }
    best
}

/// Dual norm of `r` over the range of an operator `U` in the norm induced
/// by `G`: `sup_v |r.v| / |U v|_G`, with `r` in the range of `U^T`. `a` is
/// the assembled normal matrix `U^T G U` and `kernel` spans its null space.
fn range_dual_norm(a: &Csr, r: &DVector<f64>, kernel: &[DVector<f64>]) -> f64 {
    if r.norm() == 0.0 {
        return 0.0;
    }
    let diag = a.diagonal();
    let sol = cg_solve(&|x| a.matvec(x), &diag, r, kernel, 1e-11, 4000);
    sol.x.dot(r).max(0.0).sqrt()
}

/// Assembles `sum_el L^T (U_loc^T G_loc U_loc) L` for per-element operator
/// and product matrices: the normal matrix of the operator in the product.
fn assemble_normal_matrix(
    n_rows: usize,
    maps: &[Vec<usize>],
    locals: impl Iterator<Item = DMatrix<f64>>,
) -> Csr {
    let mut coo = Coo::new(n_rows, n_rows);
    for (el, local) in locals.enumerate() {
        coo.push_block(&maps[el], &maps[el], &local);
    }
    coo.to_csr()
}

/// Consistency and adjoint-consistency functionals of the manufactured
/// solutions across a refinement sequence, with dual norms, sampled sups,
/// and fitted slopes. Includes the serendipity variants (through the
/// extension operators).
pub fn convergence_study(
    family: &str,
    k: usize,
    divisions: &[usize],
    theta: f64,
    seed: u64,
    draws: usize,
) -> ConvergenceStudy {
    use crate::mesh::family_mesh;
    let (u, hess, w) = manufactured_fields();
    let vrot_hess = vrot_field(&hess);

    let mut rows: Vec<RateRow> = Vec::new();
    let push = |rows: &mut Vec<RateRow>, name: &str, anchor: &str, h: f64, v: f64, s: f64| {
        if let Some(row) = rows.iter_mut().find(|r| r.name == name) {
            row.h.push(h);
            row.value.push(v);
            row.sampled.push(s);
        } else {
            rows.push(RateRow {
                name: name.to_string(),
                anchor: anchor.to_string(),
                h: vec![h],
                value: vec![v],
                sampled: vec![s],
                slope: 0.0,
            });
        }
    };

    for &n in divisions {
        let mesh = family_mesh(family, n).expect("unknown family");
        let h = mesh.mesh_size();
        let complex = Complex::new(&mesh, k);
        let ser = SerendipityComplex::new(&complex, theta);
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ (n as u64));

        let gv = complex.assemble_gram_v();
        let gs = complex.assemble_gram_s();
        let dgv = gv.diagonal();
        let dgs = gs.diagonal();
        let ucsym = complex.assemble_ucsym();
        let dd = complex.assemble_dd();

        let v_maps: Vec<Vec<usize>> =
            (0..complex.ops.len()).map(|el| complex.v_map(el)).collect();

        // Kinematic consistency: sum_T (w, P_V v_T) - (I_V w, v_h).
        let f_pv = assemble_pv_pairing(&complex, &w);
        let ivw = complex.interpolate_v(&w);
        let r_v = &f_pv - gv.matvec(&ivw);
        push(
            &mut rows,
            "kinematic consistency",
            "ErrV:est",
            h,
            dual_norm(&gv, &dgv, &r_v),
            sampled_sup(&gv, &r_v, &mut rng, draws),
        );

        // Tensor consistency: sum_T (hess : P_Sigma tau_T) - (I_S hess, tau).
        let f_ps = assemble_psigma_pairing(&complex, &hess);
        let ish = complex.interpolate_s(&hess);
        let r_s = &f_ps - gs.matvec(&ish);
        push(
            &mut rows,
            "tensor consistency",
            "ErrS:est",
            h,
            dual_norm(&gs, &dgs, &r_s),
            sampled_sup(&gs, &r_s, &mut rng, draws),
        );

        // Adjoint consistency of the sym-curl: (I_S hess, uCsym v) plus the
        // exact pairing with the rotated divergence (zero for a Hessian).
        let z = gs.matvec(&ish);
        let r_sc = ucsym.matvec_transpose(&z) + assemble_pv_pairing(&complex, &vrot_hess);
        let a_uc = assemble_normal_matrix(
            complex.v_dim(),
            &v_maps,
            complex
                .ops
                .iter()
                .map(|ops| ops.ucsym.transpose() * &ops.gram_s * &ops.ucsym),
        );
        let kernel: Vec<DVector<f64>> =
            rt1_basis().iter().map(|f| complex.interpolate_v(f)).collect();
        let exact_sc = range_dual_norm(&a_uc, &r_sc, &kernel);
        let mut samp_sc = 0.0f64;
        for _ in 0..draws {
            let v = sample_unit(&mut rng, complex.v_dim());
            let y = ucsym.matvec(&v);
            let den = gs.matvec(&y).dot(&y).max(0.0).sqrt();
            if den > 1e-13 {
                samp_sc = samp_sc.max((r_sc.dot(&v)).abs() / den);
            }
        }
        push(
            &mut rows,
            "sym-curl adjoint consistency",
            "adjoint_symcurl",
            h,
            exact_sc,
            samp_sc,
        );

        // Adjoint consistency of the div-div: (u, DD tau) - sum_T (hess u :
        // P_Sigma tau_T) with clamped u.
        let qc = assemble_q_coords(&complex, &u);
        let r_dd = dd.matvec_transpose(&qc) - &f_ps;
        push(
            &mut rows,
            "div-div adjoint consistency",
            "adjoint_divdiv",
            h,
            dual_norm(&gs, &dgs, &r_dd),
            sampled_sup(&gs, &r_dd, &mut rng, draws),
        );

        // Serendipity variants, through the extension operators.
        let sgv = ser.assemble_gram_v();
        let sgs = ser.assemble_gram_s();
        let sdgv = sgv.diagonal();
        let sdgs = sgs.diagonal();
        let sucsym = ser.assemble_sucsym();
        let sdd = ser.assemble_sdd();
        let sv_maps: Vec<Vec<usize>> = (0..ser.ops.len()).map(|el| ser.v_map(el)).collect();

        let sr_v = extend_v_transpose(&ser, &f_pv) - sgv.matvec(&ser.interpolate_v(&w));
        push(
            &mut rows,
            "reduced kinematic consistency",
            "ErrV:est",
            h,
            dual_norm(&sgv, &sdgv, &sr_v),
            sampled_sup(&sgv, &sr_v, &mut rng, draws),
        );

        let sish = ser.interpolate_s(&hess);
        let sr_s = extend_s_transpose(&ser, &f_ps) - sgs.matvec(&sish);
        push(
            &mut rows,
            "reduced tensor consistency",
            "ErrS:est",
            h,
            dual_norm(&sgs, &sdgs, &sr_s),
            sampled_sup(&sgs, &sr_s, &mut rng, draws),
        );

        let sz = sgs.matvec(&sish);
        let sr_sc =
            sucsym.matvec_transpose(&sz) + extend_v_transpose(&ser, &assemble_pv_pairing(&complex, &vrot_hess));
        let sa_uc = assemble_normal_matrix(
            ser.v_dim(),
            &sv_maps,
            ser.ops
                .iter()
                .map(|sops| sops.sucsym.transpose() * &sops.gram_s * &sops.sucsym),
        );
        let skernel: Vec<DVector<f64>> = kernel.iter().map(|x| ser.reduce_v(x)).collect();
        let sexact_sc = range_dual_norm(&sa_uc, &sr_sc, &skernel);
        let mut ssamp_sc = 0.0f64;
        for _ in 0..draws {
            let v = sample_unit(&mut rng, ser.v_dim());
            let y = sucsym.matvec(&v);
            let den = sgs.matvec(&y).dot(&y).max(0.0).sqrt();
            if den > 1e-13 {
                ssamp_sc = ssamp_sc.max((sr_sc.dot(&v)).abs() / den);
            }
        }
        push(
            &mut rows,
            "reduced sym-curl adjoint consistency",
            "adjoint_symcurl",
            h,
            sexact_sc,
            ssamp_sc,
        );

        let sr_dd = sdd.matvec_transpose(&qc) - extend_s_transpose(&ser, &f_ps);
        push(
            &mut rows,
            "reduced div-div adjoint consistency",
            "adjoint_divdiv",
            h,
            dual_norm(&sgs, &sdgs, &sr_dd),
            sampled_sup(&sgs, &sr_dd, &mut rng, draws),
        );
    }

    for row in &mut rows {
        let pts: Vec<(f64, f64)> = row
            .h
            .iter()
            .zip(&row.value)
            .filter(|(_, &v)| v > 0.0)
            .map(|(&h, &v)| (h.ln(), v.ln()))
            .collect();
        row.slope = if pts.len() >= 2 {
            linear_fit_slope(&pts)
        } else {
            f64::NAN
        };
    }

    ConvergenceStudy {
        family: family.to_string(),
        k,
        divisions: divisions.to_vec(),
        theta,
        seed,
        rows,
    }
}

/// Residuals of the consistency functionals on polynomial data of native
/// degree, which they must annihilate: kinematic data of degree `k`, tensor
/// data of degree `k - 1`.
pub fn polynomial_zero_checks(mesh: &Mesh, k: usize) -> Vec<Check> {
    let complex = Complex::new(mesh, k);
    let gv = complex.assemble_gram_v();
    let gs = complex.assemble_gram_s();

    // Fixed generic polynomial data of the right degrees.
    let wx = RawPoly::monomial(1, 0, 0.75)
        .add(&RawPoly::monomial(0, 2, -0.5))
        .add(&RawPoly::monomial(2, 1, 0.25));
    let wy = RawPoly::monomial(0, 1, -1.25)
        .add(&RawPoly::monomial(1, 1, 0.5))
        .add(&RawPoly::monomial(3, 0, 0.125));
    let w = VectorField::new(ScalarField::from_poly(wx), ScalarField::from_poly(wy));

    let txx = RawPoly::monomial(2, 0, 1.0).add(&RawPoly::monomial(0, 1, 0.5));
    let txy = RawPoly::monomial(1, 1, -0.75).add(&RawPoly::constant(0.25));
    let tyy = RawPoly::monomial(0, 2, 0.5).add(&RawPoly::monomial(1, 0, -1.0));
    let tau = SymTensorField::new(
        ScalarField::from_poly(txx),
        ScalarField::from_poly(txy),
        ScalarField::from_poly(tyy),
    );

    let f_pv = assemble_pv_pairing(&complex, &w);
    let ivw = complex.interpolate_v(&w);
    let lhs = gv.matvec(&ivw);
    let r_v = (&f_pv - &lhs).norm() / lhs.norm().max(1e-300);

    let f_ps = assemble_psigma_pairing(&complex, &tau);
    let ist = complex.interpolate_s(&tau);
    let lhs = gs.matvec(&ist);
    let r_s = (&f_ps - &lhs).norm() / lhs.norm().max(1e-300);

    vec![
        Check::below(
            "kinematic consistency functional annihilates degree-k data",
            "ErrV:est",
            r_v,
            1e-10,
        ),
        Check::below(
            "tensor consistency functional annihilates degree-(k-1) data",
            "ErrS:est",
            r_s,
            1e-10,
        ),
    ]
}

// ---------------------------------------------------------------------------
// Mixed plate solve.
// ---------------------------------------------------------------------------

#[derive(Clone, Debug, Serialize)]
pub struct PlateResult {
    pub h: f64,
    /// Product-norm error of the tensor unknown against the interpolated
    /// manufactured moment tensor.
    pub sigma_error: f64,
    /// Coordinate-norm error of the scalar unknown against the projected
    /// manufactured deflection.
    pub u_error: f64,
    /// Relative algebraic residual of the saddle solve.
    pub residual: f64,
}

/// Solves the mixed clamped-plate system with the manufactured deflection
/// and reports errors. The scalar unknown of this sign convention is the
/// negative deflection. Dense LU, intended for desk-scale meshes.
pub fn solve_plate(mesh: &Mesh, k: usize) -> PlateResult {
    let complex = Complex::new(mesh, k);
    let s_dim = complex.s_dim();
    let q_dim = complex.q_dim();

    let u_raw = biquartic_bubble();
    let f_raw = u_raw
        .partial(4, 0)
        .add(&u_raw.partial(2, 2).scale(2.0))
        .add(&u_raw.partial(0, 4));
    let f = ScalarField::from_poly(f_raw);
    let u = ScalarField::from_poly(u_raw);
    let hess = SymTensorField::hessian_of(&u);

    let g = complex.assemble_gram_s().to_dense();
    let d = complex.assemble_dd().to_dense();
    let n = s_dim + q_dim;
    let mut m = DMatrix::zeros(n, n);
    m.view_mut((0, 0), (s_dim, s_dim)).copy_from(&g);
    m.view_mut((0, s_dim), (s_dim, q_dim)).copy_from(&d.transpose());
    m.view_mut((s_dim, 0), (q_dim, s_dim)).copy_from(&d);

    let mut rhs = DVector::zeros(n);
    rhs.rows_mut(s_dim, q_dim)
        .copy_from(&assemble_q_coords(&complex, &f));

    let lu = m.clone().lu();
    let sol = lu.solve(&rhs).expect("plate saddle system must be invertible");
    let residual = (&m * &sol - &rhs).norm() / rhs.norm().max(1e-300);

    let sigma_h = sol.rows(0, s_dim).into_owned();
    let u_h = sol.rows(s_dim, q_dim).into_owned();
    let sigma_star = complex.interpolate_s(&hess);
    let err_s = &sigma_h - &sigma_star;
    let gs = complex.assemble_gram_s();
    let sigma_error = gs.matvec(&err_s).dot(&err_s).max(0.0).sqrt();
    let u_star = -assemble_q_coords(&complex, &u);
    let u_error = (&u_h - &u_star).norm();

    PlateResult { h: mesh.mesh_size(), sigma_error, u_error, residual }
}

/// Plate solves across a refinement sequence with fitted error slopes.
pub fn plate_study(family: &str, k: usize, divisions: &[usize]) -> (Vec<PlateResult>, f64, f64) {
    use crate::mesh::family_mesh;
    let results: Vec<PlateResult> = divisions
        .iter()
        .map(|&n| solve_plate(&family_mesh(family, n).expect("unknown family"), k))
        .collect();
    let pts_s: Vec<(f64, f64)> = results
        .iter()
        .filter(|r| r.sigma_error > 0.0)
        .map(|r| (r.h.ln(), r.sigma_error.ln()))
        .collect();
    let pts_u: Vec<(f64, f64)> = results
        .iter()
        .filter(|r| r.u_error > 0.0)
        .map(|r| (r.h.ln(), r.u_error.ln()))
        .collect();
    let slope_s = if pts_s.len() >= 2 { linear_fit_slope(&pts_s) } else { f64::NAN };
    let slope_u = if pts_u.len() >= 2 { linear_fit_slope(&pts_u) } else { f64::NAN };
    (results, slope_s, slope_u)
}

// ---------------------------------------------------------------------------
// Refinement-stability sweeps.
// ---------------------------------------------------------------------------

#[derive(Clone, Debug, Serialize)]
pub struct SeriesRow {
    pub name: String,
    pub anchor: String,
    /// One value per refinement level.
    pub values: Vec<f64>,
    /// `(max - min) / min` across the levels.
    pub variation: f64,
    /// Largest single-step relative increase across the levels (zero for a
    /// non-increasing series).
    pub growth: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct StabilitySweep {
    pub family: String,
    pub k: usize,
    pub theta: f64,
    pub divisions: Vec<usize>,
    pub series: Vec<SeriesRow>,
}

impl StabilitySweep {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("sweep serialization cannot fail")
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("name,anchor,level,value,variation,growth\n");
        for row in &self.series {
            for (i, v) in row.values.iter().enumerate() {
                out.push_str(&format!(
                    "{},{},{},{:.6e},{:.4},{:.4}\n",
                    row.name.replace(',', ";"),
                    row.anchor,
                    i,
                    v,
                    row.variation,
                    row.growth
                ));
            }
        }
        out
    }

    /// One bounded-variation check per tracked constant. The Poincaré
    /// constants certify an upper bound, so their failure mode under
    /// refinement is growth; they are measured by the largest single-step
    /// increase. Every other series is a two-sided stability ratio.
    pub fn checks(&self, max_variation: f64) -> Vec<Check> {
        self.series
            .iter()
            .map(|row| {
                if row.anchor.starts_with("poincare") {
                    Check::below(
                        &format!("refinement growth of {}", row.name),
                        &row.anchor,
                        row.growth,
                        max_variation,
                    )
                } else {
                    Check::below(
                        &format!("refinement stability of {}", row.name),
                        &row.anchor,
                        row.variation,
                        max_variation,
                    )
                }
            })
            .collect()
    }
}

/// Tracks every uniformity constant across a refinement sequence:
/// norm-equivalence ratios (full and reduced), local saddle inf-sup,
/// Poincaré constants of both operators, hybrid Poincaré–Korn constants,
/// and the extension continuity bound. Dense eigenproblems throughout.
pub fn stability_sweep(family: &str, k: usize, theta: f64, divisions: &[usize]) -> StabilitySweep {
    use crate::mesh::family_mesh;
    let mut series: Vec<SeriesRow> = Vec::new();
    let record = |series: &mut Vec<SeriesRow>, name: &str, anchor: &str, value: f64| {
        if let Some(row) = series.iter_mut().find(|r| r.name == name) {
            row.values.push(value);
        } else {
            series.push(SeriesRow {
                name: name.to_string(),
                anchor: anchor.to_string(),
                values: vec![value],
                variation: 0.0,
                growth: 0.0,
            });
        }
    };

    for &n in divisions {
        let mesh = family_mesh(family, n).expect("unknown family");
        let complex = Complex::new(&mesh, k);
        let ser = SerendipityComplex::new(&complex, theta);

        // Norm equivalence: extreme generalized eigenvalues of the product
        // against the diagonal component norm.
        let gv = complex.assemble_gram_v().to_dense();
        let mv = DMatrix::from_diagonal(&complex.tnorm_v_diag());
        let lo = smallest_generalized_eigenvalue(&gv, &mv);
        let hi = largest_generalized_eigenvalue(&gv, &mv);
        record(
            &mut series,
            "kinematic norm-equivalence ratio",
            "norm.equivalence",
            hi / lo,
        );

        let gs = complex.assemble_gram_s().to_dense();
        let ms = DMatrix::from_diagonal(&complex.tnorm_s_diag());
        let lo = smallest_generalized_eigenvalue(&gs, &ms);
        let hi = largest_generalized_eigenvalue(&gs, &ms);
        record(
            &mut series,
            "tensor norm-equivalence ratio",
            "norm.equivalence",
            hi / lo,
        );

        let sgv = ser.assemble_gram_v().to_dense();
        let smv = DMatrix::from_diagonal(&ser.tnorm_v_diag());
        let lo = smallest_generalized_eigenvalue(&sgv, &smv);
        let hi = largest_generalized_eigenvalue(&sgv, &smv);
        record(
            &mut series,
            "reduced kinematic norm-equivalence ratio",
            "norm.equiv.sVT",
            hi / lo,
        );

        record(
            &mut series,
            "local saddle inf-sup",
            "infsup.AT",
            ser.min_inf_sup(),
        );

        let pv = estimate_poincare(&mesh, k, PoincareCase::SymCurlV);
        record(&mut series, "kinematic Poincaré constant", "poincare.V", pv.constant);
        let ps = estimate_poincare(&mesh, k, PoincareCase::DivDivSigma);
        record(&mut series, "tensor Poincaré constant", "poincare.Sigma", ps.constant);

        for case_ in [HybridCase::Grad, HybridCase::SymCurl, HybridCase::SymGrad] {
            let est = hybrid_poincare_korn(&mesh, k, case_);
            record(
                &mut series,
                &format!("hybrid constant ({:?})", case_),
                case_.anchor(),
                est.constant,
            );
        }

        // Extension continuity in the component norms, worst element.
        let mut worst = 0.0f64;
        for (el, sops) in ser.ops.iter().enumerate() {
            let ops = &complex.ops[el];
            let full = DMatrix::from_diagonal(&ops.tnorm_v);
            let red = DMatrix::from_diagonal(&sops.tnorm_v);
            let a = sops.e_v.transpose() * full * &sops.e_v;
            let a = 0.5 * (&a + a.transpose());
            worst = worst.max(largest_generalized_eigenvalue(&a, &red).sqrt());
        }
        record(&mut series, "extension continuity bound", "EVT:continuity", worst);
    }

    for row in &mut series {
        let lo = row.values.iter().copied().fold(f64::INFINITY, f64::min);
        let hi = row.values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        row.variation = if lo > 0.0 { (hi - lo) / lo } else { f64::INFINITY };
        row.growth = row
            .values
            .windows(2)
            .map(|w| if w[0] > 0.0 { (w[1] - w[0]) / w[0] } else { f64::INFINITY })
            .fold(0.0, f64::max);
    }

    StabilitySweep {
        family: family.to_string(),
        k,
        theta,
        divisions: divisions.to_vec(),
        series,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::{hexagon_mesh, square_mesh, triangle_mesh, DEFAULT_THETA};

    #[test]
    fn report_serializes_and_roundtrips_through_files() {
        let mut report = Report::new("demo", "square", 3, DEFAULT_THETA, 7);
        report.push(Check::below("small residual", "demo.anchor", 1e-14, 1e-10));
        report.push(Check::near("slope", "demo.rate", 3.02, 3.0, 0.2));
        assert!(report.pass());
        assert!(report.failures().is_empty());

        let json = report.to_json();
        assert!(json.contains("demo.anchor"));
        let parsed: serde_json::Value = serde_json::from_str(&json).unwrap();
        assert_eq!(parsed["checks"].as_array().unwrap().len(), 2);

        let csv = report.to_csv();
        assert_eq!(csv.lines().count(), 3);
        assert!(csv.starts_with(Report::csv_header()));

        let dir = std::env::temp_dir().join(format!("divdiv-report-{}", std::process::id()));
        std::fs::create_dir_all(&dir).unwrap();
        let path = dir.join("report.json");
        report.write_json(&path).unwrap();
        let back = std::fs::read_to_string(&path).unwrap();
        assert_eq!(back, json);
        assert!(!dir.join("report.json.tmp").exists());
        std::fs::remove_dir_all(&dir).unwrap();
    }

    #[test]
    fn failed_checks_flip_the_report() {
        let mut report = Report::new("demo", "square", 3, DEFAULT_THETA, 7);
        report.push(Check::below("too big", "demo", 1.0, 1e-10));
        assert!(!report.pass());
        assert_eq!(report.failures().len(), 1);
        assert!(!Check::at_least("too small", "demo", 0.0, 1e-10).pass);
        assert!(!Check::equals("off by one", "demo", 2, 3).pass);
        assert!(!Check::near("far", "demo", 5.0, 3.0, 0.2).pass);
    }

    #[test]
    fn identity_suite_full_passes_on_a_square_mesh() {
        let mesh = square_mesh(2);
        let report = run_identity_suite(&mesh, "square", 3, SuiteMode::Full, DEFAULT_THETA, 42, 10);
        for c in &report.checks {
            assert!(c.pass, "{}: {} !({})", c.name, c.value, c.criterion);
        }
    }

    #[test]
    fn identity_suite_serendipity_passes_on_a_square_mesh() {
        let mesh = square_mesh(2);
        let report =
            run_identity_suite(&mesh, "square", 3, SuiteMode::Serendipity, DEFAULT_THETA, 42, 10);
        for c in &report.checks {
            assert!(c.pass, "{}: {} !({})", c.name, c.value, c.criterion);
        }
    }

    #[test]
    fn identity_suite_cross_passes_on_a_square_mesh() {
        let mesh = square_mesh(2);
        let report =
            run_identity_suite(&mesh, "square", 3, SuiteMode::Cross, DEFAULT_THETA, 42, 10);
        for c in &report.checks {
            assert!(c.pass, "{}: {} !({})", c.name, c.value, c.criterion);
        }
    }

    #[test]
    fn identity_suites_are_deterministic_under_a_seed() {
        let mesh = triangle_mesh(2);
        let a = run_identity_suite(&mesh, "tri", 3, SuiteMode::Cross, DEFAULT_THETA, 11, 6);
        let b = run_identity_suite(&mesh, "tri", 3, SuiteMode::Cross, DEFAULT_THETA, 11, 6);
        for (x, y) in a.checks.iter().zip(&b.checks) {
            assert_eq!(x.value.to_bits(), y.value.to_bits(), "{}", x.name);
        }
    }

    #[test]
    fn cohomology_suite_passes_on_small_meshes() {
        for (mesh, family) in [
            (triangle_mesh(2), "tri"),
            (square_mesh(2), "square"),
            (hexagon_mesh(2), "hex"),
        ] {
            let report = run_cohomology_suite(&mesh, family, 3, DEFAULT_THETA);
            for c in &report.checks {
                assert!(c.pass, "{family}: {}: {}", c.name, c.value);
            }
        }
    }

    #[test]
    fn poincare_constants_are_positive_and_certified() {
        let mesh = square_mesh(2);
        let pv = estimate_poincare(&mesh, 3, PoincareCase::SymCurlV);
        assert!(pv.constant.is_finite() && pv.constant > 0.0);
        assert!(pv.eigenvalue > 0.0, "constrained eigenvalue {}", pv.eigenvalue);
        // The unconstrained pencil must have exactly the polynomial kernel.
        assert_eq!(pv.certificate as usize, 3);

        let ps = estimate_poincare(&mesh, 3, PoincareCase::DivDivSigma);
        assert!(ps.constant.is_finite() && ps.constant > 0.0);
        // Surjectivity margin: smallest eigenvalue of the normal matrix.
        assert!(ps.certificate > 0.0, "surjectivity margin {}", ps.certificate);
    }

    #[test]
    fn poincare_constraints_reject_the_kernel() {
        let mesh = square_mesh(2);
        let complex = Complex::new(&mesh, 3);
        let (a, _, b) = poincare_v_parts(&complex);
        for w in rt1_basis().iter() {
            let x = complex.interpolate_v(w);
            assert!((&a * &x).norm() <= 1e-10 * x.norm(), "kernel has zero seminorm");
            let c = b.transpose() * &x;
            assert!(c.norm() > 1e-8, "constraints must see the kernel field");
        }
    }

    #[test]
    fn hybrid_seminorms_vanish_exactly_on_their_kernels() {
        let mesh = square_mesh(2);
        for (case_, fields) in [
            (HybridCase::Grad, rt1_basis()[..2].to_vec()),
            (HybridCase::SymCurl, rt1_basis().to_vec()),
            (HybridCase::SymGrad, rigid_motion_basis().to_vec()),
        ] {
            for f in &fields {
                let val = hybrid_seminorm_of_field(&mesh, 3, case_, f);
                assert!(val < 1e-20, "{case_:?}: seminorm {val}");
            }
        }
        // And not on a generic field.
        let f = VectorField::new(
            ScalarField::from_poly(RawPoly::monomial(2, 0, 1.0)),
            ScalarField::from_poly(RawPoly::monomial(0, 2, 1.0)),
        );
        assert!(hybrid_seminorm_of_field(&mesh, 3, HybridCase::SymGrad, &f) > 1e-3);
    }

    #[test]
    fn hybrid_constants_are_positive_and_finite() {
        let mesh = square_mesh(2);
        for case_ in [HybridCase::Grad, HybridCase::SymCurl, HybridCase::SymGrad] {
            let est = hybrid_poincare_korn(&mesh, 3, case_);
            assert!(est.eigenvalue > 0.0, "{case_:?}: eigenvalue {}", est.eigenvalue);
            assert!(est.constant.is_finite() && est.constant > 0.0);
        }
    }

    #[test]
    fn dof_report_matches_the_counted_tables() {
        let tri = dof_report("tri", 3, DEFAULT_THETA).unwrap();
        assert_eq!((tri.local_full, tri.local_reduced), (48, 40));
        assert_eq!(tri.headline(), "48 → 40, 16.7%");

        let sq = dof_report("square", 3, DEFAULT_THETA).unwrap();
        assert_eq!((sq.local_full, sq.local_reduced), (60, 48));
        assert_eq!(sq.headline(), "60 → 48, 20.0%");
        assert!(sq.global_reduced < sq.global_full);

        assert!(dof_report("pentagon", 3, DEFAULT_THETA).is_none());
    }

    #[test]
    fn local_dof_gains_stay_in_the_claimed_bracket() {
        for shape in ["tri", "square", "hex"] {
            for k in [3, 4, 5] {
                let row = dof_report(shape, k, DEFAULT_THETA).unwrap();
                assert!(
                    (13.0..=27.0).contains(&row.local_gain_percent),
                    "{shape} k={k}: {:.1}%",
                    row.local_gain_percent
                );
            }
        }
    }

    #[test]
    fn consistency_functionals_annihilate_polynomial_data() {
        let mesh = square_mesh(2);
        for c in polynomial_zero_checks(&mesh, 3) {
            assert!(c.pass, "{}: {}", c.name, c.value);
        }
    }

    #[test]
    #[ignore]
    fn probe_stability_sweep_at_acceptance_scale() {
        let t = std::time::Instant::now();
        let sweep = stability_sweep("square", 3, DEFAULT_THETA, &[3, 6, 12]);
        println!("sweep 3/6/12 ({:?}):", t.elapsed());
        for row in &sweep.series {
            println!(
                "  {:45} variation {:.4} growth {:.4} values {:?}",
                row.name, row.variation, row.growth, row.values
            );
        }
        for c in sweep.checks(0.25) {
            println!(
                "  [{}] {}: {:.4} ({})",
                if c.pass { "PASS" } else { "FAIL" },
                c.name,
                c.value,
                c.criterion
            );
            assert!(c.pass, "{}", c.name);
        }
    }

    #[test]
    fn stability_sweep_reports_variation_and_growth() {
        let sweep = stability_sweep("square", 3, DEFAULT_THETA, &[2, 3]);
        assert_eq!(sweep.series.len(), 10);
        for row in &sweep.series {
            assert_eq!(row.values.len(), 2);
            assert!(row.values.iter().all(|v| v.is_finite() && *v > 0.0), "{}", row.name);
            assert!(row.growth <= row.variation + 1e-12);
        }
        // Decreasing series register no growth.
        let pv = sweep.series.iter().find(|r| r.anchor == "poincare.V").unwrap();
        assert!(pv.values[1] < pv.values[0]);
        assert_eq!(pv.growth, 0.0);
        let csv = sweep.to_csv();
        assert!(csv.lines().count() == 1 + 2 * sweep.series.len());
        let checks = sweep.checks(0.25);
        assert_eq!(checks.len(), 10);
        assert!(checks.iter().filter(|c| c.name.starts_with("refinement growth")).count() == 2);
    }

    #[test]
    fn plate_errors_shrink_under_refinement() {
        let a = solve_plate(&square_mesh(2), 3);
        let b = solve_plate(&square_mesh(4), 3);
        assert!(a.residual < 1e-9 && b.residual < 1e-9);
        assert!(b.sigma_error < a.sigma_error, "{} !< {}", b.sigma_error, a.sigma_error);
        assert!(b.u_error < a.u_error, "{} !< {}", b.u_error, a.u_error);
    }
}
