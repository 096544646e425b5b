//! Polynomial subspaces entering the discrete complexes, with orthonormal
//! bases and invertible local isomorphisms.
//!
//! All subspaces are represented by their stacked orthonormal coordinates
//! inside a containing full polynomial space, so projections and embeddings
//! are small dense matrix products. Symmetric-tensor families are
//! orthonormal with respect to the Frobenius `L2` product (which doubles
//! the off-diagonal component).

use nalgebra::{DMatrix, DVector};

use super::basis::{ElementBasis, ValueSet};
use super::{dim_p, Codomain, DiffOp, Polynomial};

/// An orthonormal basis of a polynomial subspace on one element.
pub struct SubspaceBasis {
    pub codomain: Codomain,
    /// Members live in `(P^containing_degree)^c`.
    pub containing_degree: i32,
    /// Stacked orthonormal coordinates of the members, one column each;
    /// columns are orthonormal for the weighted (Frobenius) product.
    pub coords: DMatrix<f64>,
}

/// Componentwise Frobenius weights for stacked coordinates.
fn weight_vector(codomain: Codomain, scalar_dim: usize) -> DVector<f64> {
    let ncomp = codomain.components();
    let mut w = DVector::zeros(ncomp * scalar_dim);
    for c in 0..ncomp {
        let cw = codomain.component_weight(c);
        for i in 0..scalar_dim {
            w[c * scalar_dim + i] = cw;
        }
    }
    w
}

impl SubspaceBasis {
    pub fn len(&self) -> usize {
        self.coords.ncols()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    fn from_raw_coords(
        codomain: Codomain,
        containing_degree: i32,
        raw: DMatrix<f64>,
        drop_tol: Option<f64>,
    ) -> Self {
        let scalar_dim = raw.nrows() / codomain.components();
        let w = weight_vector(codomain, scalar_dim);
        let mut b = raw;
        for j in 0..b.ncols() {
            for i in 0..b.nrows() {
                b[(i, j)] *= w[i].sqrt();
            }
        }
        let q = match drop_tol {
            None => {
                let n = b.ncols();
                if n == 0 {
                    b
                } else {
                    let qr = b.qr();
                    qr.q().columns(0, n).into_owned()
                }
            }
            Some(tol) => rank_revealing_gs(b, tol),
        };
        let mut coords = q;
        for j in 0..coords.ncols() {
            for i in 0..coords.nrows() {
                coords[(i, j)] /= w[i].sqrt();
            }
        }
        SubspaceBasis { codomain, containing_degree, coords }
    }

    fn from_polys(
        basis: &ElementBasis,
        polys: &[Polynomial],
        containing_degree: i32,
        codomain: Codomain,
        drop_tol: Option<f64>,
    ) -> Self {
        let d = basis.dim(containing_degree);
        let mut raw = DMatrix::zeros(d * codomain.components(), polys.len());
        for (j, p) in polys.iter().enumerate() {
            assert_eq!(p.codomain, codomain);
            raw.set_column(j, &basis.on_from_poly(p, containing_degree));
        }
        Self::from_raw_coords(codomain, containing_degree, raw, drop_tol)
    }

    /// The `j`-th member as a polynomial in monomial coordinates.
    pub fn member(&self, basis: &ElementBasis, j: usize) -> Polynomial {
        basis.poly_from_on(
            &self.coords.column(j).into_owned(),
            self.containing_degree,
            self.codomain,
        )
    }

    /// Values of all members at the element quadrature points.
    pub fn values(&self, basis: &ElementBasis) -> ValueSet {
        ValueSet::from_on_coords(basis, &self.coords, self.containing_degree, self.codomain)
    }

    /// Stacked orthonormal coordinates of a member combination.
    pub fn embed(&self, coeffs: &DVector<f64>) -> DVector<f64> {
        &self.coords * coeffs
    }

    /// Subspace coefficients of the orthogonal projection of the field with
    /// the given stacked orthonormal coordinates.
    pub fn project_coords(&self, stacked: &DVector<f64>) -> DVector<f64> {
        let scalar_dim = self.coords.nrows() / self.codomain.components();
        let w = weight_vector(self.codomain, scalar_dim);
        let weighted = DVector::from_iterator(
            stacked.len(),
            stacked.iter().zip(w.iter()).map(|(x, wi)| x * wi),
        );
        self.coords.transpose() * weighted
    }

    /// Subspace coefficients of the orthogonal projection of a polynomial.
    pub fn project_poly(&self, basis: &ElementBasis, p: &Polynomial) -> DVector<f64> {
        self.project_coords(&basis.on_from_poly(p, self.containing_degree))
    }

    /// Columnwise [`project_coords`](Self::project_coords) of a family of
    /// stacked coordinates.
    pub fn project_matrix(&self, stacked: &DMatrix<f64>) -> DMatrix<f64> {
        let scalar_dim = self.coords.nrows() / self.codomain.components();
        let w = weight_vector(self.codomain, scalar_dim);
        let mut weighted = stacked.clone();
        for j in 0..weighted.ncols() {
            for i in 0..weighted.nrows() {
                weighted[(i, j)] *= w[i];
            }
        }
        self.coords.transpose() * weighted
    }
}

/// Modified Gram-Schmidt with greedy column pivoting; columns whose residual
/// falls below `tol` times the largest initial norm are dropped.
fn rank_revealing_gs(mut b: DMatrix<f64>, tol: f64) -> DMatrix<f64> {
    let n = b.ncols();
    let mut kept: Vec<DVector<f64>> = Vec::new();
    let mut norms: Vec<f64> = (0..n).map(|j| b.column(j).norm()).collect();
    let cutoff = norms.iter().cloned().fold(0.0f64, f64::max) * tol;
    loop {
        let mut best = None;
        let mut best_norm = cutoff;
        for j in 0..n {
            if norms[j] > best_norm {
                best_norm = norms[j];
                best = Some(j);
            }
        }
        let Some(j) = best else { break };
        let mut q = b.column(j).into_owned();
        // Re-orthogonalize once for stability.
        for _ in 0..2 {
            for k in &kept {
                let d = k.dot(&q);
                q -= k * d;
            }
        }
        let nq = q.norm();
        if nq <= cutoff {
            norms[j] = 0.0;
            continue;
        }
        q /= nq;
        for jj in 0..n {
            if norms[jj] > 0.0 {
                let d = q.dot(&b.column(jj));
                let col = b.column(jj) - &q * d;
                b.set_column(jj, &col);
                norms[jj] = b.column(jj).norm();
            }
        }
        kept.push(q);
    }
    let mut out = DMatrix::zeros(b.nrows(), kept.len());
    for (j, q) in kept.iter().enumerate() {
        out.set_column(j, q);
    }
    out
}

/// Hessians of scalar polynomials: `HESS P^{m+2}`, dimension
/// `dim P^{m+2} - 3`.
pub fn holy(basis: &ElementBasis, m: i32) -> SubspaceBasis {
    if m < 0 {
        return SubspaceBasis {
            codomain: Codomain::SymTensor,
            containing_degree: m,
            coords: DMatrix::zeros(0, 0),
        };
    }
    let src = basis.dim(m + 2);
    let mut polys = Vec::new();
    for i in 3..src {
        let mut c = DVector::zeros(src);
        c[i] = 1.0;
        let q = basis.poly_from_on(&c, m + 2, Codomain::Scalar);
        polys.push(q.apply(DiffOp::Hess));
    }
    SubspaceBasis::from_polys(basis, &polys, m, Codomain::SymTensor, None)
}

/// Complement `SYM((x - x_T)^perp otimes vP^{m-1})`, dimension
/// `2 dim P^{m-1}`.
pub fn choly(basis: &ElementBasis, m: i32) -> SubspaceBasis {
    let nsrc = dim_p(m - 1);
    let mut polys = Vec::new();
    for i in 0..nsrc {
        let mut phi = Polynomial::zero(basis.chart(), Codomain::Scalar, m - 1);
        phi.coeffs[i] = 1.0;
        let a = phi.mul_xi(0); // xi_1 phi
        let b = phi.mul_xi(1); // xi_2 phi
        let dim = a.scalar_dim();
        // e = e1: sym((-xi_2, xi_1) e1^T phi) = [[-xi_2 phi, xi_1 phi / 2], [., 0]].
        let mut t1 = Polynomial::zero(basis.chart(), Codomain::SymTensor, m);
        for j in 0..dim {
            t1.coeffs[j] = -b.coeffs[j];
            t1.coeffs[dim + j] = 0.5 * a.coeffs[j];
        }
        polys.push(t1);
        // e = e2: [[0, -xi_2 phi / 2], [., xi_1 phi]].
        let mut t2 = Polynomial::zero(basis.chart(), Codomain::SymTensor, m);
        for j in 0..dim {
            t2.coeffs[dim + j] = -0.5 * b.coeffs[j];
            t2.coeffs[2 * dim + j] = a.coeffs[j];
        }
        polys.push(t2);
    }
    SubspaceBasis::from_polys(basis, &polys, m.max(0), Codomain::SymTensor, None)
}

/// Symmetric curls of vector polynomials: `SYMCURL vP^{m+1}`, dimension
/// `2 dim P^{m+1} - 3`; built with a rank-revealing sweep since the
/// generating family has a three-dimensional kernel.
pub fn coly(basis: &ElementBasis, m: i32) -> SubspaceBasis {
    let nsrc = dim_p(m + 1);
    let mut polys = Vec::new();
    for c in 0..2 {
        for i in 1..nsrc {
            let mut v = Polynomial::zero(basis.chart(), Codomain::Vector, m + 1);
            v.coeffs[c * nsrc + i] = 1.0;
            polys.push(v.apply(DiffOp::SymCurl));
        }
    }
    if polys.is_empty() {
        return SubspaceBasis {
            codomain: Codomain::SymTensor,
            containing_degree: m.max(0),
            coords: DMatrix::zeros(0, 0),
        };
    }
    SubspaceBasis::from_polys(basis, &polys, m.max(0), Codomain::SymTensor, Some(1e-10))
}

/// Complement `(x - x_T)(x - x_T)^T P^{m-2}`, dimension `dim P^{m-2}`.
pub fn ccoly(basis: &ElementBasis, m: i32) -> SubspaceBasis {
    let nsrc = dim_p(m - 2);
    let mut polys = Vec::new();
    for i in 0..nsrc {
        let mut phi = Polynomial::zero(basis.chart(), Codomain::Scalar, m - 2);
        phi.coeffs[i] = 1.0;
        let xx = phi.mul_xi(0).mul_xi(0);
        let xy = phi.mul_xi(0).mul_xi(1);
        let yy = phi.mul_xi(1).mul_xi(1);
        let dim = xx.scalar_dim();
        let mut t = Polynomial::zero(basis.chart(), Codomain::SymTensor, m);
        for j in 0..dim {
            t.coeffs[j] = xx.coeffs[j];
            t.coeffs[dim + j] = xy.coeffs[j];
            t.coeffs[2 * dim + j] = yy.coeffs[j];
        }
        polys.push(t);
    }
    SubspaceBasis::from_polys(basis, &polys, m.max(0), Codomain::SymTensor, None)
}

/// Lowest-order Raviart-Thomas space `{e1, e2, x - x_T}`.
pub fn rt1(basis: &ElementBasis) -> SubspaceBasis {
    let mut polys = Vec::new();
    for c in 0..2 {
        let mut v = Polynomial::zero(basis.chart(), Codomain::Vector, 1);
        v.coeffs[c * 3] = 1.0;
        polys.push(v);
    }
    let mut v = Polynomial::zero(basis.chart(), Codomain::Vector, 1);
    v.coeffs[1] = 1.0; // xi_1 in component 1
    v.coeffs[3 + 2] = 1.0; // xi_2 in component 2
    polys.push(v);
    SubspaceBasis::from_polys(basis, &polys, 1, Codomain::Vector, None)
}

/// `L2`-orthogonal complement of `P^1` inside `P^m`; because the scalar
/// basis is degree-nested this is spanned by the orthonormal members of
/// degree two and higher.
pub fn pperp1(basis: &ElementBasis, m: i32) -> SubspaceBasis {
    let d = basis.dim(m);
    let keep = d.saturating_sub(3);
    let mut coords = DMatrix::zeros(d, keep);
    for j in 0..keep {
        coords[(3 + j, j)] = 1.0;
    }
    SubspaceBasis { codomain: Codomain::Scalar, containing_degree: m, coords }
}

/// Matrix of a differential operator restricted to a subspace: column `j`
/// holds the stacked orthonormal coordinates (degree `target_deg`) of the
/// image of the `j`-th member.
pub fn operator_matrix(
    basis: &ElementBasis,
    space: &SubspaceBasis,
    op: &dyn Fn(&Polynomial) -> Polynomial,
    target_deg: i32,
    target_codomain: Codomain,
) -> DMatrix<f64> {
    let rows = basis.dim(target_deg) * target_codomain.components();
    let mut out = DMatrix::zeros(rows, space.len());
    for j in 0..space.len() {
        let img = op(&space.member(basis, j));
        assert_eq!(img.codomain, target_codomain);
        out.set_column(j, &basis.on_from_poly(&img, target_deg));
    }
    out
}

/// Solves `VROT upsilon = rhs` for `upsilon` in `cHoly^m`; the operator is
/// an isomorphism onto `vP^{m-1}`.
pub fn invert_vrot_on_choly(basis: &ElementBasis, m: i32, rhs: &Polynomial) -> Polynomial {
    let space = choly(basis, m);
    let a = operator_matrix(basis, &space, &|p| p.apply(DiffOp::VRot), m - 1, Codomain::Vector);
    let b = basis.on_from_poly(rhs, m - 1);
    let c = solve_square(a, b);
    basis.poly_from_on(&space.embed(&c), space.containing_degree, space.codomain)
}

/// Solves `DIV DIV tau = rhs` for `tau` in `cColy^m` (`m >= 2`).
pub fn invert_divdiv_on_ccoly(basis: &ElementBasis, m: i32, rhs: &Polynomial) -> Polynomial {
    let space = ccoly(basis, m);
    let a = operator_matrix(basis, &space, &|p| p.divdiv(), m - 2, Codomain::Scalar);
    let b = basis.on_from_poly(rhs, m - 2);
    let c = solve_square(a, b);
    basis.poly_from_on(&space.embed(&c), space.containing_degree, space.codomain)
}

/// Solves `HESS q = rhs` for `q` orthogonal to `P^1` in `P^m`; `rhs` must
/// lie in `HESS P^m`.
pub fn invert_hess_on_pperp1(basis: &ElementBasis, m: i32, rhs: &Polynomial) -> Polynomial {
    let space = pperp1(basis, m);
    let a = operator_matrix(basis, &space, &|p| p.apply(DiffOp::Hess), m - 2, Codomain::SymTensor);
    let b = basis.on_from_poly(rhs, m - 2);
    let c = solve_square(a, b);
    basis.poly_from_on(&space.embed(&c), space.containing_degree, space.codomain)
}

fn solve_square(a: DMatrix<f64>, b: DVector<f64>) -> DVector<f64> {
    if a.ncols() == 0 {
        return DVector::zeros(0);
    }
    if a.nrows() == a.ncols() {
        a.lu().solve(&b).expect("local isomorphism matrix is singular")
    } else {
        // Consistent overdetermined system; least squares via SVD.
        let svd = a.svd(true, true);
        svd.solve(&b, 1e-13).expect("SVD solve failed")
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::{hexagon_mesh, square_mesh};
    use nalgebra::DVector;

    fn basis() -> (crate::mesh::Mesh, ElementBasis) {
        let mesh = hexagon_mesh(2);
        let b = ElementBasis::new(&mesh, 0, 7, 14);
        (mesh, b)
    }

    #[test]
    fn dimension_counts() {
        let (_m, b) = basis();
        assert_eq!(holy(&b, 2).len(), 12);
        assert_eq!(choly(&b, 2).len(), 6);
        assert_eq!(coly(&b, 2).len(), 17);
        assert_eq!(ccoly(&b, 2).len(), 1);
        assert_eq!(rt1(&b).len(), 3);
        assert_eq!(pperp1(&b, 4).len(), 12);
        assert_eq!(holy(&b, -1).len(), 0);
        assert_eq!(choly(&b, 0).len(), 0);
        assert_eq!(ccoly(&b, 1).len(), 0);
    }

    #[test]
    fn tensor_space_splits_both_ways() {
        let (_m, b) = basis();
        for m in [2i32, 3] {
            let full = 3 * dim_p(m);
            let h = holy(&b, m);
            let ch = choly(&b, m);
            let mut cat = DMatrix::zeros(3 * dim_p(m), h.len() + ch.len());
            cat.columns_mut(0, h.len()).copy_from(&h.coords);
            cat.columns_mut(h.len(), ch.len()).copy_from(&ch.coords);
            assert_eq!(h.len() + ch.len(), full);
            assert_eq!(crate::linalg::rank_with_tol(&cat, 1e-10), full);

            let co = coly(&b, m);
            let cc = ccoly(&b, m);
            let mut cat = DMatrix::zeros(3 * dim_p(m), co.len() + cc.len());
            cat.columns_mut(0, co.len()).copy_from(&co.coords);
            cat.columns_mut(co.len(), cc.len()).copy_from(&cc.coords);
            assert_eq!(co.len() + cc.len(), full);
            assert_eq!(crate::linalg::rank_with_tol(&cat, 1e-10), full);
        }
    }

    #[test]
    fn subspace_bases_are_frobenius_orthonormal() {
        let mesh = square_mesh(2);
        let b = ElementBasis::new(&mesh, 0, 6, 12);
        for space in [holy(&b, 3), choly(&b, 3), coly(&b, 2), ccoly(&b, 4)] {
            let vals = space.values(&b);
            let g = vals.product(&vals, &b.quad.weights);
            for i in 0..g.nrows() {
                for j in 0..g.ncols() {
                    let expect = if i == j { 1.0 } else { 0.0 };
                    assert!((g[(i, j)] - expect).abs() < 1e-11, "({i},{j}): {}", g[(i, j)]);
                }
            }
        }
    }

    #[test]
    fn choly_members_annihilate_normal_trace() {
        // sym((x-x_T)^perp w)(x) n . n = ((x-x_T)^perp . n)(w . n), which only
        // vanishes where (x-x_T) is parallel to n; instead check the defining
        // contraction with (x-x_T): tau (x-x_T) . (x-x_T) = 0.
        let (_m, b) = basis();
        let space = choly(&b, 3);
        for j in 0..space.len() {
            let p = space.member(&b, j);
            for q in 0..b.quad.len() {
                let x = b.quad.points[q];
                let d = x - b.center;
                let v = p.eval(x);
                let contracted = v[0] * d.x * d.x + 2.0 * v[1] * d.x * d.y + v[2] * d.y * d.y;
                assert!(contracted.abs() < 1e-12);
            }
        }
    }

    #[test]
    fn local_isomorphisms_invert() {
        let (_mesh, b) = basis();
        // VROT on cHoly^3.
        let space = choly(&b, 3);
        let mut c = DVector::zeros(space.len());
        for (i, v) in c.iter_mut().enumerate() {
            *v = ((i + 1) as f64).ln();
        }
        let target = b.poly_from_on(&space.embed(&c), space.containing_degree, Codomain::SymTensor);
        let rhs = target.apply(DiffOp::VRot);
        let back = invert_vrot_on_choly(&b, 3, &rhs);
        let x = b.quad.points[3];
        for (u, v) in target.eval(x).iter().zip(back.eval(x).iter()) {
            assert!((u - v).abs() < 1e-10);
        }
        // DIVDIV on cColy^4.
        let space = ccoly(&b, 4);
        let mut c = DVector::zeros(space.len());
        for (i, v) in c.iter_mut().enumerate() {
            *v = (i as f64 * 0.77).cos();
        }
        let target = b.poly_from_on(&space.embed(&c), space.containing_degree, Codomain::SymTensor);
        let rhs = target.divdiv();
        let back = invert_divdiv_on_ccoly(&b, 4, &rhs);
        for (u, v) in target.eval(x).iter().zip(back.eval(x).iter()) {
            assert!((u - v).abs() < 1e-9);
        }
        // HESS on P^{4 perp 1}.
        let space = pperp1(&b, 4);
        let mut c = DVector::zeros(space.len());
        for (i, v) in c.iter_mut().enumerate() {
            *v = ((2 * i + 1) as f64).sqrt();
        }
        let target = b.poly_from_on(&space.embed(&c), 4, Codomain::Scalar);
        let rhs = target.apply(DiffOp::Hess);
        let back = invert_hess_on_pperp1(&b, 4, &rhs);
        assert!((target.eval(x)[0] - back.eval(x)[0]).abs() < 1e-10);
    }
}
