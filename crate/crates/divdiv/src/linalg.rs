//! Sparse and dense linear-algebra helpers.
//!
//! Global operators of the discrete complexes are assembled into a minimal
//! CSR structure; symmetric positive (semi-)definite systems are solved by
//! Jacobi-preconditioned conjugate gradients, optionally deflated by a known
//! kernel. Stability constants come from dense generalized symmetric
//! eigenproblems restricted to a constraint subspace, which is eliminated by
//! Householder reflectors.

use nalgebra::{DMatrix, DVector};

/// Triplet accumulator for sparse assembly.
#[derive(Debug, Clone)]
pub struct Coo {
    pub n_rows: usize,
    pub n_cols: usize,
    triplets: Vec<(usize, usize, f64)>,
}

impl Coo {
    pub fn new(n_rows: usize, n_cols: usize) -> Self {
        Coo { n_rows, n_cols, triplets: Vec::new() }
    }

    pub fn push(&mut self, i: usize, j: usize, v: f64) {
        debug_assert!(i < self.n_rows && j < self.n_cols);
        if v != 0.0 {
            self.triplets.push((i, j, v));
        }
    }

    /// Adds a dense block at the given row/column index maps.
    pub fn push_block(&mut self, rows: &[usize], cols: &[usize], block: &DMatrix<f64>) {
        for (bi, &i) in rows.iter().enumerate() {
            for (bj, &j) in cols.iter().enumerate() {
                self.push(i, j, block[(bi, bj)]);
            }
        }
    }

    pub fn to_csr(mut self) -> Csr {
        self.triplets.sort_by_key(|&(i, j, _)| (i, j));
        let mut row_ptr = vec![0usize; self.n_rows + 1];
        let mut col: Vec<usize> = Vec::with_capacity(self.triplets.len());
        let mut val: Vec<f64> = Vec::with_capacity(self.triplets.len());
        let mut last: Option<(usize, usize)> = None;
        for &(i, j, v) in &self.triplets {
            if last == Some((i, j)) {
                *val.last_mut().unwrap() += v;
            } else {
                col.push(j);
                val.push(v);
                row_ptr[i + 1] = col.len();
                last = Some((i, j));
            }
        }
        for i in 1..=self.n_rows {
            row_ptr[i] = row_ptr[i].max(row_ptr[i - 1]);
        }
        Csr { n_rows: self.n_rows, n_cols: self.n_cols, row_ptr, col, val }
    }
}

/// Compressed sparse row matrix.
#[derive(Debug, Clone)]
pub struct Csr {
    pub n_rows: usize,
    pub n_cols: usize,
    pub row_ptr: Vec<usize>,
    pub col: Vec<usize>,
    pub val: Vec<f64>,
}

impl Csr {
    pub fn matvec(&self, x: &DVector<f64>) -> DVector<f64> {
        debug_assert_eq!(x.len(), self.n_cols);
        let mut y = DVector::zeros(self.n_rows);
        for i in 0..self.n_rows {
            let mut s = 0.0;
            for idx in self.row_ptr[i]..self.row_ptr[i + 1] {
                s += self.val[idx] * x[self.col[idx]];
            }
            y[i] = s;
        }
        y
    }

    pub fn matvec_transpose(&self, x: &DVector<f64>) -> DVector<f64> {
        debug_assert_eq!(x.len(), self.n_rows);
        let mut y = DVector::zeros(self.n_cols);
        for i in 0..self.n_rows {
            for idx in self.row_ptr[i]..self.row_ptr[i + 1] {
                y[self.col[idx]] += self.val[idx] * x[i];
            }
        }
        y
    }

    pub fn diagonal(&self) -> DVector<f64> {
        let mut d = DVector::zeros(self.n_rows.min(self.n_cols));
        for i in 0..d.len() {
            for idx in self.row_ptr[i]..self.row_ptr[i + 1] {
                if self.col[idx] == i {
                    d[i] += self.val[idx];
                }
            }
        }
        d
    }

    pub fn to_dense(&self) -> DMatrix<f64> {
        let mut m = DMatrix::zeros(self.n_rows, self.n_cols);
        for i in 0..self.n_rows {
            for idx in self.row_ptr[i]..self.row_ptr[i + 1] {
                m[(i, self.col[idx])] += self.val[idx];
            }
        }
        m
    }

    /// Writes the matrix as `row col value` triplet lines (zero-based
    /// indices) preceded by a `rows cols nnz` header line.
    pub fn write_triplets<W: std::io::Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(w, "{} {} {}", self.n_rows, self.n_cols, self.val.len())?;
        for i in 0..self.n_rows {
            for idx in self.row_ptr[i]..self.row_ptr[i + 1] {
                writeln!(w, "{} {} {:.17e}", i, self.col[idx], self.val[idx])?;
            }
        }
        Ok(())
    }
}

/// Dense LU with row equilibration and one step of iterative refinement.
/// The local systems mix rows of very different natural scales (moments,
/// point values, high-order derivative pairings), and plain partial
/// pivoting loses digits to the imbalance as the degree grows.
pub struct ScaledLu {
    a: DMatrix<f64>,
    scale: DVector<f64>,
    lu: nalgebra::LU<f64, nalgebra::Dyn, nalgebra::Dyn>,
}

impl ScaledLu {
    pub fn new(a: DMatrix<f64>) -> ScaledLu {
        let n = a.nrows();
        let mut scale = DVector::from_element(n, 1.0);
        let mut b = a.clone();
        for i in 0..n {
            let s = a.row(i).amax();
            if s > 0.0 {
                scale[i] = 1.0 / s;
                b.row_mut(i).apply(|v| *v *= 1.0 / s);
            }
        }
        ScaledLu { a, scale, lu: b.lu() }
    }

    pub fn solve(&self, rhs: &DMatrix<f64>) -> Option<DMatrix<f64>> {
        let mut x = self.lu.solve(&self.scaled(rhs))?;
        let r = rhs - &self.a * &x;
        x += self.lu.solve(&self.scaled(&r))?;
        Some(x)
    }

    fn scaled(&self, rhs: &DMatrix<f64>) -> DMatrix<f64> {
        let mut out = rhs.clone_owned();
        for i in 0..out.nrows() {
            let s = self.scale[i];
            out.row_mut(i).apply(|v| *v *= s);
        }
        out
    }
}

/// Outcome of a conjugate-gradient solve.
pub struct CgResult {
    pub x: DVector<f64>,
    pub iterations: usize,
    pub relative_residual: f64,
}

/// Jacobi-preconditioned conjugate gradients for SPD systems. When
/// `deflate` is non-empty, the solve is restricted to the Euclidean
/// orthogonal complement of its span (the vectors are orthonormalized
/// internally); the right-hand side is projected as well.
pub fn cg_solve(
    a: &dyn Fn(&DVector<f64>) -> DVector<f64>,
    diag: &DVector<f64>,
    b: &DVector<f64>,
    deflate: &[DVector<f64>],
    tol: f64,
    max_iter: usize,
) -> CgResult {
    let n = b.len();
    let basis = orthonormalize(deflate);
    let project = |v: &mut DVector<f64>| {
        for z in &basis {
            let c = z.dot(v);
            v.axpy(-c, z, 1.0);
        }
    };
    let inv_diag = diag.map(|d| if d.abs() > 0.0 { 1.0 / d } else { 1.0 });

    let mut b = b.clone();
    project(&mut b);
    let b_norm = b.norm().max(f64::MIN_POSITIVE);
    let mut x = DVector::zeros(n);
    let mut r = b.clone();
    let mut z = r.component_mul(&inv_diag);
    project(&mut z);
    let mut p = z.clone();
    let mut rz = r.dot(&z);
    let mut iterations = 0;
    for it in 0..max_iter {
        let res = r.norm() / b_norm;
        if res <= tol {
            break;
        }
        iterations = it + 1;
        let mut ap = a(&p);
        project(&mut ap);
        let alpha = rz / p.dot(&ap);
        x.axpy(alpha, &p, 1.0);
        r.axpy(-alpha, &ap, 1.0);
        z = r.component_mul(&inv_diag);
        project(&mut z);
        let rz_new = r.dot(&z);
        let beta = rz_new / rz;
        rz = rz_new;
        p = &z + beta * &p;
    }
    let relative_residual = r.norm() / b_norm;
    CgResult { x, iterations, relative_residual }
}

fn orthonormalize(vs: &[DVector<f64>]) -> Vec<DVector<f64>> {
    let mut basis: Vec<DVector<f64>> = Vec::new();
    for v in vs {
        let mut w = v.clone();
        for _ in 0..2 {
            for z in &basis {
                let c = z.dot(&w);
                w.axpy(-c, z, 1.0);
            }
        }
        let n = w.norm();
        if n > 1e-13 * v.norm().max(1.0) {
            basis.push(w / n);
        }
    }
    basis
}

/// Householder elimination of linear constraints `B^T x = 0`.
///
/// Returns matrices `reduce(A) = (Q^T A Q)[c.., c..]` where the columns of
/// `Q` are an orthonormal basis whose first `c = rank(B)` members span the
/// column space of `B`; the remaining columns span the admissible subspace.
pub struct ConstraintBasis {
    reflectors: Vec<DVector<f64>>,
    pub n: usize,
    pub n_constraints: usize,
}

impl ConstraintBasis {
    pub fn new(b: &DMatrix<f64>) -> Self {
        let n = b.nrows();
        let c = b.ncols();
        let mut work = b.clone();
        let mut reflectors = Vec::with_capacity(c);
        for j in 0..c {
            let mut v = DVector::zeros(n);
            for i in j..n {
                v[i] = work[(i, j)];
            }
            let alpha = v.norm();
            if alpha < 1e-300 {
                reflectors.push(DVector::zeros(n));
                continue;
            }
            let sign = if v[j] >= 0.0 { 1.0 } else { -1.0 };
            v[j] += sign * alpha;
            let norm = v.norm();
            v /= norm;
            // Apply to the remaining columns of work.
            for jj in j..c {
                let col = work.column(jj).clone_owned();
                let coeff = 2.0 * v.dot(&col);
                for i in 0..n {
                    work[(i, jj)] -= coeff * v[i];
                }
            }
            reflectors.push(v);
        }
        ConstraintBasis { reflectors, n, n_constraints: c }
    }

    /// Applies `Q^T` to a vector.
    pub fn qt_vec(&self, x: &DVector<f64>) -> DVector<f64> {
        let mut y = x.clone();
        for v in &self.reflectors {
            let c = 2.0 * v.dot(&y);
            y.axpy(-c, v, 1.0);
        }
        y
    }

    /// Applies `Q` to a vector.
    pub fn q_vec(&self, x: &DVector<f64>) -> DVector<f64> {
        let mut y = x.clone();
        for v in self.reflectors.iter().rev() {
            let c = 2.0 * v.dot(&y);
            y.axpy(-c, v, 1.0);
        }
        y
    }

    /// Reduces a symmetric matrix to the admissible subspace.
    pub fn reduce(&self, a: &DMatrix<f64>) -> DMatrix<f64> {
        let mut m = a.clone();
        for v in &self.reflectors {
            // m <- H m H with H = I - 2 v v^T.
            let w = &m * v;
            let vw = v.dot(&w);
            // m <- m - 2 v w^T - 2 w v^T + 4 (v.w) v v^T
            for i in 0..self.n {
                for j in 0..self.n {
                    m[(i, j)] += -2.0 * v[i] * w[j] - 2.0 * w[i] * v[j]
                        + 4.0 * vw * v[i] * v[j];
                }
            }
        }
        let k = self.n - self.n_constraints;
        m.view((self.n_constraints, self.n_constraints), (k, k)).into_owned()
    }

    /// Reduces a vector (functional) to the admissible subspace.
    pub fn reduce_vec(&self, x: &DVector<f64>) -> DVector<f64> {
        let y = self.qt_vec(x);
        y.rows(self.n_constraints, self.n - self.n_constraints).into_owned()
    }
}

/// Smallest eigenvalue of the symmetric pencil `A x = lambda M x` with `M`
/// positive definite.
pub fn smallest_generalized_eigenvalue(a: &DMatrix<f64>, m: &DMatrix<f64>) -> f64 {
    generalized_eigenvalues(a, m).0
}

/// Largest eigenvalue of the symmetric pencil `A x = lambda M x` with `M`
/// positive definite.
pub fn largest_generalized_eigenvalue(a: &DMatrix<f64>, m: &DMatrix<f64>) -> f64 {
    generalized_eigenvalues(a, m).1
}

fn generalized_eigenvalues(a: &DMatrix<f64>, m: &DMatrix<f64>) -> (f64, f64) {
    let chol = m
        .clone()
        .cholesky()
        .expect("mass matrix must be positive definite");
    let l = chol.l();
    // S = L^{-1} A L^{-T}, symmetric.
    let b = l.solve_lower_triangular(a).expect("triangular solve");
    let s = l
        .solve_lower_triangular(&b.transpose())
        .expect("triangular solve");
    let s = 0.5 * (&s + s.transpose());
    let eig = s.symmetric_eigen();
    let mut lo = f64::INFINITY;
    let mut hi = f64::NEG_INFINITY;
    for &v in eig.eigenvalues.iter() {
        lo = lo.min(v);
        hi = hi.max(v);
    }
    (lo, hi)
}

/// Numerical rank with a relative singular-value threshold.
pub fn rank_with_tol(m: &DMatrix<f64>, rel_tol: f64) -> usize {
    if m.nrows() == 0 || m.ncols() == 0 {
        return 0;
    }
    let svd = m.clone().svd(false, false);
    let smax = svd.singular_values.max();
    if smax == 0.0 {
        return 0;
    }
    svd.singular_values.iter().filter(|&&s| s > rel_tol * smax).count()
}

/// Relative least-squares residual `|| A x - b || / || b ||` minimized over
/// `x`, measuring how far `b` is from the column space of `A`.
pub fn lstsq_relative_residual(a: &DMatrix<f64>, b: &DVector<f64>) -> f64 {
    let svd = a.clone().svd(true, true);
    let x = svd
        .solve(b, 1e-12 * svd.singular_values.max().max(f64::MIN_POSITIVE))
        .expect("svd solve");
    let res = a * x - b;
    res.norm() / b.norm().max(f64::MIN_POSITIVE)
}

/// Least-squares fit of a line to `(x, y)` points; returns the slope.
pub fn linear_fit_slope(points: &[(f64, f64)]) -> f64 {
    let n = points.len() as f64;
    let sx: f64 = points.iter().map(|p| p.0).sum();
    let sy: f64 = points.iter().map(|p| p.1).sum();
    let sxx: f64 = points.iter().map(|p| p.0 * p.0).sum();
    let sxy: f64 = points.iter().map(|p| p.0 * p.1).sum();
    (n * sxy - sx * sy) / (n * sxx - sx * sx)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn csr_assembly_merges_duplicates() {
        let mut coo = Coo::new(3, 3);
        coo.push(0, 0, 1.0);
        coo.push(0, 0, 2.0);
        coo.push(2, 1, 5.0);
        coo.push(1, 2, -1.0);
        let csr = coo.to_csr();
        let d = csr.to_dense();
        assert_eq!(d[(0, 0)], 3.0);
        assert_eq!(d[(2, 1)], 5.0);
        assert_eq!(d[(1, 2)], -1.0);
        let x = DVector::from_vec(vec![1.0, 1.0, 1.0]);
        assert_eq!(csr.matvec(&x)[0], 3.0);
    }

    #[test]
    fn cg_solves_spd_system() {
        // Tridiagonal SPD.
        let n = 50;
        let mut coo = Coo::new(n, n);
        for i in 0..n {
            coo.push(i, i, 2.0);
            if i + 1 < n {
                coo.push(i, i + 1, -1.0);
                coo.push(i + 1, i, -1.0);
            }
        }
        let a = coo.to_csr();
        let b = DVector::from_element(n, 1.0);
        let diag = a.diagonal();
        let res = cg_solve(&|x| a.matvec(x), &diag, &b, &[], 1e-12, 1000);
        let check = a.matvec(&res.x) - &b;
        assert!(check.norm() < 1e-9);
    }

    #[test]
    fn deflated_cg_solves_singular_system() {
        // Graph Laplacian of a path: kernel = constants.
        let n = 20;
        let mut coo = Coo::new(n, n);
        for i in 0..n - 1 {
            coo.push(i, i, 1.0);
            coo.push(i + 1, i + 1, 1.0);
            coo.push(i, i + 1, -1.0);
            coo.push(i + 1, i, -1.0);
        }
        let a = coo.to_csr();
        let kernel = vec![DVector::from_element(n, 1.0)];
        let mut b = DVector::zeros(n);
        b[0] = 1.0;
        b[n - 1] = -1.0;
        let diag = a.diagonal();
        let res = cg_solve(&|x| a.matvec(x), &diag, &b, &kernel, 1e-12, 2000);
        let check = a.matvec(&res.x) - &b;
        assert!(check.norm() < 1e-8, "residual {}", check.norm());
        assert!(res.x.sum().abs() < 1e-8);
    }

    #[test]
    fn constrained_eigenvalue() {
        // A = diag(1, 2, 3), M = I, constraint x_1 = 0: smallest is 2.
        let a = DMatrix::from_diagonal(&DVector::from_vec(vec![1.0, 2.0, 3.0]));
        let m = DMatrix::identity(3, 3);
        let b = DMatrix::from_column_slice(3, 1, &[1.0, 0.0, 0.0]);
        let basis = ConstraintBasis::new(&b);
        let ar = basis.reduce(&a);
        let mr = basis.reduce(&m);
        let lam = smallest_generalized_eigenvalue(&ar, &mr);
        assert!((lam - 2.0).abs() < 1e-12);
    }

    #[test]
    fn rank_and_lstsq() {
        let m = DMatrix::from_row_slice(3, 2, &[1.0, 0.0, 0.0, 1.0, 1.0, 1.0]);
        assert_eq!(rank_with_tol(&m, 1e-12), 2);
        let b = DVector::from_vec(vec![1.0, 1.0, 2.0]);
        assert!(lstsq_relative_residual(&m, &b) < 1e-14);
        let b = DVector::from_vec(vec![0.0, 0.0, 1.0]);
        assert!(lstsq_relative_residual(&m, &b) > 0.3);
    }

    #[test]
    fn slope_fit() {
        let pts: Vec<(f64, f64)> = (1..6).map(|i| (i as f64, 3.0 * i as f64 + 1.0)).collect();
        assert!((linear_fit_slope(&pts) - 3.0).abs() < 1e-12);
    }
}
