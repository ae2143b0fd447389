//! Thin wrappers around faer: sparse direct solves and dense symmetric
//! (generalized) eigenproblems.

use faer::linalg::solvers::Solve;
use faer::linalg::triangular_solve::{
    solve_lower_triangular_in_place, solve_upper_triangular_in_place,
};
use faer::sparse::linalg::solvers::{Llt, Lu};
use faer::{Col, Mat, Par, Side};

use crate::error::{Error, Result};
use crate::sparse::{dot, norm2, CsrMatrix};

/// Sparse LU factorization of a square matrix.
pub struct SparseLu {
    n: usize,
    lu: Lu<usize, f64>,
}

impl SparseLu {
    pub fn new(a: &CsrMatrix) -> Result<Self> {
        if a.nrows() != a.ncols() {
            return Err(Error::Dimension(format!(
                "LU of a {}x{} matrix",
                a.nrows(),
                a.ncols()
            )));
        }
        let lu = a
            .to_faer()
            .sp_lu()
            .map_err(|e| Error::Solver(format!("sparse LU failed: {e:?}")))?;
        Ok(Self { n: a.nrows(), lu })
    }

    pub fn solve(&self, b: &[f64]) -> Vec<f64> {
        assert_eq!(b.len(), self.n);
        let rhs = Col::<f64>::from_fn(self.n, |i| b[i]);
        let x = self.lu.solve(&rhs);
        (0..self.n).map(|i| x[i]).collect()
    }
}

/// Sparse Cholesky factorization of a symmetric positive definite matrix.
pub struct SparseCholesky {
    n: usize,
    llt: Llt<usize, f64>,
}

impl SparseCholesky {
    pub fn new(a: &CsrMatrix) -> Result<Self> {
        let llt = a
            .to_faer()
            .sp_cholesky(Side::Lower)
            .map_err(|e| Error::Solver(format!("sparse Cholesky failed: {e:?}")))?;
        Ok(Self { n: a.nrows(), llt })
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn solve(&self, b: &[f64]) -> Vec<f64> {
        assert_eq!(b.len(), self.n);
        let rhs = Col::<f64>::from_fn(self.n, |i| b[i]);
        let x = self.llt.solve(&rhs);
        (0..self.n).map(|i| x[i]).collect()
    }
}

/// Solves `a x = b` and applies a few steps of iterative refinement.
/// Returns the solution and its relative residual.
pub fn solve_refined(a: &CsrMatrix, lu: &SparseLu, b: &[f64], steps: usize) -> (Vec<f64>, f64) {
    let bn = norm2(b);
    let mut x = lu.solve(b);
    let residual =
        |x: &[f64]| -> Vec<f64> { a.mul_vec(x).iter().zip(b).map(|(ax, bi)| bi - ax).collect() };
    let mut r = residual(&x);
    for _ in 0..steps {
        if !(norm2(&r) > 1e-15 * bn) {
            break;
        }
        let dx = lu.solve(&r);
        x.iter_mut().zip(&dx).for_each(|(xi, di)| *xi += di);
        r = residual(&x);
    }
    let rel = if bn > 0.0 { norm2(&r) / bn } else { norm2(&r) };
    (x, rel)
}

pub fn to_dense(a: &CsrMatrix) -> Mat<f64> {
    let mut m = Mat::<f64>::zeros(a.nrows(), a.ncols());
    for (i, j, v) in a.iter() {
        m[(i, j)] += v;
    }
    m
}

/// Eigenvalues (ascending) and orthonormal eigenvectors of a symmetric matrix.
pub fn sym_eigen(a: &Mat<f64>) -> Result<(Vec<f64>, Mat<f64>)> {
    let n = a.nrows();
    let sym = Mat::<f64>::from_fn(n, n, |i, j| 0.5 * (a[(i, j)] + a[(j, i)]));
    let eig = sym
        .self_adjoint_eigen(Side::Lower)
        .map_err(|_| Error::EigenNoConvergence(0))?;
    let s = eig.S();
    let vals: Vec<f64> = (0..n).map(|i| s[i]).collect();
    Ok((vals, eig.U().to_owned()))
}

/// Generalized problem `a x = λ b x` with `b` symmetric positive definite.
/// Eigenvalues ascending; eigenvectors are `b`-orthonormal columns.
pub fn gen_sym_eigen(a: &Mat<f64>, b: &Mat<f64>) -> Result<(Vec<f64>, Mat<f64>)> {
    let l = b
        .llt(Side::Lower)
        .map_err(|_| Error::Solver("mass matrix is not positive definite".into()))?
        .L()
        .to_owned();
    let mut c = a.clone();
    solve_lower_triangular_in_place(l.as_ref(), c.as_mut(), Par::Seq);
    let mut c = c.transpose().to_owned();
    solve_lower_triangular_in_place(l.as_ref(), c.as_mut(), Par::Seq);
    let (vals, mut u) = sym_eigen(&c)?;
    solve_upper_triangular_in_place(l.transpose(), u.as_mut(), Par::Seq);
    Ok((vals, u))
}

pub fn column(m: &Mat<f64>, j: usize) -> Vec<f64> {
    (0..m.nrows()).map(|i| m[(i, j)]).collect()
}

/// Smallest eigenvalue of `a x = λ b x` (both SPD) by inverse iteration.
pub fn smallest_generalized_eigenvalue(
    a: &CsrMatrix,
    b: &CsrMatrix,
    max_iter: usize,
) -> Result<f64> {
    let n = a.nrows();
    if n == 0 {
        return Err(Error::InvalidArgument("empty eigenproblem".into()));
    }
    let fa = SparseCholesky::new(a)?;
    // deterministic start with no symmetry that could hide the ground mode
    let mut x: Vec<f64> = (0..n)
        .map(|i| 1.0 + ((i * 7919) % 97) as f64 / 97.0)
        .collect();
    let mut lambda = f64::INFINITY;
    for _ in 0..max_iter {
        let bx = b.mul_vec(&x);
        let y = fa.solve(&bx);
        let by = b.mul_vec(&y);
        let scale = dot(&y, &by).sqrt();
        x = y.iter().map(|v| v / scale).collect();
        let ax = a.mul_vec(&x);
        let new = dot(&x, &ax);
        let bx = b.mul_vec(&x);
        let res: f64 = ax
            .iter()
            .zip(&bx)
            .map(|(p, q)| (p - new * q).powi(2))
            .sum::<f64>()
            .sqrt();
        let converged = (new - lambda).abs() <= 1e-13 * new.abs()
            && res <= 1e-8 * norm2(&ax).max(f64::MIN_POSITIVE);
        lambda = new;
        if converged {
            return Ok(lambda);
        }
    }
    Err(Error::EigenNoConvergence(max_iter))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sparse::TripletBuilder;

    fn tridiag(n: usize, d: f64, o: f64) -> CsrMatrix {
        let mut t = TripletBuilder::new(n, n);
        for i in 0..n {
            t.push(i, i, d);
            if i + 1 < n {
                t.push(i, i + 1, o);
                t.push(i + 1, i, o);
            }
        }
        t.build()
    }

    #[test]
    fn generalized_eigen_matches_nalgebra() {
        let a = tridiag(6, 2.0, -1.0);
        let b = tridiag(6, 4.0, 1.0);
        let (vals, vecs) = gen_sym_eigen(&to_dense(&a), &to_dense(&b)).unwrap();
        // oracle: eigenvalues of b^{-1/2} a b^{-1/2} from nalgebra
        let na = nalgebra::DMatrix::from_fn(6, 6, |i, j| a.get(i, j));
        let nb = nalgebra::DMatrix::from_fn(6, 6, |i, j| b.get(i, j));
        let lb = nalgebra::Cholesky::new(nb).unwrap().l();
        let li = lb.clone().try_inverse().unwrap();
        let c = &li * na * li.transpose();
        let mut oracle: Vec<f64> = nalgebra::SymmetricEigen::new(c)
            .eigenvalues
            .iter()
            .copied()
            .collect();
        oracle.sort_by(f64::total_cmp);
        for (v, o) in vals.iter().zip(&oracle) {
            assert!((v - o).abs() < 1e-13, "{v} {o}");
        }
        // b-orthonormality
        for i in 0..6 {
            for j in 0..6 {
                let bij = b.bilinear(&column(&vecs, i), &column(&vecs, j));
                assert!((bij - if i == j { 1.0 } else { 0.0 }).abs() < 1e-12);
            }
        }
        let lmin = smallest_generalized_eigenvalue(&a, &b, 500).unwrap();
        assert!((lmin - oracle[0]).abs() < 1e-10 * oracle[0]);
    }

    #[test]
    fn refined_lu_solve() {
        let a = tridiag(50, 3.0, -1.0);
        let lu = SparseLu::new(&a).unwrap();
        let b: Vec<f64> = (0..50).map(|i| (i as f64).sin()).collect();
        let (x, rel) = solve_refined(&a, &lu, &b, 2);
        assert!(rel < 1e-14);
        let ch = SparseCholesky::new(&a).unwrap();
        let y = ch.solve(&b);
        assert!(x.iter().zip(&y).all(|(p, q)| (p - q).abs() < 1e-13));
    }
}
