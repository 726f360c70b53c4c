//! Sylvester equation solver A X + X B = C for symmetric PSD A and B.
//!
//! Both coefficient matrices in this pipeline are symmetric, so instead of
//! a Schur-based solver we diagonalize both sides: with A = U diag(l) U^T
//! and B = W diag(n) W^T, the transformed system decouples entry-wise into
//! Y_ij = C'_ij / (l_i + n_j), C' = U^T C W, X = U Y W^T.

use super::eig::{sym_eig, SymEig};
use super::{DenseMatrix, SYLVESTER_PENCIL_TOL};
use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Solve A X + X B = C with A (p x p) and B (q x q) symmetric PSD and
/// lambda_i(A) + lambda_j(B) > 0 for all pairs.
pub fn solve_sylvester<T: Scalar>(
    a: &DenseMatrix<T>,
    b: &DenseMatrix<T>,
    c: &DenseMatrix<T>,
) -> Result<DenseMatrix<T>> {
    let eig_a = sym_eig(a)?;
    let eig_b = sym_eig(b)?;
    solve_sylvester_precomp(&eig_a, &eig_b, c)
}

/// Same as [`solve_sylvester`] but with both eigendecompositions supplied by
/// the caller. The ADMM loop reuses the (fixed) graph-side factorization
/// across iterations this way.
pub fn solve_sylvester_precomp<T: Scalar>(
    eig_a: &SymEig<T>,
    eig_b: &SymEig<T>,
    c: &DenseMatrix<T>,
) -> Result<DenseMatrix<T>> {
    let p = eig_a.values.len();
    let q = eig_b.values.len();
    if c.shape() != (p, q) {
        return Err(Error::Dimension(format!(
            "solve_sylvester: C is {}x{}, expected {}x{}",
            c.rows(),
            c.cols(),
            p,
            q
        )));
    }

    let scale = eig_a
        .values
        .iter()
        .chain(eig_b.values.iter())
        .fold(T::one(), |acc, &v| acc.max(v.abs()));
    let tol = scale * T::from_f64_c(SYLVESTER_PENCIL_TOL);

    // C' = U^T C W
    let ct = eig_a.vectors.matmul_tn(c)?.matmul(&eig_b.vectors)?;
    let mut y = DenseMatrix::zeros(p, q);
    for i in 0..p {
        for j in 0..q {
            let denom = eig_a.values[i] + eig_b.values[j];
            if denom <= tol {
                return Err(Error::Solver(format!(
                    "solve_sylvester: singular pencil, lambda_A[{}]={} + lambda_B[{}]={} <= tolerance {}",
                    i, eig_a.values[i], j, eig_b.values[j], tol
                )));
            }
            y.set(i, j, ct.get(i, j) / denom);
        }
    }
    eig_a.vectors.matmul(&y)?.matmul_nt(&eig_b.vectors)
}
