//! Singular value decomposition by one-sided Jacobi rotations, and the
//! Moore-Penrose pseudo-inverse built on it. One-sided Jacobi keeps full
//! relative accuracy for small singular values, which matters when the
//! pseudo-inverse meets rank-deficient Gram matrices.

use super::{DenseMatrix, PINV_RCOND};
use crate::error::Result;
use crate::scalar::Scalar;

/// Thin SVD: M = U diag(sigma) V^T with singular values descending.
#[derive(Clone, Debug)]
pub struct Svd<T> {
    pub u: DenseMatrix<T>,
    pub sigma: Vec<T>,
    pub vt: DenseMatrix<T>,
}

/// One-sided Jacobi SVD. Always succeeds for finite input.
pub fn svd<T: Scalar>(m: &DenseMatrix<T>) -> Svd<T> {
    let transposed = m.rows() < m.cols();
    let a0 = if transposed { m.transpose() } else { m.clone() };
    let (rows, cols) = a0.shape();

    // Work column-major: cols of A as contiguous vectors.
    let mut a: Vec<Vec<T>> = (0..cols).map(|j| a0.col(j)).collect();
    let mut v: Vec<Vec<T>> = (0..cols)
        .map(|j| {
            let mut e = vec![T::zero(); cols];
            e[j] = T::one();
            e
        })
        .collect();

    let tol = T::epsilon();
    let max_sweeps = 60;
    for _ in 0..max_sweeps {
        let mut rotated = false;
        for i in 0..cols {
            for j in (i + 1)..cols {
                let (mut alpha, mut beta, mut gamma) = (T::zero(), T::zero(), T::zero());
                for k in 0..rows {
                    alpha += a[i][k] * a[i][k];
                    beta += a[j][k] * a[j][k];
                    gamma += a[i][k] * a[j][k];
                }
                if alpha == T::zero() || beta == T::zero() {
                    continue;
                }
                if gamma.abs() <= tol * (alpha * beta).sqrt() {
                    continue;
                }
                rotated = true;
                let zeta = (beta - alpha) / (T::from_f64_c(2.0) * gamma);
                let t = {
                    let sign = if zeta >= T::zero() { T::one() } else { -T::one() };
                    sign / (zeta.abs() + (T::one() + zeta * zeta).sqrt())
                };
                let c = T::one() / (T::one() + t * t).sqrt();
                let s = c * t;
                for k in 0..rows {
                    let ai = a[i][k];
                    let aj = a[j][k];
                    a[i][k] = c * ai - s * aj;
                    a[j][k] = s * ai + c * aj;
                }
                for k in 0..cols {
                    let vi = v[i][k];
                    let vj = v[j][k];
                    v[i][k] = c * vi - s * vj;
                    v[j][k] = s * vi + c * vj;
                }
            }
        }
        if !rotated {
            break;
        }
    }

    // Column norms are the singular values; normalize into U.
    let mut order: Vec<usize> = (0..cols).collect();
    let norms: Vec<T> = a
        .iter()
        .map(|col| col.iter().map(|&x| x * x).fold(T::zero(), |p, q| p + q).sqrt())
        .collect();
    order.sort_by(|&x, &y| norms[y].partial_cmp(&norms[x]).unwrap());

    let mut sigma = Vec::with_capacity(cols);
    let mut u = DenseMatrix::zeros(rows, cols);
    let mut vt = DenseMatrix::zeros(cols, cols);
    for (out_j, &src) in order.iter().enumerate() {
        let sg = norms[src];
        sigma.push(sg);
        if sg > T::zero() {
            for k in 0..rows {
                u.set(k, out_j, a[src][k] / sg);
            }
        }
        for k in 0..cols {
            vt.set(out_j, k, v[src][k]);
        }
    }

    if transposed {
        // M^T = U S V^T  =>  M = V S U^T
        let mut vt_new = DenseMatrix::zeros(sigma.len(), u.rows());
        for i in 0..sigma.len() {
            for k in 0..u.rows() {
                vt_new.set(i, k, u.get(k, i));
            }
        }
        Svd {
            u: vt.transpose(),
            sigma,
            vt: vt_new,
        }
    } else {
        Svd { u, sigma, vt }
    }
}

/// Moore-Penrose pseudo-inverse with the default relative cutoff
/// (sigma zeroed when sigma <= max(rows,cols) * sigma_max * 1e-12).
pub fn pinv<T: Scalar>(m: &DenseMatrix<T>) -> DenseMatrix<T> {
    pinv_with_cutoff(m, T::from_f64_c(PINV_RCOND))
}

pub fn pinv_with_cutoff<T: Scalar>(m: &DenseMatrix<T>, rcond: T) -> DenseMatrix<T> {
    let Svd { u, sigma, vt } = svd(m);
    let smax = sigma.first().copied().unwrap_or_else(T::zero);
    let dim = T::from_f64_c(m.rows().max(m.cols()) as f64);
    let cutoff = dim * smax * rcond;
    // M+ = V S+ U^T
    let k = sigma.len();
    let mut out = DenseMatrix::zeros(m.cols(), m.rows());
    for (idx, &sg) in sigma.iter().enumerate().take(k) {
        if sg <= cutoff || sg == T::zero() {
            continue;
        }
        let inv = T::one() / sg;
        for i in 0..m.cols() {
            let vi = vt.get(idx, i) * inv;
            if vi == T::zero() {
                continue;
            }
            for j in 0..m.rows() {
                let cur = out.get(i, j);
                out.set(i, j, cur + vi * u.get(j, idx));
            }
        }
    }
    out
}

/// Solve the SPD-ish square system M x = b through the pseudo-inverse.
/// Convenience wrapper for small subproblems.
pub fn pinv_solve<T: Scalar>(m: &DenseMatrix<T>, b: &DenseMatrix<T>) -> Result<DenseMatrix<T>> {
    pinv(m).matmul(b)
}
