//! Independent numerical oracles used by the test suites. These routines
//! deliberately avoid the production code paths they are used to check:
//! plain Gaussian elimination and scalar loops only.

use crate::dense::DenseMatrix;
use crate::scalar::Scalar;

/// Solve the dense linear system M x = rhs by Gaussian elimination with
/// partial pivoting. Panics on singular systems (fine for oracle use).
pub fn gauss_solve<T: Scalar>(m: &DenseMatrix<T>, rhs: &[T]) -> Vec<T> {
    let n = m.rows();
    assert_eq!(m.cols(), n);
    assert_eq!(rhs.len(), n);
    let mut a: Vec<Vec<T>> = (0..n).map(|i| m.row(i).to_vec()).collect();
    let mut b = rhs.to_vec();

    for col in 0..n {
        let mut piv = col;
        for r in (col + 1)..n {
            if a[r][col].abs() > a[piv][col].abs() {
                piv = r;
            }
        }
        assert!(a[piv][col].abs() > T::epsilon(), "gauss_solve: singular");
        a.swap(col, piv);
        b.swap(col, piv);
        for r in (col + 1)..n {
            let f = a[r][col] / a[col][col];
            if f == T::zero() {
                continue;
            }
            for k in col..n {
                let v = a[col][k];
                a[r][k] = a[r][k] - f * v;
            }
            let bc = b[col];
            b[r] = b[r] - f * bc;
        }
    }
    let mut x = vec![T::zero(); n];
    for row in (0..n).rev() {
        let mut acc = b[row];
        for k in (row + 1)..n {
            acc = acc - a[row][k] * x[k];
        }
        x[row] = acc / a[row][row];
    }
    x
}

/// Vec-form Sylvester oracle: solves (I (x) A + B^T (x) I) vec(X) = vec(C)
/// with column-major vectorization, then reshapes back to p x q.
pub fn sylvester_kron_solve<T: Scalar>(
    a: &DenseMatrix<T>,
    b: &DenseMatrix<T>,
    c: &DenseMatrix<T>,
) -> DenseMatrix<T> {
    let p = a.rows();
    let q = b.rows();
    let n = p * q;
    // column-major vec: index (i, j) -> j * p + i
    let mut big = DenseMatrix::zeros(n, n);
    for j in 0..q {
        for i in 0..p {
            let row = j * p + i;
            for k in 0..p {
                let cur = big.get(row, j * p + k);
                big.set(row, j * p + k, cur + a.get(i, k));
            }
            for l in 0..q {
                let cur = big.get(row, l * p + i);
                big.set(row, l * p + i, cur + b.get(l, j));
            }
        }
    }
    let mut rhs = vec![T::zero(); n];
    for j in 0..q {
        for i in 0..p {
            rhs[j * p + i] = c.get(i, j);
        }
    }
    let x = gauss_solve(&big, &rhs);
    DenseMatrix::from_fn(p, q, |i, j| x[j * p + i])
}

/// Central finite-difference gradient of a scalar function of a matrix.
pub fn fd_gradient<T: Scalar>(
    f: &dyn Fn(&DenseMatrix<T>) -> T,
    at: &DenseMatrix<T>,
    step: T,
) -> DenseMatrix<T> {
    let mut grad = DenseMatrix::zeros(at.rows(), at.cols());
    let two = T::from_f64_c(2.0);
    for i in 0..at.rows() {
        for j in 0..at.cols() {
            let mut plus = at.clone();
            plus.set(i, j, at.get(i, j) + step);
            let mut minus = at.clone();
            minus.set(i, j, at.get(i, j) - step);
            grad.set(i, j, (f(&plus) - f(&minus)) / (two * step));
        }
    }
    grad
}
