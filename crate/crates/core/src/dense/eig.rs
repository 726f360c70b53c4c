//! Symmetric eigendecomposition via Householder tridiagonalization and
//! the implicit-shift QL iteration (classic EISPACK tred2/tql2 scheme).

use super::DenseMatrix;
use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Eigendecomposition S = Q diag(values) Q^T with orthonormal columns in Q.
/// Eigenvalues are sorted descending; eigenvector k is column k of `vectors`.
#[derive(Clone, Debug)]
pub struct SymEig<T> {
    pub values: Vec<T>,
    pub vectors: DenseMatrix<T>,
}

impl<T: Scalar> SymEig<T> {
    /// Rebuild Q diag(values) Q^T (test/diagnostic helper).
    pub fn reconstruct(&self) -> DenseMatrix<T> {
        let n = self.values.len();
        let mut scaled = self.vectors.clone();
        for i in 0..n {
            for j in 0..n {
                let v = scaled.get(i, j) * self.values[j];
                scaled.set(i, j, v);
            }
        }
        scaled.matmul_nt(&self.vectors).unwrap()
    }
}

/// Eigendecomposition of a symmetric matrix. The input is symmetrized as
/// (S + S^T)/2 before factorization; non-square input is an error.
pub fn sym_eig<T: Scalar>(s: &DenseMatrix<T>) -> Result<SymEig<T>> {
    if !s.is_square() {
        return Err(Error::Dimension(format!(
            "sym_eig: matrix is {}x{}, expected square",
            s.rows(),
            s.cols()
        )));
    }
    let n = s.rows();
    if n == 0 {
        return Ok(SymEig {
            values: vec![],
            vectors: DenseMatrix::zeros(0, 0),
        });
    }
    let half = T::from_f64_c(0.5);
    let mut v = DenseMatrix::from_fn(n, n, |i, j| (s.get(i, j) + s.get(j, i)) * half);
    let mut d = vec![T::zero(); n];
    let mut e = vec![T::zero(); n];
    tred2(&mut v, &mut d, &mut e);
    tql2(&mut v, &mut d, &mut e)?;
    sort_descending(&mut v, &mut d);
    Ok(SymEig {
        values: d,
        vectors: v,
    })
}

fn tred2<T: Scalar>(v: &mut DenseMatrix<T>, d: &mut [T], e: &mut [T]) {
    let n = v.rows();
    for i in 0..n {
        d[i] = v.get(n - 1, i);
    }

    // Householder reduction to tridiagonal form.
    for i in (1..n).rev() {
        let mut scale = T::zero();
        let mut h = T::zero();
        for item in d.iter().take(i) {
            scale += item.abs();
        }
        if scale == T::zero() {
            e[i] = d[i - 1];
            for j in 0..i {
                d[j] = v.get(i - 1, j);
                v.set(i, j, T::zero());
                v.set(j, i, T::zero());
            }
        } else {
            for item in d.iter_mut().take(i) {
                *item /= scale;
                h += *item * *item;
            }
            let mut f = d[i - 1];
            let mut g = h.sqrt();
            if f > T::zero() {
                g = -g;
            }
            e[i] = scale * g;
            h -= f * g;
            d[i - 1] = f - g;
            for item in e.iter_mut().take(i) {
                *item = T::zero();
            }

            for j in 0..i {
                f = d[j];
                v.set(j, i, f);
                let mut g = e[j] + v.get(j, j) * f;
                for k in (j + 1)..i {
                    g += v.get(k, j) * d[k];
                    e[k] += v.get(k, j) * f;
                }
                e[j] = g;
            }
            f = T::zero();
            for j in 0..i {
                e[j] /= h;
                f += e[j] * d[j];
            }
            let hh = f / (h + h);
            for j in 0..i {
                e[j] -= hh * d[j];
            }
            for j in 0..i {
                f = d[j];
                let g = e[j];
                for k in j..i {
                    let val = v.get(k, j) - (f * e[k] + g * d[k]);
                    v.set(k, j, val);
                }
                d[j] = v.get(i - 1, j);
                v.set(i, j, T::zero());
            }
        }
        d[i] = h;
    }

    // Accumulate transformations.
    for i in 0..n.saturating_sub(1) {
        v.set(n - 1, i, v.get(i, i));
        v.set(i, i, T::one());
        let h = d[i + 1];
        if h != T::zero() {
            for (k, item) in d.iter_mut().enumerate().take(i + 1) {
                *item = v.get(k, i + 1) / h;
            }
            for j in 0..=i {
                let mut g = T::zero();
                for k in 0..=i {
                    g += v.get(k, i + 1) * v.get(k, j);
                }
                for (k, item) in d.iter().enumerate().take(i + 1) {
                    let val = v.get(k, j) - g * *item;
                    v.set(k, j, val);
                }
            }
        }
        for k in 0..=i {
            v.set(k, i + 1, T::zero());
        }
    }
    for j in 0..n {
        d[j] = v.get(n - 1, j);
        v.set(n - 1, j, T::zero());
    }
    v.set(n - 1, n - 1, T::one());
    e[0] = T::zero();
}

fn tql2<T: Scalar>(v: &mut DenseMatrix<T>, d: &mut [T], e: &mut [T]) -> Result<()> {
    let n = v.rows();
    for i in 1..n {
        e[i - 1] = e[i];
    }
    e[n - 1] = T::zero();

    let two = T::from_f64_c(2.0);
    let mut f = T::zero();
    let mut tst1 = T::zero();
    for l in 0..n {
        tst1 = tst1.max(d[l].abs() + e[l].abs());
        let mut m = l;
        while m < n {
            if e[m].abs() <= tst1 * T::epsilon() {
                break;
            }
            m += 1;
        }
        if m >= n {
            m = n - 1;
        }

        if m > l {
            let mut iter = 0;
            loop {
                iter += 1;
                if iter >= 50 {
                    return Err(Error::Solver(
                        "sym_eig: QL iteration failed to converge".into(),
                    ));
                }

                // Implicit shift.
                let mut g = d[l];
                let mut p = (d[l + 1] - g) / (two * e[l]);
                let mut r = p.hypot(T::one());
                if p < T::zero() {
                    r = -r;
                }
                d[l] = e[l] / (p + r);
                d[l + 1] = e[l] * (p + r);
                let dl1 = d[l + 1];
                let mut h = g - d[l];
                for item in d.iter_mut().take(n).skip(l + 2) {
                    *item -= h;
                }
                f += h;

                p = d[m];
                let mut c = T::one();
                let mut c2 = c;
                let mut c3 = c;
                let el1 = e[l + 1];
                let mut s = T::zero();
                let mut s2 = T::zero();
                for i in (l..m).rev() {
                    c3 = c2;
                    c2 = c;
                    s2 = s;
                    g = c * e[i];
                    h = c * p;
                    r = p.hypot(e[i]);
                    e[i + 1] = s * r;
                    s = e[i] / r;
                    c = p / r;
                    p = c * d[i] - s * g;
                    d[i + 1] = h + s * (c * g + s * d[i]);

                    for k in 0..n {
                        h = v.get(k, i + 1);
                        v.set(k, i + 1, s * v.get(k, i) + c * h);
                        v.set(k, i, c * v.get(k, i) - s * h);
                    }
                }
                p = -s * s2 * c3 * el1 * e[l] / dl1;
                e[l] = s * p;
                d[l] = c * p;

                if e[l].abs() <= tst1 * T::epsilon() {
                    break;
                }
            }
        }
        d[l] += f;
        e[l] = T::zero();
    }
    Ok(())
}

fn sort_descending<T: Scalar>(v: &mut DenseMatrix<T>, d: &mut [T]) {
    let n = d.len();
    for i in 0..n.saturating_sub(1) {
        let mut k = i;
        let mut p = d[i];
        for j in (i + 1)..n {
            if d[j] > p {
                k = j;
                p = d[j];
            }
        }
        if k != i {
            d[k] = d[i];
            d[i] = p;
            for j in 0..n {
                let tmp = v.get(j, i);
                v.set(j, i, v.get(j, k));
                v.set(j, k, tmp);
            }
        }
    }
}
