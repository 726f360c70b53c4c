//! Per-modality graph prior: k-NN affinity, unnormalized Laplacian
//! L = D - W, and the factor A with A A^T = L obtained from the
//! eigendecomposition of L. The factor turns the graph trace penalty
//! tr(H L H^T) into the Frobenius form ||H A||_F^2, which the solver
//! then replaces by the outlier-robust l2,1 norm.

use serde::{Deserialize, Serialize};

use crate::dense::{sym_eig, DenseMatrix};
use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Edge weighting for the k-NN affinity.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Weighting {
    /// 0/1 adjacency.
    Binary,
    /// exp(-dist^2 / sigma^2), sigma self-tuned to the median neighbor
    /// distance unless given explicitly.
    Heat,
}

/// Graph construction options surfaced through the pipeline config.
#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GraphConfig {
    pub k_nn: usize,
    pub weighting: Weighting,
    /// Heat-kernel bandwidth; `None` means self-tuned.
    pub sigma: Option<f64>,
}

impl Default for GraphConfig {
    fn default() -> Self {
        Self {
            k_nn: 5,
            weighting: Weighting::Heat,
            sigma: None,
        }
    }
}

/// The assembled per-modality prior.
#[derive(Clone, Debug)]
pub struct GraphPrior<T> {
    /// Symmetric nonnegative affinity with zero diagonal (n x n).
    pub affinity: DenseMatrix<T>,
    /// Unnormalized Laplacian L = D - W.
    pub laplacian: DenseMatrix<T>,
    /// Factor A (n x n) with A A^T = L; columns for zero eigenvalues are
    /// kept as zero columns so shapes stay fixed across modalities.
    pub factor: DenseMatrix<T>,
}

impl<T: Scalar> GraphPrior<T> {
    /// Build affinity, Laplacian and factor from data columns.
    pub fn build(x: &DenseMatrix<T>, cfg: &GraphConfig) -> Result<Self> {
        let affinity = knn_affinity(x, cfg.k_nn, cfg.weighting, cfg.sigma)?;
        let lap = laplacian(&affinity)?;
        let factor = laplacian_factor(&lap)?;
        Ok(Self {
            affinity,
            laplacian: lap,
            factor,
        })
    }
}

/// Squared Euclidean distances between columns i and j of X.
fn sq_dist<T: Scalar>(x: &DenseMatrix<T>, i: usize, j: usize) -> T {
    let mut acc = T::zero();
    for r in 0..x.rows() {
        let d = x.get(r, i) - x.get(r, j);
        acc += d * d;
    }
    acc
}

/// Symmetric k-NN affinity over the columns of X (samples as columns).
/// Each sample is connected to its `k_nn` nearest Euclidean neighbors and
/// the directed graph is symmetrized by averaging, W = (W0 + W0^T)/2.
pub fn knn_affinity<T: Scalar>(
    x: &DenseMatrix<T>,
    k_nn: usize,
    weighting: Weighting,
    sigma: Option<f64>,
) -> Result<DenseMatrix<T>> {
    let n = x.cols();
    if k_nn == 0 || k_nn >= n {
        return Err(Error::Parameter(format!(
            "knn_affinity: k_nn={} must satisfy 1 <= k_nn < n={}",
            k_nn, n
        )));
    }

    // Neighbor lists by exhaustive sort; ties broken by index for determinism.
    let mut neighbors: Vec<Vec<(usize, T)>> = Vec::with_capacity(n);
    for i in 0..n {
        let mut dists: Vec<(usize, T)> = (0..n)
            .filter(|&j| j != i)
            .map(|j| (j, sq_dist(x, i, j)))
            .collect();
        dists.sort_by(|a, b| a.1.partial_cmp(&b.1).unwrap().then(a.0.cmp(&b.0)));
        dists.truncate(k_nn);
        neighbors.push(dists);
    }

    // Self-tuned bandwidth: median squared distance over all k-NN edges.
    let sigma_sq = match (weighting, sigma) {
        (Weighting::Binary, _) => T::one(),
        (Weighting::Heat, Some(s)) => {
            let s = T::from_f64_c(s);
            s * s
        }
        (Weighting::Heat, None) => {
            let mut edge_d: Vec<T> = neighbors
                .iter()
                .flat_map(|nb| nb.iter().map(|&(_, d)| d))
                .collect();
            edge_d.sort_by(|a, b| a.partial_cmp(b).unwrap());
            let med = edge_d[edge_d.len() / 2];
            // all-duplicate data: fall back to unit bandwidth
            if med > T::zero() {
                med
            } else {
                T::one()
            }
        }
    };

    let mut w0 = DenseMatrix::zeros(n, n);
    for (i, nb) in neighbors.iter().enumerate() {
        for &(j, d) in nb {
            let weight = match weighting {
                Weighting::Binary => T::one(),
                Weighting::Heat => (-d / sigma_sq).exp(),
            };
            w0.set(i, j, weight);
        }
    }
    let half = T::from_f64_c(0.5);
    Ok(DenseMatrix::from_fn(n, n, |i, j| {
        if i == j {
            T::zero()
        } else {
            (w0.get(i, j) + w0.get(j, i)) * half
        }
    }))
}

/// Unnormalized Laplacian L = D - W.
pub fn laplacian<T: Scalar>(w: &DenseMatrix<T>) -> Result<DenseMatrix<T>> {
    if !w.is_square() {
        return Err(Error::Dimension("laplacian: W must be square".into()));
    }
    let n = w.rows();
    let tol = T::from_f64_c(1e-10);
    for i in 0..n {
        if w.get(i, i) != T::zero() {
            return Err(Error::Contract(format!(
                "laplacian: nonzero diagonal at ({i},{i})"
            )));
        }
        for j in (i + 1)..n {
            if (w.get(i, j) - w.get(j, i)).abs() > tol {
                return Err(Error::Contract(format!(
                    "laplacian: W asymmetric at ({i},{j})"
                )));
            }
            if w.get(i, j) < T::zero() {
                return Err(Error::Contract(format!(
                    "laplacian: negative weight at ({i},{j})"
                )));
            }
        }
    }
    let degrees: Vec<T> = (0..n)
        .map(|i| w.row(i).iter().copied().fold(T::zero(), |a, b| a + b))
        .collect();
    Ok(DenseMatrix::from_fn(n, n, |i, j| {
        if i == j {
            degrees[i]
        } else {
            -w.get(i, j)
        }
    }))
}

/// Factor A = Q P^{1/2} from L = Q P Q^T. Eigenvalues in [-1e-9, 0) are
/// clipped to zero; anything below -1e-6 means the input is not a
/// Laplacian and is rejected.
pub fn laplacian_factor<T: Scalar>(l: &DenseMatrix<T>) -> Result<DenseMatrix<T>> {
    let eig = sym_eig(l)?;
    let hard = T::from_f64_c(-1e-6);
    let n = eig.values.len();
    let mut factor = eig.vectors.clone();
    for (j, &ev) in eig.values.iter().enumerate() {
        if ev < hard {
            return Err(Error::Contract(format!(
                "laplacian_factor: eigenvalue {} is {}, input is not PSD",
                j, ev
            )));
        }
        let root = ev.max(T::zero()).sqrt();
        for i in 0..n {
            factor.set(i, j, factor.get(i, j) * root);
        }
    }
    Ok(factor)
}
