//! Final clustering stage: spectral clustering on the consensus
//! representation, plus the k-means subroutine it relies on.
//!
//! The affinity between samples (columns of H) is a scale-free cosine heat
//! kernel exp(-(1 - cos)/sigma), k-NN sparsified and symmetrized; a plain
//! Gaussian-on-Euclidean kernel is selectable instead.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::dense::{sym_eig, DenseMatrix};
use crate::error::{Error, Result};
use crate::scalar::Scalar;

#[derive(Clone, Debug)]
pub struct ClusterAssignment {
    pub labels: Vec<usize>,
    pub k: usize,
    pub inertia: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SpectralAffinity {
    /// exp(-(1 - cos(h_i, h_j))/sigma), sigma = mean (1 - cos) over k-NN pairs.
    Cosine,
    /// exp(-||h_i - h_j||^2 / sigma), sigma = mean squared k-NN distance.
    Gaussian,
}

#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SpectralConfig {
    pub affinity: SpectralAffinity,
    pub k_nn: usize,
    pub restarts: usize,
    pub kmeans_iters: usize,
}

impl Default for SpectralConfig {
    fn default() -> Self {
        Self {
            affinity: SpectralAffinity::Cosine,
            k_nn: 5,
            restarts: 10,
            kmeans_iters: 300,
        }
    }
}

/// Lloyd's algorithm with distance-weighted seeding and multiple restarts.
/// `points` is n x r with one sample per row. Deterministic given `seed`;
/// restart t uses an independent generator derived from seed + t.
pub fn kmeans<T: Scalar>(
    points: &DenseMatrix<T>,
    k: usize,
    restarts: usize,
    max_iters: usize,
    seed: u64,
) -> Result<ClusterAssignment> {
    let n = points.rows();
    let r = points.cols();
    if k == 0 || k > n {
        return Err(Error::Parameter(format!(
            "kmeans: k = {k} out of range for n = {n} points"
        )));
    }
    if restarts == 0 || max_iters == 0 {
        return Err(Error::Parameter(
            "kmeans: restarts and max_iters must be positive".into(),
        ));
    }
    let pts: Vec<Vec<f64>> = (0..n)
        .map(|i| {
            (0..r)
                .map(|j| points.get(i, j).to_f64().unwrap())
                .collect()
        })
        .collect();

    let mut best: Option<(Vec<usize>, f64)> = None;
    for t in 0..restarts {
        let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_add(t as u64));
        let (labels, inertia) = lloyd(&pts, k, max_iters, &mut rng);
        if best.as_ref().is_none_or(|(_, bi)| inertia < *bi) {
            best = Some((labels, inertia));
        }
    }
    let (labels, inertia) = best.unwrap();
    Ok(ClusterAssignment { labels, k, inertia })
}

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

fn lloyd(pts: &[Vec<f64>], k: usize, max_iters: usize, rng: &mut ChaCha8Rng) -> (Vec<usize>, f64) {
    let n = pts.len();
    let r = pts[0].len();

    // distance-weighted seeding
    let mut centers: Vec<Vec<f64>> = Vec::with_capacity(k);
    centers.push(pts[rng.random_range(0..n)].clone());
    let mut d2: Vec<f64> = pts.iter().map(|p| sq_dist(p, &centers[0])).collect();
    while centers.len() < k {
        let total: f64 = d2.iter().sum();
        let idx = if total <= 0.0 {
            rng.random_range(0..n)
        } else {
            let mut target = rng.random::<f64>() * total;
            let mut chosen = n - 1;
            for (i, &w) in d2.iter().enumerate() {
                target -= w;
                if target <= 0.0 {
                    chosen = i;
                    break;
                }
            }
            chosen
        };
        centers.push(pts[idx].clone());
        let c = centers.last().unwrap();
        for (i, p) in pts.iter().enumerate() {
            d2[i] = d2[i].min(sq_dist(p, c));
        }
    }

    let mut labels = vec![0usize; n];
    let mut inertia = f64::INFINITY;
    for _ in 0..max_iters {
        // assignment
        let mut new_inertia = 0.0;
        for (i, p) in pts.iter().enumerate() {
            let (mut bl, mut bd) = (0usize, f64::INFINITY);
            for (c, center) in centers.iter().enumerate() {
                let d = sq_dist(p, center);
                if d < bd {
                    bd = d;
                    bl = c;
                }
            }
            labels[i] = bl;
            new_inertia += bd;
        }
        debug_assert!(new_inertia <= inertia + 1e-12, "inertia increased in Lloyd step");
        let converged = (inertia - new_inertia).abs() <= 1e-12 * (1.0 + inertia.min(new_inertia).abs());
        inertia = new_inertia;
        if converged {
            break;
        }
        // update; empty cluster takes the point farthest from its center
        let mut sums = vec![vec![0.0f64; r]; k];
        let mut counts = vec![0usize; k];
        for (i, p) in pts.iter().enumerate() {
            counts[labels[i]] += 1;
            for (s, &x) in sums[labels[i]].iter_mut().zip(p.iter()) {
                *s += x;
            }
        }
        for c in 0..k {
            if counts[c] == 0 {
                let far = (0..n)
                    .max_by(|&a, &b| {
                        sq_dist(&pts[a], &centers[labels[a]])
                            .partial_cmp(&sq_dist(&pts[b], &centers[labels[b]]))
                            .unwrap()
                    })
                    .unwrap();
                centers[c] = pts[far].clone();
            } else {
                for (j, s) in sums[c].iter().enumerate() {
                    centers[c][j] = s / counts[c] as f64;
                }
            }
        }
    }
    (labels, inertia)
}

/// Spectral clustering on the columns of `h` (a p x n representation):
/// builds a sparse symmetric affinity, forms the symmetric normalized
/// Laplacian L_sym = I - D^{-1/2} W D^{-1/2}, embeds samples in the k
/// eigenvectors of smallest eigenvalue, row-normalizes, and runs k-means.
pub fn spectral_cluster<T: Scalar>(
    h: &DenseMatrix<T>,
    k: usize,
    seed: u64,
    config: &SpectralConfig,
) -> Result<ClusterAssignment> {
    let n = h.cols();
    if k == 0 || k > n {
        return Err(Error::Parameter(format!(
            "spectral_cluster: k = {k} out of range for n = {n} samples"
        )));
    }
    if h.max_abs().to_f64().unwrap() == 0.0 {
        return Err(Error::Contract(
            "spectral_cluster: representation is identically zero".into(),
        ));
    }
    let w = sample_affinity(h, config)?;

    // L_sym via eigenvectors of D^{-1/2} W D^{-1/2}: its LARGEST eigenpairs
    // are L_sym's smallest, so the descending eig order maps directly.
    let deg: Vec<f64> = (0..n).map(|i| (0..n).map(|j| w[i][j]).sum()).collect();
    let dinv_sqrt: Vec<f64> = deg
        .iter()
        .map(|&d| if d > 0.0 { 1.0 / d.sqrt() } else { 0.0 })
        .collect();
    let mut norm_w = DenseMatrix::<f64>::zeros(n, n);
    for i in 0..n {
        for j in 0..n {
            norm_w.set(i, j, dinv_sqrt[i] * w[i][j] * dinv_sqrt[j]);
        }
    }
    let eig = sym_eig(&norm_w)?;

    let mut embed = DenseMatrix::<f64>::zeros(n, k);
    for j in 0..k {
        for i in 0..n {
            embed.set(i, j, eig.vectors.get(i, j));
        }
    }
    // row-normalize; all-zero rows stay zero
    let mut zero_rows = 0usize;
    for i in 0..n {
        let norm: f64 = (0..k).map(|j| embed.get(i, j).powi(2)).sum::<f64>().sqrt();
        if norm > 0.0 {
            for j in 0..k {
                embed.set(i, j, embed.get(i, j) / norm);
            }
        } else {
            zero_rows += 1;
        }
    }
    if zero_rows > 0 {
        log::warn!("spectral_cluster: {zero_rows} zero rows in the eigen-embedding left unnormalized");
    }
    kmeans(&embed, k, config.restarts, config.kmeans_iters, seed)
}

/// k-NN sparsified, symmetrized affinity over the columns of `h`.
fn sample_affinity<T: Scalar>(h: &DenseMatrix<T>, config: &SpectralConfig) -> Result<Vec<Vec<f64>>> {
    let n = h.cols();
    let p = h.rows();
    if config.k_nn == 0 || config.k_nn >= n {
        return Err(Error::Parameter(format!(
            "spectral_cluster: k_nn = {} out of range for n = {n}",
            config.k_nn
        )));
    }
    let cols: Vec<Vec<f64>> = (0..n)
        .map(|j| (0..p).map(|i| h.get(i, j).to_f64().unwrap()).collect())
        .collect();

    // pairwise dissimilarity
    let mut dist = vec![vec![0.0f64; n]; n];
    match config.affinity {
        SpectralAffinity::Cosine => {
            let norms: Vec<f64> = cols
                .iter()
                .map(|c| c.iter().map(|x| x * x).sum::<f64>().sqrt())
                .collect();
            for i in 0..n {
                for j in (i + 1)..n {
                    let dot: f64 = cols[i].iter().zip(&cols[j]).map(|(a, b)| a * b).sum();
                    let cos = if norms[i] > 0.0 && norms[j] > 0.0 {
                        (dot / (norms[i] * norms[j])).clamp(-1.0, 1.0)
                    } else {
                        0.0
                    };
                    dist[i][j] = 1.0 - cos;
                    dist[j][i] = dist[i][j];
                }
            }
        }
        SpectralAffinity::Gaussian => {
            for i in 0..n {
                for j in (i + 1)..n {
                    dist[i][j] = sq_dist(&cols[i], &cols[j]);
                    dist[j][i] = dist[i][j];
                }
            }
        }
    }

    // k-NN sets (ties broken by sample index for determinism)
    let mut neighbors = vec![Vec::with_capacity(config.k_nn); n];
    let mut sigma_sum = 0.0;
    let mut sigma_count = 0usize;
    for i in 0..n {
        let mut order: Vec<usize> = (0..n).filter(|&j| j != i).collect();
        order.sort_by(|&a, &b| dist[i][a].partial_cmp(&dist[i][b]).unwrap().then(a.cmp(&b)));
        order.truncate(config.k_nn);
        for &j in &order {
            sigma_sum += dist[i][j];
            sigma_count += 1;
        }
        neighbors[i] = order;
    }
    let mut sigma = sigma_sum / sigma_count as f64;
    if !(sigma > 0.0) {
        sigma = 1.0; // duplicate samples: kernel value degenerates to 1
    }

    let mut w = vec![vec![0.0f64; n]; n];
    for i in 0..n {
        for &j in &neighbors[i] {
            w[i][j] = (-dist[i][j] / sigma).exp();
        }
    }
    // symmetrize (average) and clear the diagonal
    for i in 0..n {
        for j in (i + 1)..n {
            let v = 0.5 * (w[i][j] + w[j][i]);
            w[i][j] = v;
            w[j][i] = v;
        }
        w[i][i] = 0.0;
    }
    Ok(w)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    fn blob_points(centers: &[Vec<f64>], per: usize, sigma: f64, seed: u64) -> (DenseMatrix<f64>, Vec<usize>) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let dim = centers[0].len();
        let n = centers.len() * per;
        let mut m = DenseMatrix::<f64>::zeros(n, dim);
        let mut labels = Vec::with_capacity(n);
        for (c, center) in centers.iter().enumerate() {
            for s in 0..per {
                let row = c * per + s;
                for j in 0..dim {
                    // Box-Muller
                    let u1: f64 = rng.random::<f64>().max(1e-12);
                    let u2: f64 = rng.random();
                    let g = (-2.0 * u1.ln()).sqrt() * (2.0 * std::f64::consts::PI * u2).cos();
                    m.set(row, j, center[j] + sigma * g);
                }
                labels.push(c);
            }
        }
        (m, labels)
    }

    #[test]
    fn kmeans_single_cluster() {
        let (pts, _) = blob_points(&[vec![1.0, 2.0]], 20, 0.5, 1);
        let a = kmeans(&pts, 1, 3, 100, 0).unwrap();
        assert!(a.labels.iter().all(|&l| l == 0));
        // inertia equals total squared deviation from the mean
        let mut mean = [0.0f64; 2];
        for i in 0..20 {
            mean[0] += pts.get(i, 0) / 20.0;
            mean[1] += pts.get(i, 1) / 20.0;
        }
        let ss: f64 = (0..20)
            .map(|i| (pts.get(i, 0) - mean[0]).powi(2) + (pts.get(i, 1) - mean[1]).powi(2))
            .sum();
        assert!((a.inertia - ss).abs() < 1e-9);
    }

    #[test]
    fn kmeans_saturation() {
        let (pts, _) = blob_points(&[vec![0.0, 0.0], vec![5.0, 5.0]], 3, 0.3, 2);
        let a = kmeans(&pts, 6, 10, 100, 0).unwrap();
        assert!(a.inertia < 1e-12);
        let mut seen = a.labels.clone();
        seen.sort_unstable();
        seen.dedup();
        assert_eq!(seen.len(), 6);
    }

    #[test]
    fn kmeans_separated_blobs_exact() {
        // gap 10 sigma in each coordinate
        let (pts, truth) = blob_points(&[vec![0.0, 0.0], vec![3.0, 3.0]], 25, 0.3, 3);
        for seed in 0..10u64 {
            let a = kmeans(&pts, 2, 10, 300, seed).unwrap();
            let acc = crate::metrics::accuracy(&truth, &a.labels).unwrap();
            assert_eq!(acc, 1.0, "seed {seed}");
        }
    }

    #[test]
    fn kmeans_rejects_bad_k() {
        let (pts, _) = blob_points(&[vec![0.0]], 4, 0.1, 4);
        assert!(kmeans(&pts, 5, 1, 10, 0).is_err());
        assert!(kmeans(&pts, 0, 1, 10, 0).is_err());
    }

    #[test]
    fn kmeans_deterministic() {
        let (pts, _) = blob_points(&[vec![0.0, 0.0], vec![2.0, 0.0], vec![0.0, 2.0]], 15, 0.5, 5);
        let a = kmeans(&pts, 3, 10, 300, 42).unwrap();
        let b = kmeans(&pts, 3, 10, 300, 42).unwrap();
        assert_eq!(a.labels, b.labels);
        assert_eq!(a.inertia, b.inertia);
    }

    #[test]
    fn spectral_block_constant_columns() {
        // two exact blocks in a 3 x 8 representation
        let mut h = DenseMatrix::<f64>::zeros(3, 8);
        for j in 0..4 {
            h.set(0, j, 1.0);
            h.set(1, j, 0.2);
        }
        for j in 4..8 {
            h.set(1, j, 0.3);
            h.set(2, j, 1.0);
        }
        let cfg = SpectralConfig { k_nn: 3, ..Default::default() };
        let a = spectral_cluster(&h, 2, 7, &cfg).unwrap();
        let truth = vec![0, 0, 0, 0, 1, 1, 1, 1];
        assert_eq!(crate::metrics::accuracy(&truth, &a.labels).unwrap(), 1.0);
    }

    #[test]
    fn spectral_scale_invariant() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let h = DenseMatrix::<f64>::from_fn(4, 30, |_, _| rng.random::<f64>());
        let h_scaled = h.scale(37.5);
        let cfg = SpectralConfig::default();
        let a = spectral_cluster(&h, 3, 1, &cfg).unwrap();
        let b = spectral_cluster(&h_scaled, 3, 1, &cfg).unwrap();
        assert_eq!(a.labels, b.labels);
    }

    #[test]
    fn spectral_zero_representation_errors() {
        let h = DenseMatrix::<f64>::zeros(4, 10);
        assert!(spectral_cluster(&h, 2, 0, &SpectralConfig::default()).is_err());
    }

    #[test]
    fn spectral_planted_gaussian_columns() {
        // 3 clusters of columns around different nonnegative centers
        let centers = [
            vec![4.0, 0.5, 0.5, 0.5, 0.5],
            vec![0.5, 4.0, 0.5, 0.5, 0.5],
            vec![0.5, 0.5, 4.0, 0.5, 0.5],
        ];
        for seed in 0..10u64 {
            let (pts, truth) = blob_points(&centers, 20, 0.25, 100 + seed);
            let h = pts.transpose(); // 5 x 60, columns are samples
            let a = spectral_cluster(&h, 3, seed, &SpectralConfig::default()).unwrap();
            let acc = crate::metrics::accuracy(&truth, &a.labels).unwrap();
            assert!(acc >= 0.95, "seed {seed}: acc = {acc}");
        }
    }

    #[test]
    fn gaussian_affinity_variant_works() {
        let centers = [vec![0.0, 0.0, 0.0], vec![6.0, 6.0, 6.0]];
        let (pts, truth) = blob_points(&centers, 20, 0.4, 9);
        let h = pts.transpose();
        let cfg = SpectralConfig { affinity: SpectralAffinity::Gaussian, ..Default::default() };
        let a = spectral_cluster(&h, 2, 0, &cfg).unwrap();
        assert_eq!(crate::metrics::accuracy(&truth, &a.labels).unwrap(), 1.0);
    }
}
