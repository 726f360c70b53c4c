//! Synthetic multi-modal dataset generation. The complementarity mechanism
//! is a per-modality `merge_map` that collapses true clusters into observed
//! blobs, so no single modality can separate everything but the union of
//! modalities can. Gaussian noise and uniform outliers are injected per
//! modality.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::data::ModalityData;
use crate::dense::DenseMatrix;
use crate::error::{Error, Result};

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SynthSpec {
    pub n_clusters: usize,
    pub samples_per_cluster: usize,
    pub modality_dims: Vec<usize>,
    /// Per modality, a map of length `n_clusters` sending each true cluster
    /// to the blob it is observed as. `None` means identity everywhere.
    #[serde(default)]
    pub merge_map: Option<Vec<Vec<usize>>>,
    pub noise_sigma: f64,
    #[serde(default)]
    pub outlier_fraction: f64,
    pub seed: u64,
}

impl SynthSpec {
    pub fn validate(&self) -> Result<()> {
        if self.n_clusters == 0 || self.samples_per_cluster == 0 {
            return Err(Error::Config(
                "synth: n_clusters and samples_per_cluster must be positive".into(),
            ));
        }
        if self.modality_dims.is_empty() || self.modality_dims.iter().any(|&d| d == 0) {
            return Err(Error::Config("synth: modality_dims must be positive".into()));
        }
        if !(self.noise_sigma >= 0.0) {
            return Err(Error::Config("synth: noise_sigma must be >= 0".into()));
        }
        if !(0.0..1.0).contains(&self.outlier_fraction) {
            return Err(Error::Config(
                "synth: outlier_fraction must lie in [0, 1)".into(),
            ));
        }
        if let Some(maps) = &self.merge_map {
            if maps.len() != self.modality_dims.len() {
                return Err(Error::Config(format!(
                    "synth: merge_map has {} entries for {} modalities",
                    maps.len(),
                    self.modality_dims.len()
                )));
            }
            for (v, map) in maps.iter().enumerate() {
                if map.len() != self.n_clusters {
                    return Err(Error::Config(format!(
                        "synth: merge_map[{v}] has length {} but there are {} clusters",
                        map.len(),
                        self.n_clusters
                    )));
                }
                if let Some(&bad) = map.iter().find(|&&b| b >= self.n_clusters) {
                    return Err(Error::Config(format!(
                        "synth: merge_map[{v}] references unknown cluster {bad}"
                    )));
                }
            }
        }
        Ok(())
    }

    pub fn n_samples(&self) -> usize {
        self.n_clusters * self.samples_per_cluster
    }

    /// Two-modality complementary scenario: three true clusters, the first
    /// modality merges clusters {0,1} and the second merges {1,2}, so each
    /// modality alone sees only two blobs.
    pub fn complementary_pair(
        samples_per_cluster: usize,
        dims: (usize, usize),
        noise_sigma: f64,
        outlier_fraction: f64,
        seed: u64,
    ) -> Self {
        Self {
            n_clusters: 3,
            samples_per_cluster,
            modality_dims: vec![dims.0, dims.1],
            merge_map: Some(vec![vec![0, 0, 2], vec![0, 1, 1]]),
            noise_sigma,
            outlier_fraction,
            seed,
        }
    }

    /// V-modality generalization: modality v merges clusters {v, v+1 mod k}.
    /// Every cluster stays un-merged in at least one modality when V < k
    /// or V == k >= 3.
    pub fn complementary_multi(
        n_modalities: usize,
        n_clusters: usize,
        samples_per_cluster: usize,
        dim: usize,
        noise_sigma: f64,
        outlier_fraction: f64,
        seed: u64,
    ) -> Self {
        let maps = (0..n_modalities)
            .map(|v| {
                (0..n_clusters)
                    .map(|c| {
                        let merged = (v + 1) % n_clusters;
                        if c == merged {
                            v % n_clusters
                        } else {
                            c
                        }
                    })
                    .collect()
            })
            .collect();
        Self {
            n_clusters,
            samples_per_cluster,
            modality_dims: vec![dim; n_modalities],
            merge_map: Some(maps),
            noise_sigma,
            outlier_fraction,
            seed,
        }
    }
}

/// Deterministic generation: same spec (including seed) gives bit-identical
/// outputs. Returns the modalities and the true labels in sample order
/// (cluster-major: sample i belongs to cluster i / samples_per_cluster).
pub fn generate(spec: &SynthSpec) -> Result<(Vec<ModalityData<f64>>, Vec<usize>)> {
    spec.validate()?;
    let n = spec.n_samples();
    let truth: Vec<usize> = (0..n).map(|i| i / spec.samples_per_cluster).collect();

    let mut modalities = Vec::with_capacity(spec.modality_dims.len());
    for (v, &d) in spec.modality_dims.iter().enumerate() {
        let mut rng = ChaCha8Rng::seed_from_u64(spec.seed.wrapping_add(7919 * (v as u64 + 1)));

        // blob centers on scaled simplex vertices; pairwise center distance
        // s*sqrt(2) is set to 10 * noise_sigma * sqrt(d) (positive floor at
        // sqrt(d) for the noiseless case)
        let sep = (10.0 * spec.noise_sigma * (d as f64).sqrt() / std::f64::consts::SQRT_2)
            .max((d as f64).sqrt());
        let blob_of = |c: usize| -> usize {
            match &spec.merge_map {
                Some(maps) => maps[v][c],
                None => c,
            }
        };
        let center = |blob: usize, row: usize| -> f64 {
            if row == blob % d {
                sep
            } else {
                0.0
            }
        };

        let noise = Normal::new(0.0, spec.noise_sigma.max(f64::MIN_POSITIVE)).map_err(|e| {
            Error::Config(format!("synth: invalid noise distribution: {e}"))
        })?;
        let mut x = DenseMatrix::<f64>::zeros(d, n);
        for (j, &c) in truth.iter().enumerate() {
            let blob = blob_of(c);
            for i in 0..d {
                let dev = if spec.noise_sigma > 0.0 {
                    noise.sample(&mut rng)
                } else {
                    0.0
                };
                x.set(i, j, center(blob, i) + dev);
            }
        }

        // outliers: replace whole columns with uniform noise over the
        // current value range
        let n_out = (spec.outlier_fraction * n as f64).floor() as usize;
        if n_out > 0 {
            let max_val = (0..d)
                .flat_map(|i| (0..n).map(move |j| (i, j)))
                .map(|(i, j)| x.get(i, j))
                .fold(f64::NEG_INFINITY, f64::max)
                .max(1.0);
            let mut idx: Vec<usize> = (0..n).collect();
            idx.shuffle(&mut rng);
            for &j in idx.iter().take(n_out) {
                for i in 0..d {
                    x.set(i, j, rng.random::<f64>() * max_val);
                }
            }
        }

        // shift each feature row up so the matrix is nonnegative
        for i in 0..d {
            let row_min = (0..n).map(|j| x.get(i, j)).fold(f64::INFINITY, f64::min);
            if row_min < 0.0 {
                for j in 0..n {
                    x.set(i, j, x.get(i, j) - row_min);
                }
            }
        }

        modalities.push(ModalityData {
            name: format!("modality{v}"),
            x,
            prior: None,
        });
    }
    Ok((modalities, truth))
}
