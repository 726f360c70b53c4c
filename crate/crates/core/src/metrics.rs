//! External clustering metrics: ACC (optimal one-to-one matching via the
//! Hungarian algorithm), NMI (geometric-mean normalization), adjusted Rand
//! index, and pair-counting precision / recall / F-score. All metrics are
//! invariant to relabeling of either argument.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// The six-metric report consumed by the experiment pipeline.
#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct MetricReport {
    pub acc: f64,
    pub nmi: f64,
    pub ari: f64,
    pub f_score: f64,
    pub precision: f64,
    pub recall: f64,
}

impl MetricReport {
    pub fn compute(truth: &[usize], pred: &[usize]) -> Result<Self> {
        let (precision, recall, f_score) = pairwise_prf(truth, pred)?;
        Ok(Self {
            acc: accuracy(truth, pred)?,
            nmi: nmi(truth, pred)?,
            ari: adjusted_rand(truth, pred)?,
            f_score,
            precision,
            recall,
        })
    }

    pub fn as_array(&self) -> [f64; 6] {
        [
            self.acc,
            self.nmi,
            self.ari,
            self.f_score,
            self.precision,
            self.recall,
        ]
    }

    pub const NAMES: [&'static str; 6] = ["acc", "nmi", "ari", "f_score", "precision", "recall"];
}

fn check_lengths(truth: &[usize], pred: &[usize], min_len: usize) -> Result<()> {
    if truth.len() != pred.len() {
        return Err(Error::Parameter(format!(
            "label lengths differ: {} vs {}",
            truth.len(),
            pred.len()
        )));
    }
    if truth.len() < min_len {
        return Err(Error::Parameter(format!(
            "need at least {} samples, got {}",
            min_len,
            truth.len()
        )));
    }
    Ok(())
}

/// Contingency table between two labelings, with labels compacted to
/// 0..k via first-appearance order.
fn contingency(truth: &[usize], pred: &[usize]) -> (Vec<Vec<usize>>, usize, usize) {
    let compact = |labels: &[usize]| {
        let mut map = std::collections::HashMap::new();
        let mut out = Vec::with_capacity(labels.len());
        for &l in labels {
            let next = map.len();
            out.push(*map.entry(l).or_insert(next));
        }
        (out, map.len())
    };
    let (t, kt) = compact(truth);
    let (p, kp) = compact(pred);
    let mut table = vec![vec![0usize; kp]; kt];
    for (&a, &b) in t.iter().zip(p.iter()) {
        table[a][b] += 1;
    }
    (table, kt, kp)
}

/// Clustering accuracy under the best one-to-one matching of cluster ids,
/// found by minimum-cost assignment on the negated contingency table.
pub fn accuracy(truth: &[usize], pred: &[usize]) -> Result<f64> {
    check_lengths(truth, pred, 1)?;
    let n = truth.len();
    let (table, kt, kp) = contingency(truth, pred);
    let k = kt.max(kp);
    // pad to square; costs are negated counts so min-cost == max-match
    let cost: Vec<Vec<f64>> = (0..k)
        .map(|i| {
            (0..k)
                .map(|j| {
                    if i < kt && j < kp {
                        -(table[i][j] as f64)
                    } else {
                        0.0
                    }
                })
                .collect()
        })
        .collect();
    let assignment = hungarian(&cost);
    let mut matched = 0usize;
    for (i, &j) in assignment.iter().enumerate() {
        if i < kt && j < kp {
            matched += table[i][j];
        }
    }
    Ok(matched as f64 / n as f64)
}

/// Minimum-cost perfect assignment on a square cost matrix; returns the
/// column assigned to each row. O(k^3) potentials-based implementation.
pub fn hungarian(cost: &[Vec<f64>]) -> Vec<usize> {
    let n = cost.len();
    if n == 0 {
        return vec![];
    }
    // 1-based internals, p[j] = row matched to column j
    let mut u = vec![0.0f64; n + 1];
    let mut v = vec![0.0f64; n + 1];
    let mut p = vec![0usize; n + 1];
    let mut way = vec![0usize; n + 1];
    for i in 1..=n {
        p[0] = i;
        let mut j0 = 0usize;
        let mut minv = vec![f64::INFINITY; n + 1];
        let mut used = vec![false; n + 1];
        loop {
            used[j0] = true;
            let i0 = p[j0];
            let mut delta = f64::INFINITY;
            let mut j1 = 0usize;
            for j in 1..=n {
                if used[j] {
                    continue;
                }
                let cur = cost[i0 - 1][j - 1] - u[i0] - v[j];
                if cur < minv[j] {
                    minv[j] = cur;
                    way[j] = j0;
                }
                if minv[j] < delta {
                    delta = minv[j];
                    j1 = j;
                }
            }
            for j in 0..=n {
                if used[j] {
                    u[p[j]] += delta;
                    v[j] -= delta;
                } else {
                    minv[j] -= delta;
                }
            }
            j0 = j1;
            if p[j0] == 0 {
                break;
            }
        }
        loop {
            let j1 = way[j0];
            p[j0] = p[j1];
            j0 = j1;
            if j0 == 0 {
                break;
            }
        }
    }
    let mut row_to_col = vec![0usize; n];
    for j in 1..=n {
        if p[j] > 0 {
            row_to_col[p[j] - 1] = j - 1;
        }
    }
    row_to_col
}

/// Normalized mutual information I(U;V)/sqrt(H(U) H(V)), natural logs.
/// Degenerate single-cluster partitions (zero entropy) give 0.
pub fn nmi(truth: &[usize], pred: &[usize]) -> Result<f64> {
    check_lengths(truth, pred, 1)?;
    let n = truth.len() as f64;
    let (table, kt, kp) = contingency(truth, pred);
    let row_sums: Vec<f64> = table.iter().map(|r| r.iter().sum::<usize>() as f64).collect();
    let col_sums: Vec<f64> = (0..kp)
        .map(|j| table.iter().map(|r| r[j]).sum::<usize>() as f64)
        .collect();

    let entropy = |sums: &[f64]| -> f64 {
        -sums
            .iter()
            .filter(|&&s| s > 0.0)
            .map(|&s| (s / n) * (s / n).ln())
            .sum::<f64>()
    };
    let hu = entropy(&row_sums);
    let hv = entropy(&col_sums);
    if hu <= 0.0 || hv <= 0.0 {
        return Ok(0.0);
    }
    let mut mi = 0.0;
    for i in 0..kt {
        for j in 0..kp {
            let nij = table[i][j] as f64;
            if nij > 0.0 {
                mi += (nij / n) * ((n * nij) / (row_sums[i] * col_sums[j])).ln();
            }
        }
    }
    Ok((mi / (hu * hv).sqrt()).clamp(0.0, 1.0))
}

fn choose2(x: usize) -> f64 {
    (x as f64) * (x as f64 - 1.0) / 2.0
}

/// Adjusted Rand index via the pair-counting contingency formula.
pub fn adjusted_rand(truth: &[usize], pred: &[usize]) -> Result<f64> {
    check_lengths(truth, pred, 2)?;
    let n = truth.len();
    let (table, kt, kp) = contingency(truth, pred);
    let sum_ij: f64 = table
        .iter()
        .flat_map(|r| r.iter())
        .map(|&c| choose2(c))
        .sum();
    let sum_a: f64 = table.iter().map(|r| choose2(r.iter().sum())).sum();
    let sum_b: f64 = (0..kp)
        .map(|j| choose2(table.iter().map(|r| r[j]).sum()))
        .sum();
    let _ = kt;
    let total = choose2(n);
    let expected = sum_a * sum_b / total;
    let max_index = 0.5 * (sum_a + sum_b);
    let denom = max_index - expected;
    if denom.abs() < f64::EPSILON {
        // both partitions degenerate in the same way
        return Ok(1.0);
    }
    Ok((sum_ij - expected) / denom)
}

/// Pair-counting precision / recall / F-score. Over all unordered sample
/// pairs: TP = same cluster in both labelings, precision = TP / pairs same
/// in pred, recall = TP / pairs same in truth. Undefined denominators give
/// metric 0 (the degenerate-partition flag).
pub fn pairwise_prf(truth: &[usize], pred: &[usize]) -> Result<(f64, f64, f64)> {
    check_lengths(truth, pred, 2)?;
    let (table, _, kp) = contingency(truth, pred);
    let tp: f64 = table
        .iter()
        .flat_map(|r| r.iter())
        .map(|&c| choose2(c))
        .sum();
    let same_truth: f64 = table.iter().map(|r| choose2(r.iter().sum())).sum();
    let same_pred: f64 = (0..kp)
        .map(|j| choose2(table.iter().map(|r| r[j]).sum()))
        .sum();

    let precision = if same_pred > 0.0 { tp / same_pred } else { 0.0 };
    let recall = if same_truth > 0.0 { tp / same_truth } else { 0.0 };
    let f = if precision + recall > 0.0 {
        2.0 * precision * recall / (precision + recall)
    } else {
        0.0
    };
    Ok((precision, recall, f))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_labels(n: usize, k: usize, seed: u64) -> Vec<usize> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..n).map(|_| rng.random_range(0..k)).collect()
    }

    /// Exhaustive-permutation accuracy oracle for small k.
    fn acc_bruteforce(truth: &[usize], pred: &[usize]) -> f64 {
        let k = truth
            .iter()
            .chain(pred.iter())
            .max()
            .map_or(0, |&m| m + 1);
        let mut perm: Vec<usize> = (0..k).collect();
        let mut best = 0usize;
        // Heap's algorithm
        fn heaps(perm: &mut Vec<usize>, size: usize, truth: &[usize], pred: &[usize], best: &mut usize) {
            if size == 1 {
                let matched = truth
                    .iter()
                    .zip(pred.iter())
                    .filter(|(&t, &p)| t == perm[p])
                    .count();
                *best = (*best).max(matched);
                return;
            }
            for i in 0..size {
                heaps(perm, size - 1, truth, pred, best);
                if size % 2 == 0 {
                    perm.swap(i, size - 1);
                } else {
                    perm.swap(0, size - 1);
                }
            }
        }
        heaps(&mut perm, k, truth, pred, &mut best);
        best as f64 / truth.len() as f64
    }

    /// Brute-force pair enumeration for ARI and P/R/F.
    fn pairs_bruteforce(truth: &[usize], pred: &[usize]) -> (f64, f64, f64, f64) {
        let n = truth.len();
        let (mut a, mut b, mut c, mut d) = (0.0f64, 0.0, 0.0, 0.0);
        for i in 0..n {
            for j in (i + 1)..n {
                let same_t = truth[i] == truth[j];
                let same_p = pred[i] == pred[j];
                match (same_t, same_p) {
                    (true, true) => a += 1.0,
                    (true, false) => c += 1.0,
                    (false, true) => b += 1.0,
                    (false, false) => d += 1.0,
                }
            }
        }
        let total = a + b + c + d;
        let expected = (a + c) * (a + b) / total;
        let max_index = 0.5 * ((a + c) + (a + b));
        let ari = if (max_index - expected).abs() < f64::EPSILON {
            1.0
        } else {
            (a - expected) / (max_index - expected)
        };
        let precision = if a + b > 0.0 { a / (a + b) } else { 0.0 };
        let recall = if a + c > 0.0 { a / (a + c) } else { 0.0 };
        (ari, precision, recall, d)
    }

    #[test]
    fn accuracy_examples() {
        assert_eq!(accuracy(&[0, 0, 1, 1], &[1, 1, 0, 0]).unwrap(), 1.0);
        assert_eq!(accuracy(&[0, 1, 0, 1], &[0, 0, 1, 1]).unwrap(), 0.5);
        assert_eq!(accuracy(&[2, 2, 5], &[2, 2, 5]).unwrap(), 1.0);
        assert!(accuracy(&[], &[]).is_err());
    }

    #[test]
    fn accuracy_matches_bruteforce() {
        for seed in 0..200u64 {
            let k = 2 + (seed % 5) as usize; // up to 6 clusters
            let truth = random_labels(12, k, seed);
            let pred = random_labels(12, k, seed + 10_000);
            let fast = accuracy(&truth, &pred).unwrap();
            let slow = acc_bruteforce(&truth, &pred);
            assert!(
                (fast - slow).abs() < 1e-12,
                "seed {seed}: {fast} vs {slow}"
            );
        }
    }

    #[test]
    fn nmi_examples() {
        assert!((nmi(&[0, 0, 1, 1], &[1, 1, 0, 0]).unwrap() - 1.0).abs() < 1e-12);
        assert!(nmi(&[0, 0, 1, 1], &[0, 1, 0, 1]).unwrap().abs() < 1e-12);
        assert_eq!(nmi(&[0, 0, 0], &[0, 1, 2]).unwrap(), 0.0); // degenerate truth
    }

    #[test]
    fn nmi_matches_scalar_loop() {
        for seed in 0..50u64 {
            let truth = random_labels(30, 4, seed);
            let pred = random_labels(30, 3, seed + 999);
            let fast = nmi(&truth, &pred).unwrap();

            // plain scalar-loop contingency recomputation
            let n = 30.0f64;
            let mut nij = std::collections::HashMap::new();
            let mut ai = std::collections::HashMap::new();
            let mut bj = std::collections::HashMap::new();
            for i in 0..30 {
                *nij.entry((truth[i], pred[i])).or_insert(0.0f64) += 1.0;
                *ai.entry(truth[i]).or_insert(0.0f64) += 1.0;
                *bj.entry(pred[i]).or_insert(0.0f64) += 1.0;
            }
            let mut mi = 0.0;
            for ((t, p), &c) in &nij {
                mi += (c / n) * ((n * c) / (ai[t] * bj[p])).ln();
            }
            let h = |m: &std::collections::HashMap<usize, f64>| {
                -m.values().map(|&s| (s / n) * (s / n).ln()).sum::<f64>()
            };
            let slow = if h(&ai) <= 0.0 || h(&bj) <= 0.0 {
                0.0
            } else {
                mi / (h(&ai) * h(&bj)).sqrt()
            };
            assert!((fast - slow).abs() < 1e-12);
        }
    }

    #[test]
    fn ari_examples() {
        assert_eq!(adjusted_rand(&[0, 1, 0, 1], &[1, 0, 1, 0]).unwrap(), 1.0);
        // all-one-cluster pred vs balanced truth: expected-index case
        assert!(adjusted_rand(&[0, 0, 1, 1], &[0, 0, 0, 0]).unwrap().abs() < 1e-12);
        assert!(adjusted_rand(&[0], &[0]).is_err());
    }

    #[test]
    fn ari_and_prf_match_pair_enumeration() {
        for seed in 0..50u64 {
            let truth = random_labels(20, 3, seed);
            let pred = random_labels(20, 4, seed + 31);
            let (ari_o, p_o, r_o, _) = pairs_bruteforce(&truth, &pred);
            assert!((adjusted_rand(&truth, &pred).unwrap() - ari_o).abs() < 1e-12);
            let (p, r, f) = pairwise_prf(&truth, &pred).unwrap();
            assert!((p - p_o).abs() < 1e-12);
            assert!((r - r_o).abs() < 1e-12);
            if p + r > 0.0 {
                assert!((f - 2.0 * p * r / (p + r)).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn prf_examples() {
        let (p, r, f) = pairwise_prf(&[0, 0, 1, 1], &[0, 0, 0, 0]).unwrap();
        assert!((p - 1.0 / 3.0).abs() < 1e-12);
        assert_eq!(r, 1.0);
        assert!((f - 0.5).abs() < 1e-12);

        let (p, r, f) = pairwise_prf(&[0, 1, 2, 0], &[0, 1, 2, 0]).unwrap();
        assert_eq!((p, r, f), (1.0, 1.0, 1.0));

        // all singletons: no positive pairs in pred
        let (p, r, _) = pairwise_prf(&[0, 0, 1, 1], &[0, 1, 2, 3]).unwrap();
        assert_eq!(p, 0.0);
        assert_eq!(r, 0.0);
    }

    #[test]
    fn relabeling_invariance() {
        let truth = random_labels(25, 4, 5);
        let pred = random_labels(25, 3, 6);
        let relabel = |l: &[usize], off: usize| l.iter().map(|&x| (x + off) % 7 + 40).collect::<Vec<_>>();
        let t2 = relabel(&truth, 3);
        let p2 = relabel(&pred, 5);
        let m1 = MetricReport::compute(&truth, &pred).unwrap();
        let m2 = MetricReport::compute(&t2, &p2).unwrap();
        for (a, b) in m1.as_array().iter().zip(m2.as_array().iter()) {
            assert!((a - b).abs() < 1e-14);
        }
    }

    #[test]
    fn ari_one_iff_identical_up_to_relabeling() {
        let truth = random_labels(15, 3, 8);
        let same: Vec<usize> = truth.iter().map(|&x| (x + 2) % 3).collect();
        assert!((adjusted_rand(&truth, &same).unwrap() - 1.0).abs() < 1e-12);
        let mut diff = truth.clone();
        diff[0] = (diff[0] + 1) % 3;
        assert!(adjusted_rand(&truth, &diff).unwrap() < 1.0);
    }
}
