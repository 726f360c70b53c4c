//! Layer-wise pre-training of the auto-encoder-like NMF stack.
//!
//! Each layer solves min_{Z,H >= 0} ||X - ZH||_F^2 + ||H - Z^T X||_F^2 by
//! multiplicative updates, then the next layer factorizes the resulting H.
//! Pre-training only initializes the fine-tuning solver, so accuracy
//! requirements are mild and the iteration budget small.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::dense::{pos_neg_split, DenseMatrix};
use crate::error::{Error, Result};
use crate::scalar::Scalar;

#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PretrainConfig {
    pub per_layer_iters: usize,
    pub tol: f64,
}

impl Default for PretrainConfig {
    fn default() -> Self {
        Self {
            per_layer_iters: 200,
            tol: 1e-5,
        }
    }
}

/// Per-modality stack of factor pairs: Z_1 (d x p_1), Z_i (p_{i-1} x p_i),
/// H_i (p_i x n), all elementwise nonnegative, layer sizes strictly
/// decreasing (under-complete).
#[derive(Clone, Debug)]
pub struct LayerStack<T> {
    pub layer_sizes: Vec<usize>,
    pub factors: Vec<(DenseMatrix<T>, DenseMatrix<T>)>,
}

impl<T: Scalar> LayerStack<T> {
    pub fn depth(&self) -> usize {
        self.factors.len()
    }

    /// Product Z_1 Z_2 ... Z_upto (exclusive of deeper layers); identity
    /// semantics when upto == 0 are handled by callers.
    pub fn basis_product(&self, upto: usize) -> Result<DenseMatrix<T>> {
        let mut phi = self.factors[0].0.clone();
        for (z, _) in self.factors.iter().take(upto).skip(1) {
            phi = phi.matmul(z)?;
        }
        Ok(phi)
    }

    pub fn last_h(&self) -> &DenseMatrix<T> {
        &self.factors.last().expect("empty stack").1
    }
}

/// Shift rows (features) with negative entries up to min zero. Returns the
/// shifted matrix and whether any shift was applied.
pub fn shift_to_nonneg<T: Scalar>(x: &DenseMatrix<T>) -> (DenseMatrix<T>, bool) {
    let mut shifted = x.clone();
    let mut any = false;
    for i in 0..x.rows() {
        let row_min = x.row(i).iter().copied().fold(T::zero(), |a, b| a.min(b));
        if row_min < T::zero() {
            any = true;
            for v in shifted.row_mut(i) {
                *v = *v - row_min;
            }
        }
    }
    (shifted, any)
}

/// Decoder + encoder objective for one layer.
pub fn layer_objective<T: Scalar>(
    x: &DenseMatrix<T>,
    z: &DenseMatrix<T>,
    h: &DenseMatrix<T>,
) -> T {
    let dec = x.sub(&z.matmul(h).unwrap()).unwrap().norm_fro();
    let enc = h.sub(&z.matmul_tn(x).unwrap()).unwrap().norm_fro();
    dec * dec + enc * enc
}

/// Single-layer pre-training by multiplicative updates with an empirical
/// monotonicity guard: a step that raises the objective beyond 1e-9 slack
/// is rolled back and the denominator damping increased.
pub fn pretrain_layer<T: Scalar>(
    x: &DenseMatrix<T>,
    p: usize,
    max_iters: usize,
    tol: T,
    seed: u64,
) -> Result<(DenseMatrix<T>, DenseMatrix<T>)> {
    let (d, n) = x.shape();
    if p > d.min(n) || p == 0 {
        return Err(Error::Parameter(format!(
            "pretrain_layer: p={} must satisfy 1 <= p <= min(d={}, n={})",
            p, d, n
        )));
    }
    let (x, shifted) = shift_to_nonneg(x);
    if shifted {
        log::warn!("pretrain_layer: negative input entries, features shifted to min 0");
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mean = x.iter().copied().fold(T::zero(), |a, b| a + b)
        / T::from_f64_c((d * n) as f64);
    let scale = (mean.max(T::from_f64_c(1e-8)) / T::from_f64_c(p as f64)).sqrt();
    let mut z = DenseMatrix::from_fn(d, p, |_, _| T::from_f64_c(rng.random::<f64>()) * scale);
    let mut h = DenseMatrix::from_fn(p, n, |_, _| T::from_f64_c(rng.random::<f64>()) * scale);

    let mut eps = T::from_f64_c(1e-10);
    let eps_cap = T::from_f64_c(1e-2);
    let slack = T::from_f64_c(1e-9);
    let xxt = x.matmul_nt(&x)?; // d x d, reused every iteration

    let mut obj = layer_objective(&x, &z, &h);
    let mut iter = 0;
    while iter < max_iters {
        iter += 1;
        let z_new = update_z_single(&x, &xxt, &z, &h, eps)?;
        let h_new = update_h_single(&x, &z_new, &h, eps)?;
        let obj_new = layer_objective(&x, &z_new, &h_new);

        if obj_new > obj + slack {
            // guard trip: roll back and damp harder
            if eps >= eps_cap {
                break;
            }
            eps = eps * T::from_f64_c(10.0);
            continue;
        }
        let rel = (obj - obj_new).abs() / obj.max(T::from_f64_c(1e-30));
        z = z_new;
        h = h_new;
        obj = obj_new;
        if rel < tol {
            break;
        }
    }
    Ok((z, h))
}

/// Z update specialized to a single layer (Phi = I):
/// Z <- Z .* [2 X H^T]_+ / (X X^T Z + Z H H^T + eps).
fn update_z_single<T: Scalar>(
    x: &DenseMatrix<T>,
    xxt: &DenseMatrix<T>,
    z: &DenseMatrix<T>,
    h: &DenseMatrix<T>,
    eps: T,
) -> Result<DenseMatrix<T>> {
    let two = T::from_f64_c(2.0);
    let numer = x.matmul_nt(h)?.scale(two).map(|v| v.max(T::zero()));
    let hht = h.matmul_nt(h)?;
    let denom = xxt.matmul(z)?.add(&z.matmul(&hht)?)?;
    Ok(DenseMatrix::from_fn(z.rows(), z.cols(), |i, j| {
        z.get(i, j) * numer.get(i, j) / (denom.get(i, j) + eps)
    }))
}

/// H update for a single layer (Phi = Z): the square-root multiplicative
/// rule with positive/negative part splits.
fn update_h_single<T: Scalar>(
    x: &DenseMatrix<T>,
    z: &DenseMatrix<T>,
    h: &DenseMatrix<T>,
    eps: T,
) -> Result<DenseMatrix<T>> {
    let two = T::from_f64_c(2.0);
    let ztx = z.matmul_tn(x)?.scale(two);
    let ztz = z.matmul_tn(z)?;
    let ztzh = ztz.matmul(h)?;
    let (ztx_p, ztx_n) = pos_neg_split(&ztx);
    let (ztzh_p, ztzh_n) = pos_neg_split(&ztzh);
    let (h_p, h_n) = pos_neg_split(h);
    Ok(DenseMatrix::from_fn(h.rows(), h.cols(), |i, j| {
        let num = ztx_p.get(i, j) + ztzh_n.get(i, j) + h_n.get(i, j) + eps;
        let den = ztx_n.get(i, j) + ztzh_p.get(i, j) + h_p.get(i, j) + eps;
        h.get(i, j) * (num / den).sqrt()
    }))
}

/// Greedy layer-wise pre-training: H_0 = X, then (Z_i, H_i) factorizes
/// H_{i-1} for each layer size in turn.
pub fn pretrain_stack<T: Scalar>(
    x: &DenseMatrix<T>,
    layer_sizes: &[usize],
    per_layer_iters: usize,
    tol: T,
    seed: u64,
) -> Result<LayerStack<T>> {
    if layer_sizes.is_empty() {
        return Err(Error::Parameter("pretrain_stack: no layer sizes".into()));
    }
    for w in layer_sizes.windows(2) {
        if w[1] >= w[0] {
            return Err(Error::Parameter(format!(
                "pretrain_stack: layer sizes must be strictly decreasing, got {:?}",
                layer_sizes
            )));
        }
    }
    if layer_sizes[0] >= x.rows() {
        return Err(Error::Parameter(format!(
            "pretrain_stack: first layer size {} must be < feature dim {}",
            layer_sizes[0],
            x.rows()
        )));
    }

    let mut factors = Vec::with_capacity(layer_sizes.len());
    let mut current = x.clone();
    for (i, &p) in layer_sizes.iter().enumerate() {
        let (z, h) = pretrain_layer(&current, p, per_layer_iters, tol, seed.wrapping_add(i as u64))?;
        current = h.clone();
        factors.push((z, h));
    }
    Ok(LayerStack {
        layer_sizes: layer_sizes.to_vec(),
        factors,
    })
}
