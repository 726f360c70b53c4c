//! Fine-tuning solver: alternating minimization / ADMM over the full
//! objective
//!
//!   sum_v ( ||X - Z_1..Z_m H_m||_F^2 + ||H_m - Z_m^T..Z_1^T X||_F^2
//!           + beta ||H_m A||_{2,1} + lambda ||H_m - G H*||_{2,1} )
//!
//! with auxiliary variables M1 = H_m A and M2 = H_m - G H*, multipliers
//! L1..L3, penalties mu1..mu3, and a nonnegative slack s tied to H_m.
//! The H_m subproblem is a Sylvester equation whose graph-side coefficient
//! mu1 * A A^T is fixed, so its eigendecomposition is computed once per
//! modality and reused every iteration.

use serde::{Deserialize, Serialize};

use crate::data::{check_sample_counts, ModalityData};
use crate::dense::{
    l21_norm, pinv, pos_neg_split, solve_sylvester_precomp, sym_eig, DenseMatrix, SymEig,
};
use crate::error::{Error, Result};
use crate::graph::{GraphConfig, GraphPrior};
use crate::pretrain::{pretrain_stack, shift_to_nonneg, LayerStack, PretrainConfig};
use crate::scalar::Scalar;

/// Solver hyper-parameters. `encoder_term` is the AE ablation switch; the
/// GR/CR ablations are expressed by zeroing `beta` / `lambda`.
#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AdmmConfig {
    pub beta: f64,
    pub lambda: f64,
    pub mu1: f64,
    pub mu2: f64,
    pub mu3: f64,
    pub max_iters: usize,
    pub tol: f64,
    pub eps_guard: f64,
    pub encoder_term: bool,
    /// Repetitions of the multiplicative Z_i / H_i sub-updates per outer
    /// iteration. The multiplicative steps converge linearly with a rate
    /// close to one, so a few repetitions per outer pass tighten those
    /// blocks without changing any fixed point.
    pub inner_mu_iters: usize,
}

impl Default for AdmmConfig {
    fn default() -> Self {
        Self {
            beta: 0.01,
            lambda: 0.01,
            mu1: 1.0,
            mu2: 1.0,
            mu3: 1.0,
            max_iters: 150,
            tol: 1e-4,
            eps_guard: 1e-10,
            encoder_term: true,
            inner_mu_iters: 1,
        }
    }
}

impl AdmmConfig {
    pub fn validate(&self) -> Result<()> {
        if self.beta < 0.0 || self.lambda < 0.0 {
            return Err(Error::Parameter("beta and lambda must be >= 0".into()));
        }
        if self.mu1 <= 0.0 || self.mu2 <= 0.0 || self.mu3 <= 0.0 {
            return Err(Error::Parameter("penalties mu1..mu3 must be > 0".into()));
        }
        if self.max_iters == 0 {
            return Err(Error::Parameter("max_iters must be >= 1".into()));
        }
        if self.eps_guard <= 0.0 {
            return Err(Error::Parameter("eps_guard must be > 0".into()));
        }
        if self.inner_mu_iters == 0 {
            return Err(Error::Parameter("inner_mu_iters must be >= 1".into()));
        }
        Ok(())
    }
}

/// Per-iteration diagnostics, one record per outer iteration.
#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct IterTrace {
    pub iter: usize,
    /// Full objective value at the end of the iteration.
    pub objective: f64,
    /// ||M1 - H_m A||_F summed over modalities.
    pub residual_m1: f64,
    /// ||M2 + G H* - H_m||_F summed over modalities.
    pub residual_m2: f64,
    /// ||s - H_m||_F summed over modalities.
    pub residual_s: f64,
    /// Largest entry-wise change of H_m / H* this iteration.
    pub max_update_delta: f64,
    /// Smallest entry over all Z_i, H_i (i<m) and s; must never go below 0.
    pub min_nonneg: f64,
}

/// Per-modality solver state.
#[derive(Clone, Debug)]
pub struct ModalityState<T> {
    pub name: String,
    /// Data, shifted to nonnegativity if the raw features had negatives.
    pub x: DenseMatrix<T>,
    pub stack: LayerStack<T>,
    /// Graph factor A (n x n) with A A^T = L.
    pub a: DenseMatrix<T>,
    /// Eigendecomposition of L = A A^T, reused by the Sylvester solve.
    pub lap_eig: SymEig<T>,
    pub g: DenseMatrix<T>,
    pub m1: DenseMatrix<T>,
    pub m2: DenseMatrix<T>,
    pub l1: DenseMatrix<T>,
    pub l2: DenseMatrix<T>,
    pub l3: DenseMatrix<T>,
    pub s: DenseMatrix<T>,
}

impl<T: Scalar> ModalityState<T> {
    pub fn hm(&self) -> &DenseMatrix<T> {
        self.stack.last_h()
    }

    fn set_hm(&mut self, hm: DenseMatrix<T>) {
        let last = self.stack.factors.len() - 1;
        self.stack.factors[last].1 = hm;
    }

    /// Phi = Z_1 ... Z_count; `None` encodes the identity (count == 0).
    fn phi(&self, count: usize) -> Result<Option<DenseMatrix<T>>> {
        if count == 0 {
            return Ok(None);
        }
        Ok(Some(self.stack.basis_product(count)?))
    }
}

/// Whole solver state: per-modality blocks plus the shared consensus H*.
#[derive(Clone, Debug)]
pub struct AdmmState<T> {
    pub modalities: Vec<ModalityState<T>>,
    pub hstar: DenseMatrix<T>,
    pub config: AdmmConfig,
}

fn phi_t<T: Scalar>(phi: &Option<DenseMatrix<T>>, x: &DenseMatrix<T>) -> Result<DenseMatrix<T>> {
    match phi {
        Some(p) => p.matmul_tn(x),
        None => Ok(x.clone()),
    }
}

fn phi_t_phi<T: Scalar>(phi: &Option<DenseMatrix<T>>, dim: usize) -> Result<DenseMatrix<T>> {
    match phi {
        Some(p) => p.matmul_tn(p),
        None => Ok(DenseMatrix::identity(dim)),
    }
}

impl<T: Scalar> AdmmState<T> {
    pub fn n_modalities(&self) -> usize {
        self.modalities.len()
    }

    pub fn depth(&self) -> usize {
        self.modalities[0].stack.depth()
    }

    fn eps(&self) -> T {
        T::from_f64_c(self.config.eps_guard)
    }

    /// Multiplicative update for Z_i (layer index 0-based), Eq.-7 style:
    /// Z <- Z .* [2 Phi^T X H^T]_+ / (Phi^T X X^T Phi Z + Phi^T Phi Z H H^T + eps).
    pub fn update_z(&mut self, v: usize, i: usize) -> Result<()> {
        let eps = self.eps();
        let enc = self.config.encoder_term;
        let st = &self.modalities[v];
        let phi = st.phi(i)?;
        let (z, h) = &st.stack.factors[i];
        let ptx = phi_t(&phi, &st.x)?;

        let numer_scale = if enc { T::from_f64_c(2.0) } else { T::one() };
        let numer = ptx.matmul_nt(h)?.scale(numer_scale).map(|x| x.max(T::zero()));

        let hht = h.matmul_nt(h)?;
        let ptp = phi_t_phi(&phi, st.x.rows())?;
        let mut denom = ptp.matmul(z)?.matmul(&hht)?;
        if enc {
            // encoder contribution: Phi^T X X^T Phi Z
            denom = denom.add(&ptx.matmul_nt(&ptx)?.matmul(z)?)?;
        }

        let z_new = DenseMatrix::from_fn(z.rows(), z.cols(), |r, c| {
            z.get(r, c) * numer.get(r, c) / (denom.get(r, c) + eps)
        });
        self.modalities[v].stack.factors[i].0 = z_new;
        Ok(())
    }

    /// Square-root multiplicative update for H_i, i < m (Eq.-8 style),
    /// with Phi = Z_1 ... Z_i (inclusive).
    pub fn update_h_mid(&mut self, v: usize, i: usize) -> Result<()> {
        let m = self.depth();
        if i + 1 >= m {
            return Err(Error::Contract(format!(
                "update_h_mid: layer {} is the last layer; H_m has its own update",
                i
            )));
        }
        let eps = self.eps();
        let enc = self.config.encoder_term;
        let st = &self.modalities[v];
        let phi = st.phi(i + 1)?; // product through layer i inclusive
        let h = &st.stack.factors[i].1;
        let ptx_scale = if enc { T::from_f64_c(2.0) } else { T::one() };
        let ptx = phi_t(&phi, &st.x)?.scale(ptx_scale);
        let ptph = phi_t_phi(&phi, st.x.rows())?.matmul(h)?;

        let (ptx_p, ptx_n) = pos_neg_split(&ptx);
        let (ptph_p, ptph_n) = pos_neg_split(&ptph);
        let (h_p, h_n) = pos_neg_split(h);

        let h_new = DenseMatrix::from_fn(h.rows(), h.cols(), |r, c| {
            let (mut num, mut den) = (
                ptx_p.get(r, c) + ptph_n.get(r, c) + eps,
                ptx_n.get(r, c) + ptph_p.get(r, c) + eps,
            );
            if enc {
                num += h_n.get(r, c);
                den += h_p.get(r, c);
            }
            h.get(r, c) * (num / den).sqrt()
        });
        self.modalities[v].stack.factors[i].1 = h_new;
        Ok(())
    }

    /// H_m update: stationarity of the augmented Lagrangian in H_m is the
    /// Sylvester equation
    ///   [2 Phi^T Phi + (mu2 + mu3 + 2) I] H_m + H_m (mu1 A A^T) = RHS,
    ///   RHS = 4 Phi^T X + L1 A^T + L2 + L3 + mu1 M1 A^T
    ///         + mu2 (M2 + G H*) + mu3 s
    /// (the encoder term contributes the +2 I and half of the 4 Phi^T X).
    pub fn update_hm(&mut self, v: usize) -> Result<()> {
        let cfg = self.config;
        let enc = cfg.encoder_term;
        let m = self.depth();
        let hstar = self.hstar.clone();
        let st = &self.modalities[v];
        let phi = st.phi(m - 1)?;
        let p = st.stack.layer_sizes[m - 1];

        let (mu1, mu2, mu3) = (
            T::from_f64_c(cfg.mu1),
            T::from_f64_c(cfg.mu2),
            T::from_f64_c(cfg.mu3),
        );
        let two = T::from_f64_c(2.0);

        // Left coefficient K = c_phi Phi^T Phi + (mu2 + mu3 + c_enc) I
        let phi_full = match (&phi, &st.stack.factors[m - 1].0) {
            (Some(pr), z_last) => Some(pr.matmul(z_last)?),
            (None, z_last) => Some(z_last.clone()),
        };
        let ptp = phi_t_phi(&phi_full, st.x.rows())?;
        let shift = mu2 + mu3 + if enc { two } else { T::zero() };
        let k = ptp
            .scale(two)
            .add(&DenseMatrix::identity(p).scale(shift))?;

        // RHS
        let data_scale = if enc { T::from_f64_c(4.0) } else { two };
        let ptx = phi_t(&phi_full, &st.x)?.scale(data_scale);
        let ghs = st.g.matmul(&hstar)?;
        let rhs = ptx
            .add(&st.l1.matmul_nt(&st.a)?)?
            .add(&st.l2)?
            .add(&st.l3)?
            .add(&st.m1.matmul_nt(&st.a)?.scale(mu1))?
            .add(&st.m2.add(&ghs)?.scale(mu2))?
            .add(&st.s.scale(mu3))?;

        let eig_k = sym_eig(&k)?;
        let eig_b = SymEig {
            values: st.lap_eig.values.iter().map(|&x| x * mu1).collect(),
            vectors: st.lap_eig.vectors.clone(),
        };
        let hm = solve_sylvester_precomp(&eig_k, &eig_b, &rhs)?;
        self.modalities[v].set_hm(hm);
        Ok(())
    }

    /// G = ((H_m - M2) H*^T - (1/mu2) L2 H*^T) (H* H*^T)^+.
    pub fn update_g(&mut self, v: usize) -> Result<()> {
        let mu2 = T::from_f64_c(self.config.mu2);
        let hstar = &self.hstar;
        let st = &self.modalities[v];
        let lhs = st
            .hm()
            .sub(&st.m2)?
            .sub(&st.l2.scale(T::one() / mu2))?
            .matmul_nt(hstar)?;
        let gram = hstar.matmul_nt(hstar)?;
        let g = lhs.matmul(&pinv(&gram))?;
        self.modalities[v].g = g;
        Ok(())
    }

    /// Shared consensus update, aggregating the stationarity condition over
    /// every modality: H* = (sum_v G^T G)^+ sum_v G^T ((H_m - M2) - L2/mu2).
    pub fn update_hstar(&mut self) -> Result<()> {
        let mu2 = T::from_f64_c(self.config.mu2);
        let p = self.hstar.rows();
        let n = self.hstar.cols();
        let mut gram = DenseMatrix::zeros(p, p);
        let mut rhs = DenseMatrix::zeros(p, n);
        for st in &self.modalities {
            gram = gram.add(&st.g.matmul_tn(&st.g)?)?;
            let target = st.hm().sub(&st.m2)?.sub(&st.l2.scale(T::one() / mu2))?;
            rhs = rhs.add(&st.g.matmul_tn(&target)?)?;
        }
        self.hstar = pinv(&gram).matmul(&rhs)?;
        Ok(())
    }

    /// One reweighted (IRLS) step for M1:
    /// M1 = (beta S1 + mu1 I)^-1 (mu1 H_m A - L1), S1 diagonal with
    /// 1/max(||row_i(M1_prev)||, eps_guard).
    pub fn update_m1(&mut self, v: usize) -> Result<()> {
        let beta = T::from_f64_c(self.config.beta);
        let mu1 = T::from_f64_c(self.config.mu1);
        let eps = self.eps();
        let st = &self.modalities[v];
        let target = st.hm().matmul(&st.a)?.scale(mu1).sub(&st.l1)?;
        let m1 = reweighted_rows(&st.m1, &target, beta, mu1, eps);
        self.modalities[v].m1 = m1;
        Ok(())
    }

    /// Same reweighted step for M2 with weight lambda and penalty mu2:
    /// M2 = (lambda S2 + mu2 I)^-1 (mu2 (H_m - G H*) - L2).
    pub fn update_m2(&mut self, v: usize) -> Result<()> {
        let lambda = T::from_f64_c(self.config.lambda);
        let mu2 = T::from_f64_c(self.config.mu2);
        let eps = self.eps();
        let hstar = &self.hstar;
        let st = &self.modalities[v];
        let ghs = st.g.matmul(hstar)?;
        let target = st.hm().sub(&ghs)?.scale(mu2).sub(&st.l2)?;
        let m2 = reweighted_rows(&st.m2, &target, lambda, mu2, eps);
        self.modalities[v].m2 = m2;
        Ok(())
    }

    /// Gradient-ascent step on the multipliers, then the slack projection:
    /// L1 += mu1 (M1 - H_m A); L2 += mu2 (M2 + G H* - H_m);
    /// L3 += mu3 (s - H_m); s = max(0, H_m - L3/mu3).
    pub fn update_duals(&mut self, v: usize) -> Result<()> {
        let (mu1, mu2, mu3) = (
            T::from_f64_c(self.config.mu1),
            T::from_f64_c(self.config.mu2),
            T::from_f64_c(self.config.mu3),
        );
        let hstar = self.hstar.clone();
        let st = &mut self.modalities[v];
        let hm = st.stack.last_h().clone();

        let r1 = st.m1.sub(&hm.matmul(&st.a)?)?;
        st.l1 = st.l1.add(&r1.scale(mu1))?;

        let r2 = st.m2.add(&st.g.matmul(&hstar)?)?.sub(&hm)?;
        st.l2 = st.l2.add(&r2.scale(mu2))?;

        let r3 = st.s.sub(&hm)?;
        st.l3 = st.l3.add(&r3.scale(mu3))?;

        let l3 = &st.l3;
        st.s = DenseMatrix::from_fn(hm.rows(), hm.cols(), |i, j| {
            (hm.get(i, j) - l3.get(i, j) / mu3).max(T::zero())
        });
        Ok(())
    }

    /// Full objective value (the implemented reformulation):
    /// sum_v( ||X - Phi H_m||^2 + [encoder] ||H_m - Phi^T X||^2
    ///        + beta ||H_m A||_2,1 + lambda ||H_m - G H*||_2,1 ).
    pub fn objective_value(&self) -> Result<T> {
        let cfg = self.config;
        let beta = T::from_f64_c(cfg.beta);
        let lambda = T::from_f64_c(cfg.lambda);
        let m = self.depth();
        let mut total = T::zero();
        for st in &self.modalities {
            let phi = match (st.phi(m - 1)?, &st.stack.factors[m - 1].0) {
                (Some(pr), z_last) => pr.matmul(z_last)?,
                (None, z_last) => z_last.clone(),
            };
            let hm = st.hm();
            let dec = st.x.sub(&phi.matmul(hm)?)?.norm_fro();
            total += dec * dec;
            if cfg.encoder_term {
                let enc = hm.sub(&phi.matmul_tn(&st.x)?)?.norm_fro();
                total += enc * enc;
            }
            if cfg.beta != 0.0 {
                total += beta * l21_norm(&hm.matmul(&st.a)?);
            }
            if cfg.lambda != 0.0 {
                let diff = hm.sub(&st.g.matmul(&self.hstar)?)?;
                total += lambda * l21_norm(&diff);
            }
        }
        Ok(total)
    }

    /// Frobenius norms of the three constraint violations, summed over
    /// modalities: (||M1 - H_m A||, ||M2 + G H* - H_m||, ||s - H_m||).
    pub fn residuals(&self) -> Result<(T, T, T)> {
        let (mut r1, mut r2, mut r3) = (T::zero(), T::zero(), T::zero());
        for st in &self.modalities {
            let hm = st.hm();
            r1 += st.m1.sub(&hm.matmul(&st.a)?)?.norm_fro();
            r2 += st.m2.add(&st.g.matmul(&self.hstar)?)?.sub(hm)?.norm_fro();
            r3 += st.s.sub(hm)?.norm_fro();
        }
        Ok((r1, r2, r3))
    }

    /// Smallest entry over all nonnegativity-constrained variables.
    pub fn min_nonneg(&self) -> T {
        let m = self.depth();
        let mut lo = T::infinity();
        for st in &self.modalities {
            for (i, (z, h)) in st.stack.factors.iter().enumerate() {
                lo = lo.min(z.min_entry());
                if i + 1 < m {
                    lo = lo.min(h.min_entry());
                }
            }
            lo = lo.min(st.s.min_entry());
        }
        lo
    }
}

/// Shared IRLS row-rescaling: solves (w S + mu I) M = target with S
/// diagonal from the previous M's row norms.
fn reweighted_rows<T: Scalar>(
    prev: &DenseMatrix<T>,
    target: &DenseMatrix<T>,
    weight: T,
    mu: T,
    eps: T,
) -> DenseMatrix<T> {
    let mut out = DenseMatrix::zeros(prev.rows(), prev.cols());
    for i in 0..prev.rows() {
        let row_norm = prev
            .row(i)
            .iter()
            .map(|&v| v * v)
            .fold(T::zero(), |a, b| a + b)
            .sqrt();
        let sigma = T::one() / row_norm.max(eps);
        let scale = T::one() / (weight * sigma + mu);
        for j in 0..prev.cols() {
            out.set(i, j, target.get(i, j) * scale);
        }
    }
    out
}

/// Result of a full fit: consensus representation, per-iteration trace,
/// and the final state for inspection.
pub struct FitResult<T> {
    pub hstar: DenseMatrix<T>,
    pub traces: Vec<IterTrace>,
    pub state: AdmmState<T>,
    /// Entries of final H_m below -1e-6 (slack mechanism enforces H_m >= 0
    /// only in the limit; small negatives are clipped at extraction).
    pub hm_clip_violations: usize,
}

/// Grouped configuration for [`fit`].
#[derive(Clone, Debug, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct FitConfig {
    pub admm: AdmmConfig,
    pub graph: GraphConfig,
    pub pretrain: PretrainConfig,
}

/// Initialize the solver state: pre-train the stacks, build graph priors,
/// then start from a feasible point (zero multipliers, G = I, H* = mean of
/// the H_m, M1 = H_m A, M2 = H_m - G H*, s = max(0, H_m)).
pub fn initialize<T: Scalar>(
    modalities: &[ModalityData<T>],
    layer_sizes: &[usize],
    config: &FitConfig,
    seed: u64,
) -> Result<AdmmState<T>> {
    config.admm.validate()?;
    let n = check_sample_counts(modalities)?;
    let p_m = *layer_sizes.last().ok_or_else(|| {
        Error::Parameter("initialize: empty layer sizes".into())
    })?;

    let tol = T::from_f64_c(config.pretrain.tol);
    let mut states = Vec::with_capacity(modalities.len());
    for (v, md) in modalities.iter().enumerate() {
        let (x, was_shifted) = shift_to_nonneg(&md.x);
        if was_shifted {
            log::warn!(
                "modality '{}': negative features shifted to min 0 before factorization",
                md.name
            );
        }
        let stack = pretrain_stack(
            &x,
            layer_sizes,
            config.pretrain.per_layer_iters,
            tol,
            seed.wrapping_add(1009 * v as u64),
        )?;
        let prior = match &md.prior {
            Some(p) => p.clone(),
            None => GraphPrior::build(&x, &config.graph)?,
        };
        let lap_eig = sym_eig(&prior.laplacian)?;
        let hm = stack.last_h().clone();
        let m1 = hm.matmul(&prior.factor)?;
        let g = DenseMatrix::identity(p_m);
        let s = hm.map(|v| v.max(T::zero()));
        states.push(ModalityState {
            name: md.name.clone(),
            x,
            stack,
            a: prior.factor,
            lap_eig,
            g,
            m1,
            m2: DenseMatrix::zeros(p_m, n), // filled after H* below
            l1: DenseMatrix::zeros(p_m, n),
            l2: DenseMatrix::zeros(p_m, n),
            l3: DenseMatrix::zeros(p_m, n),
            s,
        });
    }

    // H* = mean over modalities of H_m, then M2 = H_m - G H*.
    let mut hstar = DenseMatrix::zeros(p_m, n);
    for st in &states {
        hstar = hstar.add(st.hm())?;
    }
    hstar = hstar.scale(T::one() / T::from_f64_c(states.len() as f64));
    for st in &mut states {
        st.m2 = st.stack.last_h().sub(&st.g.matmul(&hstar)?)?;
    }

    Ok(AdmmState {
        modalities: states,
        hstar,
        config: config.admm,
    })
}

/// Full Algorithm-1 style fit: pre-train, build graphs, then alternate the
/// per-layer updates until the relative objective change drops below tol
/// or `max_iters` is reached. Returns the consensus H* and the trace.
pub fn fit<T: Scalar>(
    modalities: &[ModalityData<T>],
    layer_sizes: &[usize],
    config: &FitConfig,
    seed: u64,
) -> Result<FitResult<T>> {
    let mut state = initialize(modalities, layer_sizes, config, seed)?;
    let m = state.depth();
    let n_mod = state.n_modalities();
    let tol = T::from_f64_c(config.admm.tol);

    let mut traces: Vec<IterTrace> = Vec::with_capacity(config.admm.max_iters);
    let mut prev_obj: Option<T> = None;

    for iter in 1..=config.admm.max_iters {
        let hstar_before = state.hstar.clone();
        let mut max_delta = T::zero();

        for v in 0..n_mod {
            let hm_before = state.modalities[v].hm().clone();
            for i in 0..m {
                if i + 1 < m {
                    for _ in 0..config.admm.inner_mu_iters {
                        state.update_h_mid(v, i)?;
                        state.update_z(v, i)?;
                    }
                } else {
                    state.update_hm(v)?;
                    state.update_g(v)?;
                    state.update_hstar()?;
                    state.update_m1(v)?;
                    state.update_m2(v)?;
                    state.update_duals(v)?;
                    for _ in 0..config.admm.inner_mu_iters {
                        state.update_z(v, i)?;
                    }
                }
            }
            let delta = state.modalities[v].hm().sub(&hm_before)?.max_abs();
            max_delta = max_delta.max(delta);
        }
        max_delta = max_delta.max(state.hstar.sub(&hstar_before)?.max_abs());

        let objective = state.objective_value()?;
        let (r1, r2, r3) = state.residuals()?;
        traces.push(IterTrace {
            iter,
            objective: objective.to_f64().unwrap_or(f64::NAN),
            residual_m1: r1.to_f64().unwrap_or(f64::NAN),
            residual_m2: r2.to_f64().unwrap_or(f64::NAN),
            residual_s: r3.to_f64().unwrap_or(f64::NAN),
            max_update_delta: max_delta.to_f64().unwrap_or(f64::NAN),
            min_nonneg: state.min_nonneg().to_f64().unwrap_or(f64::NAN),
        });

        if let Some(prev) = prev_obj {
            let rel = (prev - objective).abs() / prev.max(T::from_f64_c(1e-30));
            if rel < tol {
                break;
            }
        }
        prev_obj = Some(objective);
    }

    // Clip tiny H_m negatives at extraction; count real violations.
    let hard = T::from_f64_c(-1e-6);
    let mut violations = 0usize;
    for v in 0..n_mod {
        let hm = state.modalities[v].hm().clone();
        violations += hm.iter().filter(|&&x| x < hard).count();
        let clipped = hm.map(|x| if x < T::zero() { T::zero() } else { x });
        state.modalities[v].set_hm(clipped);
    }
    if violations > 0 {
        log::warn!(
            "fit: {} H_m entries below -1e-6 clipped at extraction",
            violations
        );
    }

    Ok(FitResult {
        hstar: state.hstar.clone(),
        traces,
        state,
        hm_clip_violations: violations,
    })
}
#[cfg(test)]
mod tests {
    use super::*;
    use crate::synth::{generate, SynthSpec};
    use crate::testutil::fd_gradient;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn small_fit_config(max_iters: usize) -> FitConfig {
        FitConfig {
            admm: AdmmConfig {
                max_iters,
                ..Default::default()
            },
            graph: GraphConfig::default(),
            pretrain: crate::pretrain::PretrainConfig {
                per_layer_iters: 40,
                tol: 1e-5,
            },
        }
    }

    /// Small two-modality state from the synthetic generator, then
    /// perturbed into a generic (non-initial) point.
    fn generic_state(seed: u64) -> AdmmState<f64> {
        let spec = SynthSpec {
            n_clusters: 2,
            samples_per_cluster: 6,
            modality_dims: vec![9, 7],
            merge_map: None,
            noise_sigma: 0.2,
            outlier_fraction: 0.0,
            seed,
        };
        let (ms, _) = generate(&spec).unwrap();
        let cfg = small_fit_config(5);
        let mut state = initialize(&ms, &[5, 3], &cfg, seed).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0xABCD);
        let mut jitter = |m: &DenseMatrix<f64>, amp: f64| {
            DenseMatrix::from_fn(m.rows(), m.cols(), |i, j| {
                m.get(i, j) + amp * (rng.random::<f64>() - 0.5)
            })
        };
        state.hstar = jitter(&state.hstar, 0.3);
        for v in 0..state.n_modalities() {
            let st = &mut state.modalities[v];
            st.g = DenseMatrix::from_fn(3, 3, |i, j| {
                if i == j { 1.0 } else { 0.0 }
            });
            st.g = jitter(&st.g, 0.4);
            st.m1 = jitter(&st.m1, 0.3);
            st.m2 = jitter(&st.m2, 0.3);
            st.l1 = jitter(&st.l1, 0.2);
            st.l2 = jitter(&st.l2, 0.2);
            st.l3 = jitter(&st.l3, 0.2);
        }
        state
    }

    /// Augmented-Lagrangian restriction to H_m for one modality; the
    /// update must zero its gradient.
    fn hm_energy(state: &AdmmState<f64>, v: usize, hm: &DenseMatrix<f64>) -> f64 {
        let cfg = state.config;
        let m = state.depth();
        let st = &state.modalities[v];
        let mut phi = st.stack.factors[0].0.clone();
        for i in 1..m {
            phi = phi.matmul(&st.stack.factors[i].0).unwrap();
        }
        let mut f = st.x.sub(&phi.matmul(hm).unwrap()).unwrap().norm_fro().powi(2);
        if cfg.encoder_term {
            f += hm.sub(&phi.matmul_tn(&st.x).unwrap()).unwrap().norm_fro().powi(2);
        }
        let aug = |mu: f64, r: &DenseMatrix<f64>, l: &DenseMatrix<f64>| {
            0.5 * mu * r.add(&l.scale(1.0 / mu)).unwrap().norm_fro().powi(2)
        };
        let r1 = st.m1.sub(&hm.matmul(&st.a).unwrap()).unwrap();
        f += aug(cfg.mu1, &r1, &st.l1);
        let r2 = st.m2.add(&st.g.matmul(&state.hstar).unwrap()).unwrap().sub(hm).unwrap();
        f += aug(cfg.mu2, &r2, &st.l2);
        let r3 = st.s.sub(hm).unwrap();
        f += aug(cfg.mu3, &r3, &st.l3);
        f
    }

    #[test]
    fn hm_update_is_stationary() {
        for seed in 0..5u64 {
            for encoder in [true, false] {
                let mut state = generic_state(seed);
                state.config.encoder_term = encoder;
                state.update_hm(0).unwrap();
                let at = state.modalities[0].hm().clone();
                let f = |h: &DenseMatrix<f64>| hm_energy(&state, 0, h);
                let g = fd_gradient(&f, &at, 1e-3);
                assert!(
                    g.norm_fro() <= 1e-6,
                    "seed {seed} encoder {encoder}: |grad| = {}",
                    g.norm_fro()
                );
            }
        }
    }

    #[test]
    fn g_update_is_stationary() {
        for seed in 5..10u64 {
            let mut state = generic_state(seed);
            state.update_g(0).unwrap();
            let hstar = state.hstar.clone();
            let st = &state.modalities[0];
            let (hm, m2, l2) = (st.hm().clone(), st.m2.clone(), st.l2.clone());
            let mu2 = state.config.mu2;
            let f = |g: &DenseMatrix<f64>| {
                let r = m2
                    .add(&g.matmul(&hstar).unwrap())
                    .unwrap()
                    .sub(&hm)
                    .unwrap();
                0.5 * mu2 * r.add(&l2.scale(1.0 / mu2)).unwrap().norm_fro().powi(2)
            };
            let g = fd_gradient(&f, &state.modalities[0].g, 1e-3);
            assert!(g.norm_fro() <= 1e-6, "seed {seed}: |grad| = {}", g.norm_fro());
        }
    }

    #[test]
    fn hstar_update_is_stationary() {
        for seed in 10..15u64 {
            let mut state = generic_state(seed);
            state.update_hstar().unwrap();
            let f = |hs: &DenseMatrix<f64>| {
                let mu2 = state.config.mu2;
                state
                    .modalities
                    .iter()
                    .map(|st| {
                        let r = st
                            .m2
                            .add(&st.g.matmul(hs).unwrap())
                            .unwrap()
                            .sub(st.hm())
                            .unwrap();
                        0.5 * mu2 * r.add(&st.l2.scale(1.0 / mu2)).unwrap().norm_fro().powi(2)
                    })
                    .sum()
            };
            let g = fd_gradient(&f, &state.hstar.clone(), 1e-3);
            assert!(g.norm_fro() <= 1e-6, "seed {seed}: |grad| = {}", g.norm_fro());
        }
    }

    #[test]
    fn m1_exact_when_beta_zero() {
        let mut state = generic_state(20);
        state.config.beta = 0.0;
        state.update_m1(0).unwrap();
        let st = &state.modalities[0];
        let expect = st
            .hm()
            .matmul(&st.a)
            .unwrap()
            .sub(&st.l1.scale(1.0 / state.config.mu1))
            .unwrap();
        assert!(st.m1.sub(&expect).unwrap().max_abs() < 1e-12);
    }

    /// With beta > 0 the reweighted step is IRLS; at its fixed point the
    /// smooth KKT condition beta * row/|row| + mu1 * row - target_row = 0
    /// holds for every row with nonneglible norm.
    #[test]
    fn m1_irls_reaches_kkt_point() {
        for seed in 21..24u64 {
            let mut state = generic_state(seed);
            state.config.beta = 0.5; // exaggerated so the l21 term matters
            for _ in 0..3000 {
                state.update_m1(0).unwrap();
            }
            let st = &state.modalities[0];
            let target = st
                .hm()
                .matmul(&st.a)
                .unwrap()
                .scale(state.config.mu1)
                .sub(&st.l1)
                .unwrap();
            for i in 0..st.m1.rows() {
                let row = st.m1.row(i);
                let norm = row.iter().map(|v| v * v).sum::<f64>().sqrt();
                if norm < 1e-4 {
                    continue; // row driven to (numerical) zero by the l21 prox
                }
                for j in 0..st.m1.cols() {
                    let kkt = state.config.beta * st.m1.get(i, j) / norm
                        + state.config.mu1 * st.m1.get(i, j)
                        - target.get(i, j);
                    assert!(kkt.abs() < 1e-6, "seed {seed} row {i}: kkt = {kkt}");
                }
            }
        }
    }

    #[test]
    fn m2_irls_reaches_kkt_point() {
        for seed in 25..28u64 {
            let mut state = generic_state(seed);
            state.config.lambda = 0.5;
            for _ in 0..3000 {
                state.update_m2(0).unwrap();
            }
            let st = &state.modalities[0];
            let target = st
                .hm()
                .sub(&st.g.matmul(&state.hstar).unwrap())
                .unwrap()
                .scale(state.config.mu2)
                .sub(&st.l2)
                .unwrap();
            for i in 0..st.m2.rows() {
                let row = st.m2.row(i);
                let norm = row.iter().map(|v| v * v).sum::<f64>().sqrt();
                if norm < 1e-4 {
                    continue;
                }
                for j in 0..st.m2.cols() {
                    let kkt = state.config.lambda * st.m2.get(i, j) / norm
                        + state.config.mu2 * st.m2.get(i, j)
                        - target.get(i, j);
                    assert!(kkt.abs() < 1e-6, "seed {seed} row {i}: kkt = {kkt}");
                }
            }
        }
    }

    #[test]
    fn duals_unchanged_at_feasible_point() {
        let mut state = generic_state(30);
        // force exact feasibility
        let hstar = state.hstar.clone();
        for st in &mut state.modalities {
            let hm = st.stack.last_h().clone();
            st.m1 = hm.matmul(&st.a).unwrap();
            st.m2 = hm.sub(&st.g.matmul(&hstar).unwrap()).unwrap();
            st.s = hm.clone();
            st.l3 = DenseMatrix::zeros(hm.rows(), hm.cols());
        }
        let before: Vec<_> = state
            .modalities
            .iter()
            .map(|st| (st.l1.clone(), st.l2.clone(), st.l3.clone()))
            .collect();
        for v in 0..state.n_modalities() {
            state.update_duals(v).unwrap();
        }
        for (st, (l1, l2, l3)) in state.modalities.iter().zip(before.iter()) {
            assert!(st.l1.sub(l1).unwrap().max_abs() < 1e-12);
            assert!(st.l2.sub(l2).unwrap().max_abs() < 1e-12);
            assert!(st.l3.sub(l3).unwrap().max_abs() < 1e-12);
            // s = max(0, H_m - L3/mu3) with L3 = 0 and H_m = s >= 0 is a no-op
            assert!(st.s.sub(st.hm()).unwrap().max_abs() < 1e-12);
        }
    }

    #[test]
    fn objective_matches_scalar_oracle() {
        let state = generic_state(40);
        let fast = state.objective_value().unwrap();

        // independent scalar-loop recomputation
        let cfg = state.config;
        let mut slow = 0.0f64;
        for st in &state.modalities {
            let mut phi = st.stack.factors[0].0.clone();
            for i in 1..state.depth() {
                phi = phi.matmul(&st.stack.factors[i].0).unwrap();
            }
            let hm = st.hm();
            let recon = phi.matmul(hm).unwrap();
            for i in 0..st.x.rows() {
                for j in 0..st.x.cols() {
                    slow += (st.x.get(i, j) - recon.get(i, j)).powi(2);
                }
            }
            let code = phi.matmul_tn(&st.x).unwrap();
            for i in 0..hm.rows() {
                for j in 0..hm.cols() {
                    slow += (hm.get(i, j) - code.get(i, j)).powi(2);
                }
            }
            let ha = hm.matmul(&st.a).unwrap();
            for i in 0..ha.rows() {
                slow += cfg.beta
                    * ha.row(i).iter().map(|v| v * v).sum::<f64>().sqrt();
            }
            let diff = hm.sub(&st.g.matmul(&state.hstar).unwrap()).unwrap();
            for i in 0..diff.rows() {
                slow += cfg.lambda
                    * diff.row(i).iter().map(|v| v * v).sum::<f64>().sqrt();
            }
        }
        assert!((fast - slow).abs() <= 1e-10 * slow.max(1.0));
    }

    #[test]
    fn multiplicative_updates_preserve_nonnegativity() {
        let mut state = generic_state(50);
        for _ in 0..3 {
            for v in 0..state.n_modalities() {
                state.update_h_mid(v, 0).unwrap();
                for i in 0..state.depth() {
                    state.update_z(v, i).unwrap();
                }
            }
        }
        for st in &state.modalities {
            for (z, _) in &st.stack.factors {
                assert!(z.min_entry() >= 0.0);
            }
            assert!(st.stack.factors[0].1.min_entry() >= 0.0);
        }
        // H_m has a dedicated update
        assert!(state.update_h_mid(0, 1).is_err());
    }

    #[test]
    fn fit_descends_and_stays_nonnegative() {
        let spec = SynthSpec {
            n_clusters: 3,
            samples_per_cluster: 10,
            modality_dims: vec![12, 10],
            merge_map: Some(vec![vec![0, 0, 2], vec![0, 1, 1]]),
            noise_sigma: 0.1,
            outlier_fraction: 0.0,
            seed: 60,
        };
        let (ms, _) = generate(&spec).unwrap();
        let cfg = small_fit_config(40);
        let result = fit(&ms, &[6, 3], &cfg, 0).unwrap();
        assert!(!result.traces.is_empty());
        let first = result.traces.first().unwrap().objective;
        let last = result.traces.last().unwrap().objective;
        assert!(last < first, "objective did not decrease: {first} -> {last}");
        for t in &result.traces {
            assert!(t.min_nonneg >= 0.0, "iter {}: min {}", t.iter, t.min_nonneg);
            assert!(t.objective.is_finite());
        }
        assert_eq!(result.hstar.shape(), (3, 30));
        // extracted H_m are clipped nonnegative
        for st in &result.state.modalities {
            assert!(st.hm().min_entry() >= 0.0);
        }
    }

    #[test]
    fn fit_deterministic() {
        let spec = SynthSpec {
            n_clusters: 2,
            samples_per_cluster: 8,
            modality_dims: vec![8, 6],
            merge_map: None,
            noise_sigma: 0.1,
            outlier_fraction: 0.0,
            seed: 70,
        };
        let (ms, _) = generate(&spec).unwrap();
        let cfg = small_fit_config(10);
        let a = fit(&ms, &[4], &cfg, 7).unwrap();
        let b = fit(&ms, &[4], &cfg, 7).unwrap();
        assert_eq!(a.hstar.as_slice(), b.hstar.as_slice());
        assert_eq!(a.traces.len(), b.traces.len());
        for (x, y) in a.traces.iter().zip(b.traces.iter()) {
            assert_eq!(x.objective, y.objective);
        }
    }

    #[test]
    fn config_validation() {
        let mut cfg = AdmmConfig::default();
        cfg.validate().unwrap();
        cfg.mu1 = 0.0;
        assert!(cfg.validate().is_err());
        let mut cfg = AdmmConfig::default();
        cfg.beta = -0.1;
        assert!(cfg.validate().is_err());
        let mut cfg = AdmmConfig::default();
        cfg.max_iters = 0;
        assert!(cfg.validate().is_err());
    }
}
