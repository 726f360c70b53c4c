//! Multi-modal deep auto-encoder-like NMF clustering.
//!
//! The pipeline learns per-modality hierarchical factorizations
//! X^(v) ~ Z_1 ... Z_m H_m with graph and consensus regularization,
//! solved by alternating minimization / ADMM, extracts a consensus
//! representation H*, finishes with spectral clustering, and scores the
//! result with six external clustering metrics. All numeric kernels are
//! generic over the scalar type; `f64` is the default throughout the CLI.

pub mod admm;
pub mod data;
pub mod dense;
pub mod error;
pub mod graph;
pub mod metrics;
pub mod pipeline;
pub mod pretrain;
pub mod scalar;
pub mod spectral;
pub mod synth;

#[doc(hidden)]
pub mod testutil;

pub use dense::DenseMatrix;
pub use error::{Error, Result};
pub use scalar::Scalar;

/// Single-precision dense matrix.
pub type Mat32 = DenseMatrix<f32>;
/// Double-precision dense matrix (what the CLI pipeline uses).
pub type Mat64 = DenseMatrix<f64>;
