//! Shared multi-modal data container.

use crate::dense::DenseMatrix;
use crate::error::{Error, Result};
use crate::graph::GraphPrior;
use crate::scalar::Scalar;

/// One modality's feature matrix (d_v x n, samples as columns) plus its
/// graph prior, built lazily by the solver when absent.
#[derive(Clone, Debug)]
pub struct ModalityData<T> {
    pub name: String,
    pub x: DenseMatrix<T>,
    pub prior: Option<GraphPrior<T>>,
}

impl<T: Scalar> ModalityData<T> {
    pub fn new(name: impl Into<String>, x: DenseMatrix<T>) -> Self {
        Self {
            name: name.into(),
            x,
            prior: None,
        }
    }

    pub fn n_samples(&self) -> usize {
        self.x.cols()
    }
}

/// All modalities of one dataset must share the sample count.
pub fn check_sample_counts<T: Scalar>(modalities: &[ModalityData<T>]) -> Result<usize> {
    let first = modalities
        .first()
        .ok_or_else(|| Error::Parameter("at least one modality required".into()))?;
    let n = first.n_samples();
    for m in modalities {
        if m.n_samples() != n {
            return Err(Error::Parameter(format!(
                "modality '{}' has {} samples, expected {}",
                m.name,
                m.n_samples(),
                n
            )));
        }
    }
    Ok(n)
}
