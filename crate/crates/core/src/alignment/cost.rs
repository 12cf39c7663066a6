use ndarray::{Array2, ArrayView2};

use super::{PhonemePosterior, PhonemeSequence};
use crate::dsp::FeatureSequence;
use crate::{Error, Result};

/// Log-probabilities are clamped here so the cost stays finite.
pub const LOG_PROB_FLOOR: f64 = -20.0;

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum CostKind {
    /// Feature distance only.
    Plain,
    /// Feature distance plus `lambda` times phoneme NLL.
    Combined { lambda: f64 },
}

/// `targets × predictions` alignment costs.
#[derive(Clone, Debug, PartialEq)]
pub struct CostMatrix {
    values: Array2<f64>,
    kind: CostKind,
}

impl CostMatrix {
    pub fn new(values: Array2<f64>, kind: CostKind) -> Result<Self> {
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::Input("cost matrix has non-finite entries".into()));
        }
        Ok(Self { values, kind })
    }

    pub fn values(&self) -> &Array2<f64> {
        &self.values
    }

    pub fn kind(&self) -> CostKind {
        self.kind
    }

    pub fn shape(&self) -> (usize, usize) {
        self.values.dim()
    }
}

/// Euclidean distances between every target row and every predicted row.
pub fn pairwise_distance_matrix(
    target: ArrayView2<'_, f64>,
    predicted: ArrayView2<'_, f64>,
) -> Result<Array2<f64>> {
    if target.ncols() != predicted.ncols() {
        return Err(Error::Input(format!(
            "feature dimension mismatch: {} vs {}",
            target.ncols(),
            predicted.ncols()
        )));
    }
    let mut out = Array2::zeros((target.nrows(), predicted.nrows()));
    for (i, t) in target.rows().into_iter().enumerate() {
        for (j, p) in predicted.rows().into_iter().enumerate() {
            let sq: f64 = t.iter().zip(p.iter()).map(|(a, b)| (a - b) * (a - b)).sum();
            out[[i, j]] = sq.sqrt();
        }
    }
    Ok(out)
}

pub fn pairwise_distance(
    target: &FeatureSequence,
    predicted: &FeatureSequence,
) -> Result<CostMatrix> {
    CostMatrix::new(
        pairwise_distance_matrix(target.frames().view(), predicted.frames().view())?,
        CostKind::Plain,
    )
}

pub(crate) fn add_phoneme_cost(
    distances: &mut Array2<f64>,
    labels: &[usize],
    log_probs: ArrayView2<'_, f64>,
    lambda: f64,
) -> Result<()> {
    let (n_v, n_s) = distances.dim();
    if labels.len() != n_v || log_probs.nrows() != n_s {
        return Err(Error::Input(format!(
            "cost is {n_v}×{n_s} but got {} labels and {} posterior frames",
            labels.len(),
            log_probs.nrows()
        )));
    }
    if let Some(bad) = labels.iter().find(|&&l| l >= log_probs.ncols()) {
        return Err(Error::Input(format!(
            "label {bad} outside posterior inventory"
        )));
    }
    for (i, &label) in labels.iter().enumerate() {
        for j in 0..n_s {
            distances[[i, j]] -= lambda * log_probs[[j, label]].max(LOG_PROB_FLOOR);
        }
    }
    Ok(())
}

/// `δ'[i, j] = δ[i, j] + λ · NLL(label_i | posterior_j)`, with the log clamped at [`LOG_PROB_FLOOR`].
pub fn combined_cost(
    delta: &CostMatrix,
    targets: &PhonemeSequence,
    posteriors: &PhonemePosterior,
    lambda: f64,
) -> Result<CostMatrix> {
    let mut values = delta.values().clone();
    add_phoneme_cost(
        &mut values,
        targets.labels(),
        posteriors.log_probs().view(),
        lambda,
    )?;
    CostMatrix::new(values, CostKind::Combined { lambda })
}
