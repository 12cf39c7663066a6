//! Frame alignment between vocalized targets and predictions from silent EMG.
//!
//! The cost between target frame `i` and predicted frame `j` is the Euclidean
//! feature distance, optionally plus `λ` times the negative log-likelihood of
//! the target phoneme under the predicted posterior. A minimum-cost monotonic
//! path through the cost matrix maps each target frame to the first predicted
//! frame it is paired with; the loss averages the cost along that map.
//!
//! Indices are 0-based throughout.

mod cost;
mod dtw;
mod loss;

pub use cost::{
    combined_cost, pairwise_distance, pairwise_distance_matrix, CostKind, CostMatrix,
    LOG_PROB_FLOOR,
};
pub use dtw::{dtw, AlignmentPath};
pub use loss::{
    aligned_loss, aligned_loss_grad, direct_loss, direct_loss_grad, write_alignment_dump,
    LossTerms, DEFAULT_PHONEME_WEIGHT, MAX_DIRECT_LENGTH_MISMATCH,
};

use ndarray::{Array2, ArrayView2};

use crate::{Error, Result};

/// Frame-level phoneme label ids.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct PhonemeSequence {
    labels: Vec<usize>,
}

impl PhonemeSequence {
    /// Rejects ids outside an inventory of `inventory_size` phonemes.
    pub fn new(labels: Vec<usize>, inventory_size: usize) -> Result<Self> {
        if let Some(bad) = labels.iter().find(|&&l| l >= inventory_size) {
            return Err(Error::Input(format!(
                "phoneme id {bad} outside inventory of {inventory_size}"
            )));
        }
        Ok(Self { labels })
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn truncated(&self, n: usize) -> Self {
        Self {
            labels: self.labels[..n.min(self.labels.len())].to_vec(),
        }
    }
}

/// Per-frame phoneme distributions, stored as log-probabilities.
#[derive(Clone, Debug, PartialEq)]
pub struct PhonemePosterior {
    log_probs: Array2<f64>,
}

impl PhonemePosterior {
    pub fn from_logits(logits: ArrayView2<'_, f64>) -> Self {
        Self {
            log_probs: crate::model::log_softmax_rows(logits),
        }
    }

    /// Rows must be non-negative and sum to 1 within 1e-6.
    pub fn from_probs(probs: ArrayView2<'_, f64>) -> Result<Self> {
        for (i, row) in probs.rows().into_iter().enumerate() {
            let sum: f64 = row.sum();
            if row.iter().any(|&p| !(p >= 0.0)) || (sum - 1.0).abs() > 1e-6 {
                return Err(Error::Input(format!(
                    "posterior row {i} is not a distribution"
                )));
            }
        }
        Ok(Self {
            log_probs: probs.mapv(f64::ln),
        })
    }

    pub fn log_probs(&self) -> &Array2<f64> {
        &self.log_probs
    }

    pub fn probs(&self) -> Array2<f64> {
        self.log_probs.mapv(f64::exp)
    }

    pub fn n_frames(&self) -> usize {
        self.log_probs.nrows()
    }

    pub fn n_phonemes(&self) -> usize {
        self.log_probs.ncols()
    }

    /// Most probable phoneme per frame, lowest id on ties.
    pub fn argmax(&self) -> Vec<usize> {
        self.log_probs
            .rows()
            .into_iter()
            .map(|r| {
                r.iter()
                    .enumerate()
                    .fold((0, f64::NEG_INFINITY), |best, (k, &v)| {
                        if v > best.1 {
                            (k, v)
                        } else {
                            best
                        }
                    })
                    .0
            })
            .collect()
    }
}
