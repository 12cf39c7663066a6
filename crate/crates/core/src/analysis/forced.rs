//! Alignment of silent predictions to vocalized labels, and forced-choice
//! accuracy within confusion sets.

use ndarray::{Array2, Axis};

use crate::alignment::{aligned_loss, PhonemePosterior, PhonemeSequence};
use crate::dsp::FeatureSequence;
use crate::{Error, Result};

/// Per vocalized frame `i`: its label, the silent frame `a[i]` it aligns to,
/// the argmax prediction there and the log-posterior row.
#[derive(Clone, Debug, PartialEq)]
pub struct AlignedPredictions {
    pub labels: Vec<usize>,
    pub source_frames: Vec<usize>,
    pub predicted: Vec<usize>,
    pub log_probs: Array2<f64>,
}

impl AlignedPredictions {
    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    /// `(label, predicted)` pairs.
    pub fn pairs(&self) -> Vec<(usize, usize)> {
        self.labels
            .iter()
            .copied()
            .zip(self.predicted.iter().copied())
            .collect()
    }
}

fn argmax(row: impl Iterator<Item = (usize, f64)>) -> Option<usize> {
    let mut best: Option<(usize, f64)> = None;
    for (i, v) in row {
        if best.is_none_or(|(_, b)| v > b) {
            best = Some((i, v));
        }
    }
    best.map(|(i, _)| i)
}

/// Aligns silent-utterance outputs to the paired vocalized targets with the
/// combined cost and reads off the posterior at each aligned frame.
pub fn align_predictions(
    silent_posteriors: &PhonemePosterior,
    silent_features: &FeatureSequence,
    vocalized_targets: &FeatureSequence,
    vocalized_labels: &PhonemeSequence,
    lambda: f64,
) -> Result<AlignedPredictions> {
    let (_, path) = aligned_loss(
        vocalized_targets,
        silent_features,
        vocalized_labels,
        silent_posteriors,
        lambda,
    )?;
    let map = path.map().to_vec();
    let log_probs = silent_posteriors.log_probs().select(Axis(0), &map);
    let predicted = log_probs
        .rows()
        .into_iter()
        .map(|r| argmax(r.iter().copied().enumerate()).unwrap_or(0))
        .collect();
    Ok(AlignedPredictions {
        labels: vocalized_labels.labels().to_vec(),
        source_frames: map,
        predicted,
        log_probs,
    })
}

fn set_of(sets: &[Vec<usize>], label: usize) -> Option<&[usize]> {
    sets.iter()
        .find(|s| s.contains(&label))
        .map(|s| s.as_slice())
}

/// Accuracy over frames whose label lies in one of `sets`, predicting the
/// member with the highest posterior (lowest id on ties). `None` when no
/// frame qualifies.
pub fn forced_choice_accuracy(aligned: &[AlignedPredictions], sets: &[Vec<usize>]) -> Option<f64> {
    let (mut correct, mut considered) = (0usize, 0usize);
    for a in aligned {
        for (i, &label) in a.labels.iter().enumerate() {
            let Some(set) = set_of(sets, label) else {
                continue;
            };
            let row = a.log_probs.row(i);
            let mut members = set.to_vec();
            members.sort_unstable();
            let choice = argmax(members.iter().map(|&p| (p, row[p])));
            considered += 1;
            correct += usize::from(choice == Some(label));
        }
    }
    (considered > 0).then(|| correct as f64 / considered as f64)
}

/// Always answers the most frequent training member of the label's set
/// (lowest id on ties); scored on the same frames as [`forced_choice_accuracy`].
pub fn majority_class_accuracy(
    train_labels: &[usize],
    eval_labels: &[usize],
    sets: &[Vec<usize>],
) -> Option<f64> {
    let max_id = train_labels
        .iter()
        .chain(eval_labels)
        .chain(sets.iter().flatten())
        .max()
        .copied()
        .unwrap_or(0);
    let mut freq = vec![0usize; max_id + 1];
    for &l in train_labels {
        freq[l] += 1;
    }
    let choice: Vec<usize> = sets
        .iter()
        .map(|s| {
            let mut members = s.clone();
            members.sort_unstable();
            let mut best = members[0];
            for &m in &members[1..] {
                if freq[m] > freq[best] {
                    best = m;
                }
            }
            best
        })
        .collect();
    let (mut correct, mut considered) = (0usize, 0usize);
    for &l in eval_labels {
        if let Some(k) = sets.iter().position(|s| s.contains(&l)) {
            considered += 1;
            correct += usize::from(choice[k] == l);
        }
    }
    (considered > 0).then(|| correct as f64 / considered as f64)
}

/// Maps every member of set `k` to the fresh id `n_phonemes + k`.
pub fn collapse_phonemes(
    seq: &[usize],
    sets: &[Vec<usize>],
    n_phonemes: usize,
) -> Result<Vec<usize>> {
    if sets.iter().flatten().any(|&p| p >= n_phonemes) {
        return Err(Error::Input(
            "confusion set member outside inventory".into(),
        ));
    }
    Ok(seq
        .iter()
        .map(|&p| {
            sets.iter()
                .position(|s| s.contains(&p))
                .map_or(p, |k| n_phonemes + k)
        })
        .collect())
}
