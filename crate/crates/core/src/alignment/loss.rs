use std::io::Write;

use ndarray::{Array2, ArrayView2};

use super::cost::{
    add_phoneme_cost, pairwise_distance_matrix, CostKind, CostMatrix, LOG_PROB_FLOOR,
};
use super::{dtw, AlignmentPath, PhonemePosterior, PhonemeSequence};
use crate::dsp::FeatureSequence;
use crate::model::log_softmax_rows;
use crate::{Error, Result};

/// Weight of the phoneme NLL term in the combined cost.
pub const DEFAULT_PHONEME_WEIGHT: f64 = 0.1;

/// Largest tolerated length difference, in frames, between simultaneously recorded sequences.
pub const MAX_DIRECT_LENGTH_MISMATCH: usize = 2;

/// A loss value, its split into feature and phoneme parts, and gradients
/// with respect to the predicted features and phoneme logits.
#[derive(Clone, Debug)]
pub struct LossTerms {
    pub total: f64,
    pub feature: f64,
    /// Mean phoneme NLL, before the `λ` weight.
    pub phoneme: f64,
    pub path: AlignmentPath,
    pub d_pred: Array2<f64>,
    pub d_logits: Array2<f64>,
}

/// Averages `δ'[i, map[i]]` and differentiates it with the map held fixed.
fn loss_along_map(
    target: ArrayView2<'_, f64>,
    predicted: ArrayView2<'_, f64>,
    labels: &[usize],
    log_probs: ArrayView2<'_, f64>,
    lambda: f64,
    path: AlignmentPath,
) -> LossTerms {
    let n_v = target.nrows();
    let scale = 1.0 / n_v as f64;
    let mut d_pred = Array2::zeros(predicted.dim());
    let mut d_logits = Array2::zeros(log_probs.dim());
    let (mut feature, mut phoneme) = (0.0, 0.0);
    for (i, &j) in path.map().iter().enumerate() {
        let diff = &predicted.row(j) - &target.row(i);
        let dist = diff.dot(&diff).sqrt();
        feature += dist;
        if dist > 0.0 {
            d_pred.row_mut(j).scaled_add(scale / dist, &diff);
        }
        let lp = log_probs[[j, labels[i]]];
        phoneme -= lp.max(LOG_PROB_FLOOR);
        if lp > LOG_PROB_FLOOR && lambda != 0.0 {
            // d(-log softmax_c)/d logits = softmax - onehot(c)
            let mut row = d_logits.row_mut(j);
            row.scaled_add(lambda * scale, &log_probs.row(j).mapv(f64::exp));
            row[labels[i]] -= lambda * scale;
        }
    }
    feature *= scale;
    phoneme *= scale;
    LossTerms {
        total: feature + lambda * phoneme,
        feature,
        phoneme,
        path,
        d_pred,
        d_logits,
    }
}

/// DTW-aligned loss for a silent utterance, from raw model outputs.
///
/// `target`: vocalized features (N_V × 26); `predicted`, `logits`: model outputs on
/// the silent EMG (N_S rows).
pub fn aligned_loss_grad(
    target: ArrayView2<'_, f64>,
    predicted: ArrayView2<'_, f64>,
    labels: &[usize],
    logits: ArrayView2<'_, f64>,
    lambda: f64,
) -> Result<LossTerms> {
    if logits.nrows() != predicted.nrows() {
        return Err(Error::Input(
            "logits and predictions differ in length".into(),
        ));
    }
    let log_probs = log_softmax_rows(logits);
    let mut cost = pairwise_distance_matrix(target, predicted)?;
    add_phoneme_cost(&mut cost, labels, log_probs.view(), lambda)?;
    let path = dtw(&CostMatrix::new(cost, CostKind::Combined { lambda })?)?;
    Ok(loss_along_map(
        target,
        predicted,
        labels,
        log_probs.view(),
        lambda,
        path,
    ))
}

/// Loss without alignment for a vocalized utterance: frame `i` against frame `i`
/// after truncating both to the shorter length.
pub fn direct_loss_grad(
    target: ArrayView2<'_, f64>,
    predicted: ArrayView2<'_, f64>,
    labels: &[usize],
    logits: ArrayView2<'_, f64>,
    lambda: f64,
) -> Result<LossTerms> {
    let (n_v, n_s) = (target.nrows(), predicted.nrows());
    if n_v.abs_diff(n_s) > MAX_DIRECT_LENGTH_MISMATCH {
        return Err(Error::Data(format!(
            "vocalized lengths differ by more than {MAX_DIRECT_LENGTH_MISMATCH} frames ({n_v} vs {n_s})"
        )));
    }
    if labels.len() != n_v || logits.nrows() != n_s {
        return Err(Error::Input(
            "labels or logits do not match sequence lengths".into(),
        ));
    }
    if target.ncols() != predicted.ncols() {
        return Err(Error::Input("feature dimension mismatch".into()));
    }
    let n = n_v.min(n_s);
    if n == 0 {
        return Err(Error::Input("empty sequence".into()));
    }
    if let Some(bad) = labels.iter().find(|&&l| l >= logits.ncols()) {
        return Err(Error::Input(format!(
            "label {bad} outside posterior inventory"
        )));
    }
    let log_probs = log_softmax_rows(logits);
    let t = target.slice(ndarray::s![..n, ..]);
    let terms = loss_along_map(
        t,
        predicted,
        &labels[..n],
        log_probs.view(),
        lambda,
        AlignmentPath::diagonal(n, f64::NAN),
    );
    let cost = terms.total * n as f64;
    Ok(LossTerms {
        path: AlignmentPath::diagonal(n, cost),
        ..terms
    })
}

fn check_lengths(predicted: &FeatureSequence, posteriors: &PhonemePosterior) -> Result<()> {
    if predicted.n_frames() != posteriors.n_frames() {
        return Err(Error::Input(
            "predictions and posteriors differ in length".into(),
        ));
    }
    Ok(())
}

/// `(1 / N_V) Σ_i δ'[i, a[i]]` on the DTW alignment of the combined cost.
pub fn aligned_loss(
    target: &FeatureSequence,
    predicted: &FeatureSequence,
    targets: &PhonemeSequence,
    posteriors: &PhonemePosterior,
    lambda: f64,
) -> Result<(f64, AlignmentPath)> {
    check_lengths(predicted, posteriors)?;
    let log_probs = posteriors.log_probs().view();
    let mut cost = pairwise_distance_matrix(target.frames().view(), predicted.frames().view())?;
    add_phoneme_cost(&mut cost, targets.labels(), log_probs, lambda)?;
    let path = dtw(&CostMatrix::new(cost, CostKind::Combined { lambda })?)?;
    let terms = loss_along_map(
        target.frames().view(),
        predicted.frames().view(),
        targets.labels(),
        log_probs,
        lambda,
        path,
    );
    Ok((terms.total, terms.path))
}

/// Mean of `δ'[i, i]` over the common length of simultaneously recorded sequences.
pub fn direct_loss(
    target: &FeatureSequence,
    predicted: &FeatureSequence,
    targets: &PhonemeSequence,
    posteriors: &PhonemePosterior,
    lambda: f64,
) -> Result<f64> {
    check_lengths(predicted, posteriors)?;
    let (n_v, n_s) = (target.n_frames(), predicted.n_frames());
    if n_v.abs_diff(n_s) > MAX_DIRECT_LENGTH_MISMATCH {
        return Err(Error::Data(format!(
            "vocalized lengths differ by more than {MAX_DIRECT_LENGTH_MISMATCH} frames ({n_v} vs {n_s})"
        )));
    }
    if targets.len() != n_v {
        return Err(Error::Input(
            "label count does not match target frames".into(),
        ));
    }
    let n = n_v.min(n_s);
    if n == 0 {
        return Err(Error::Input("empty sequence".into()));
    }
    let terms = loss_along_map(
        target.frames().slice(ndarray::s![..n, ..]),
        predicted.frames().view(),
        &targets.labels()[..n],
        posteriors.log_probs().view(),
        lambda,
        AlignmentPath::diagonal(n, 0.0),
    );
    Ok(terms.total)
}

/// Writes `i<TAB>a[i]<TAB>cost[i, a[i]]` per target frame.
pub fn write_alignment_dump(
    w: &mut impl Write,
    path: &AlignmentPath,
    cost: &CostMatrix,
) -> std::io::Result<()> {
    for (i, &j) in path.map().iter().enumerate() {
        writeln!(w, "{i}\t{j}\t{}", cost.values()[[i, j]])?;
    }
    Ok(())
}
