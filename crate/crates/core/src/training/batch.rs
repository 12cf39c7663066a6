//! Concatenate-pad-reshape batching and its inverse.

use ndarray::{s, Array2, Array3, ArrayView2, ArrayView3};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::dsp::ProcessedSignal;
use crate::{Error, Result};

/// Layout of utterances concatenated into `rows` sequences of `seq_len` samples.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct BatchPlan {
    pub ids: Vec<String>,
    pub offsets: Vec<usize>,
    pub lengths: Vec<usize>,
    pub seq_len: usize,
    pub pad: usize,
    pub rows: usize,
}

impl BatchPlan {
    pub fn new(ids: Vec<String>, lengths: Vec<usize>, seq_len: usize) -> Result<Self> {
        if seq_len == 0 {
            return Err(Error::Config("sequence length must be positive".into()));
        }
        if ids.len() != lengths.len() {
            return Err(Error::Internal(
                "batch ids and lengths differ in count".into(),
            ));
        }
        if lengths.is_empty() {
            return Err(Error::Input("empty batch".into()));
        }
        let mut offsets = Vec::with_capacity(lengths.len());
        let mut total = 0;
        for &l in &lengths {
            offsets.push(total);
            total += l;
        }
        let rows = total.div_ceil(seq_len);
        Ok(Self {
            ids,
            offsets,
            lengths,
            seq_len,
            pad: rows * seq_len - total,
            rows,
        })
    }

    /// N_S: summed member length.
    pub fn total_len(&self) -> usize {
        self.lengths.iter().sum()
    }

    pub fn len(&self) -> usize {
        self.lengths.len()
    }

    pub fn is_empty(&self) -> bool {
        self.lengths.is_empty()
    }

    /// Member index owning each of the `rows · seq_len / factor` frames; `None` for padding.
    pub fn frame_owners(&self, factor: usize) -> Vec<Option<usize>> {
        let mut owners = vec![None; self.rows * self.seq_len / factor];
        for (k, (&o, &l)) in self.offsets.iter().zip(&self.lengths).enumerate() {
            owners[o / factor..(o + l) / factor].fill(Some(k));
        }
        owners
    }

    fn check_factor(&self, factor: usize) -> Result<()> {
        if factor == 0
            || !self.seq_len.is_multiple_of(factor)
            || self.lengths.iter().any(|l| l % factor != 0)
        {
            return Err(Error::Internal(format!(
                "batch plan is not aligned to {factor}-sample frames"
            )));
        }
        Ok(())
    }
}

/// Concatenates `(id, signal)` members and reshapes to `rows × seq_len × channels`.
pub fn pack_batch(
    members: &[(&str, &ProcessedSignal)],
    seq_len: usize,
) -> Result<(Array3<f64>, BatchPlan)> {
    let plan = BatchPlan::new(
        members.iter().map(|(id, _)| id.to_string()).collect(),
        members.iter().map(|(_, s)| s.len()).collect(),
        seq_len,
    )?;
    let signals: Vec<&ProcessedSignal> = members.iter().map(|(_, s)| *s).collect();
    let block = pack_with_plan(&signals, &plan)?;
    Ok((block, plan))
}

/// Packs signals into an existing plan; lengths must match it.
pub fn pack_with_plan(signals: &[&ProcessedSignal], plan: &BatchPlan) -> Result<Array3<f64>> {
    if signals.len() != plan.len() {
        return Err(Error::Internal(
            "signal count does not match batch plan".into(),
        ));
    }
    let channels = signals[0].signal.n_channels();
    let mut flat = Array2::zeros((plan.rows * plan.seq_len, channels));
    for ((sig, &off), &len) in signals.iter().zip(&plan.offsets).zip(&plan.lengths) {
        if sig.signal.n_channels() != channels {
            return Err(Error::Input("batch members differ in channel count".into()));
        }
        if sig.len() != len {
            return Err(Error::Internal(
                "signal length does not match batch plan".into(),
            ));
        }
        for (c, ch) in sig.signal.channels().iter().enumerate() {
            for (t, &v) in ch.iter().enumerate() {
                flat[[off + t, c]] = v;
            }
        }
    }
    flat.into_shape_with_order((plan.rows, plan.seq_len, channels))
        .map_err(|e| Error::Internal(e.to_string()))
}

/// Splits `rows × (seq_len / factor) × dims` outputs back into per-member frame sequences.
pub fn unpack_batch(
    outputs: ArrayView3<'_, f64>,
    plan: &BatchPlan,
    factor: usize,
) -> Result<Vec<Array2<f64>>> {
    plan.check_factor(factor)?;
    let (rows, frames, dims) = outputs.dim();
    if rows != plan.rows || frames * factor != plan.seq_len {
        return Err(Error::Internal(format!(
            "outputs {rows}×{frames} do not match plan {}×{}",
            plan.rows,
            plan.seq_len / factor
        )));
    }
    let flat = outputs
        .as_standard_layout()
        .into_owned()
        .into_shape_with_order((rows * frames, dims))
        .map_err(|e| Error::Internal(e.to_string()))?;
    Ok(plan
        .offsets
        .iter()
        .zip(&plan.lengths)
        .map(|(&o, &l)| flat.slice(s![o / factor..(o + l) / factor, ..]).to_owned())
        .collect())
}

/// Inverse of [`unpack_batch`]: scatters per-member frame arrays into the
/// packed layout, zero on padding frames.
pub fn repack_frames(
    parts: &[ArrayView2<'_, f64>],
    plan: &BatchPlan,
    factor: usize,
    dims: usize,
) -> Result<Array3<f64>> {
    plan.check_factor(factor)?;
    if parts.len() != plan.len() {
        return Err(Error::Internal("part count does not match plan".into()));
    }
    let frames = plan.seq_len / factor;
    let mut flat = Array2::zeros((plan.rows * frames, dims));
    for ((p, &o), &l) in parts.iter().zip(&plan.offsets).zip(&plan.lengths) {
        if p.dim() != (l / factor, dims) {
            return Err(Error::Internal("part shape does not match plan".into()));
        }
        flat.slice_mut(s![o / factor..(o + l) / factor, ..])
            .assign(p);
    }
    flat.into_shape_with_order((plan.rows, frames, dims))
        .map_err(|e| Error::Internal(e.to_string()))
}

/// Greedy fill in the given order: a batch is closed when the next member would
/// push its summed length past `cap`. Oversized members get their own batch.
pub fn make_batches(
    items: &[(String, usize)],
    cap: usize,
    seq_len: usize,
) -> Result<Vec<BatchPlan>> {
    if items.is_empty() {
        return Err(Error::Input("no utterances to batch".into()));
    }
    let mut plans = Vec::new();
    let (mut ids, mut lens, mut total) = (Vec::new(), Vec::new(), 0usize);
    for (id, len) in items {
        if !lens.is_empty() && total + len > cap {
            plans.push(BatchPlan::new(
                std::mem::take(&mut ids),
                std::mem::take(&mut lens),
                seq_len,
            )?);
            total = 0;
        }
        ids.push(id.clone());
        lens.push(*len);
        total += len;
    }
    plans.push(BatchPlan::new(ids, lens, seq_len)?);
    Ok(plans)
}

/// [`make_batches`] after a seeded shuffle of the items.
pub fn shuffled_batches(
    items: &[(String, usize)],
    cap: usize,
    seq_len: usize,
    seed: u64,
) -> Result<Vec<BatchPlan>> {
    let mut order = items.to_vec();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    make_batches(&order, cap, seq_len)
}
