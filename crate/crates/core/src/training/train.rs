//! The epoch loop over mixed silent and vocalized batches.

use std::collections::HashMap;
use std::fmt::Write as _;
use std::path::Path;

use ndarray::{Array2, Array3, Axis};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::batch::{pack_with_plan, repack_frames, shuffled_batches, unpack_batch, BatchPlan};
use super::optim::{adamw_step, lr_schedule, OptimizerState};
use crate::alignment::{aligned_loss_grad, direct_loss_grad, LossTerms};
use crate::data::{Dataset, EmgRecording, Mode, Split};
use crate::dsp::{preprocess_emg, ProcessedSignal, FEATURE_RATE, PROCESSED_RATE};
use crate::model::checkpoint::save_checkpoint;
use crate::model::{backward, forward, ModelConfig, ModelOutput, ModelParams};
use crate::{Error, Result};

/// Processed samples per 100 Hz output frame.
pub const FRAME_SAMPLES: usize = (PROCESSED_RATE / FEATURE_RATE) as usize;

pub const LOG_HEADER: &str = "epoch,step,lr,train_loss,val_loss,val_feature_loss,val_phoneme_loss";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainConfig {
    /// Row length `l` in processed samples.
    pub seq_len: usize,
    /// Batch cap `N_Smax` in processed samples.
    pub max_batch_samples: usize,
    pub peak_lr: f64,
    pub warmup: u64,
    pub decay_patience: usize,
    pub decay_factor: f64,
    pub weight_decay: f64,
    pub epochs: usize,
    pub phoneme_weight: f64,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            seq_len: 1600,
            max_batch_samples: 204_800,
            peak_lr: 1e-3,
            warmup: 500,
            decay_patience: 5,
            decay_factor: 0.5,
            weight_decay: 1e-7,
            epochs: 80,
            phoneme_weight: 0.1,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if self.seq_len == 0 || !self.seq_len.is_multiple_of(FRAME_SAMPLES) {
            return bad(format!(
                "seq_len {} must be a positive multiple of {FRAME_SAMPLES}",
                self.seq_len
            ));
        }
        if self.max_batch_samples == 0 || self.decay_patience == 0 {
            return bad("max_batch_samples and decay_patience must be positive".into());
        }
        if !(self.peak_lr > 0.0 && self.peak_lr.is_finite()) {
            return bad(format!("peak_lr {} must be positive", self.peak_lr));
        }
        if !(self.decay_factor > 0.0 && self.decay_factor <= 1.0) {
            return bad(format!("decay_factor {} outside (0, 1]", self.decay_factor));
        }
        if !(self.weight_decay >= 0.0 && self.weight_decay.is_finite()) {
            return bad("weight_decay must be non-negative".into());
        }
        if !(self.phoneme_weight >= 0.0 && self.phoneme_weight.is_finite()) {
            return bad("phoneme_weight must be non-negative".into());
        }
        Ok(())
    }
}

/// Mean validation terms over held-out silent utterances.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ValMetrics {
    pub total: f64,
    pub feature: f64,
    pub phoneme: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct EpochRecord {
    pub epoch: usize,
    pub step: u64,
    pub lr: f64,
    pub train_loss: f64,
    pub val: ValMetrics,
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrainingLog {
    pub initial_val: Option<ValMetrics>,
    pub epochs: Vec<EpochRecord>,
}

impl TrainingLog {
    pub fn to_csv(&self) -> String {
        let mut out = String::from(LOG_HEADER);
        out.push('\n');
        for r in &self.epochs {
            let _ = writeln!(
                out,
                "{},{},{},{},{},{},{}",
                r.epoch, r.step, r.lr, r.train_loss, r.val.total, r.val.feature, r.val.phoneme
            );
        }
        out
    }
}

/// Where checkpoints and the CSV log go; `None` keeps everything in memory.
#[derive(Clone, Copy, Debug, Default)]
pub struct TrainOutputs<'a> {
    pub dir: Option<&'a Path>,
}

/// SplitMix64 finalizer over a base seed and tags.
pub fn derive_seed(base: u64, tags: &[u64]) -> u64 {
    let mut z = base;
    for &t in tags {
        z = z.wrapping_add(0x9E37_79B9_7F4A_7C15).wrapping_add(t);
        z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
        z ^= z >> 31;
    }
    z
}

/// Preprocesses and zero-pads to a whole number of frames.
pub fn prepare_signal(recording: &EmgRecording) -> Result<ProcessedSignal> {
    let p = preprocess_emg(recording)?;
    Ok(ProcessedSignal {
        signal: p.signal.zero_padded_to(FRAME_SAMPLES),
        scale_applied: p.scale_applied,
    })
}

/// Forward pass over a whole utterance with dropout off.
pub fn infer(
    params: &ModelParams,
    cfg: &ModelConfig,
    signal: &ProcessedSignal,
    session: usize,
) -> Result<ModelOutput> {
    let padded = signal.signal.zero_padded_to(cfg.downsample_factor());
    let frames = padded.len() / cfg.downsample_factor();
    let (out, _) = forward(
        params,
        cfg,
        padded.to_frames().view(),
        &vec![session; frames],
        None,
    )?;
    Ok(out)
}

fn check_compatible(dataset: &Dataset, mcfg: &ModelConfig) -> Result<()> {
    mcfg.validate()?;
    if mcfg.downsample_factor() != FRAME_SAMPLES {
        return Err(Error::Config(format!(
            "training needs {FRAME_SAMPLES}x downsampling to reach 100 Hz; {} conv blocks give {}x",
            mcfg.conv_blocks,
            mcfg.downsample_factor()
        )));
    }
    if let Some(r) = dataset.recordings().first() {
        if r.raw.n_channels() != mcfg.in_channels {
            return Err(Error::Config(format!(
                "dataset has {} channels, model expects {}",
                r.raw.n_channels(),
                mcfg.in_channels
            )));
        }
    }
    if dataset.inventory().len() != mcfg.phoneme_count {
        return Err(Error::Config(format!(
            "dataset has {} phonemes, model predicts {}",
            dataset.inventory().len(),
            mcfg.phoneme_count
        )));
    }
    if dataset.sessions().len() > mcfg.sessions {
        return Err(Error::Config(format!(
            "dataset has {} sessions, model embeds {}",
            dataset.sessions().len(),
            mcfg.sessions
        )));
    }
    Ok(())
}

fn utterance_loss(
    dataset: &Dataset,
    r: &EmgRecording,
    pred: &Array2<f64>,
    logits: &Array2<f64>,
    lambda: f64,
) -> Result<LossTerms> {
    let (feat, labels) = dataset.targets_for(r)?;
    match r.mode {
        Mode::Silent => aligned_loss_grad(
            feat.frames().view(),
            pred.view(),
            labels.labels(),
            logits.view(),
            lambda,
        ),
        Mode::Vocalized => direct_loss_grad(
            feat.frames().view(),
            pred.view(),
            labels.labels(),
            logits.view(),
            lambda,
        ),
    }
}

/// Mean feature / phoneme / total loss over the validation split's silent utterances,
/// each forwarded whole.
pub fn validate(
    params: &ModelParams,
    mcfg: &ModelConfig,
    dataset: &Dataset,
    signals: &HashMap<String, ProcessedSignal>,
    lambda: f64,
) -> Result<ValMetrics> {
    let members: Vec<&EmgRecording> = dataset
        .in_split(Split::Validation)
        .filter(|r| r.is_silent())
        .collect();
    if members.is_empty() {
        return Err(Error::Data(
            "validation split has no silent utterances".into(),
        ));
    }
    let terms: Vec<LossTerms> = members
        .par_iter()
        .map(|r| {
            let out = infer(params, mcfg, &signals[&r.utterance_id], r.session)?;
            utterance_loss(dataset, r, &out.mfcc, &out.phoneme_logits, lambda)
        })
        .collect::<Result<_>>()?;
    let n = terms.len() as f64;
    Ok(ValMetrics {
        total: terms.iter().map(|t| t.total).sum::<f64>() / n,
        feature: terms.iter().map(|t| t.feature).sum::<f64>() / n,
        phoneme: terms.iter().map(|t| t.phoneme).sum::<f64>() / n,
    })
}

struct StepResult {
    loss: f64,
    grads: ModelParams,
}

#[allow(clippy::too_many_arguments)]
fn batch_step(
    params: &ModelParams,
    mcfg: &ModelConfig,
    dataset: &Dataset,
    signals: &HashMap<String, ProcessedSignal>,
    plan: &BatchPlan,
    lambda: f64,
    seed: u64,
) -> Result<StepResult> {
    let members: Vec<&EmgRecording> = plan
        .ids
        .iter()
        .map(|id| {
            dataset
                .get(id)
                .ok_or_else(|| Error::Internal(format!("unknown utterance {id}")))
        })
        .collect::<Result<_>>()?;
    let sigs: Vec<&ProcessedSignal> = plan.ids.iter().map(|id| &signals[id]).collect();
    let block = pack_with_plan(&sigs, plan)?;
    let owners = plan.frame_owners(FRAME_SAMPLES);
    let row_frames = plan.seq_len / FRAME_SAMPLES;
    let sessions: Vec<usize> = owners
        .iter()
        .map(|o| o.map_or(0, |k| members[k].session))
        .collect();

    let rows: Vec<_> = (0..plan.rows)
        .into_par_iter()
        .map(|r| {
            let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, &[r as u64]));
            forward(
                params,
                mcfg,
                block.index_axis(Axis(0), r),
                &sessions[r * row_frames..(r + 1) * row_frames],
                Some(&mut rng),
            )
        })
        .collect::<Result<_>>()?;

    let stack = |f: &dyn Fn(&ModelOutput) -> &Array2<f64>, dims: usize| {
        let mut a = Array3::zeros((plan.rows, row_frames, dims));
        for (r, (out, _)) in rows.iter().enumerate() {
            a.index_axis_mut(Axis(0), r).assign(f(out));
        }
        a
    };
    let mfcc = stack(&|o| &o.mfcc, mcfg.out_dims);
    let logits = stack(&|o| &o.phoneme_logits, mcfg.phoneme_count);
    let preds = unpack_batch(mfcc.view(), plan, FRAME_SAMPLES)?;
    let logit_parts = unpack_batch(logits.view(), plan, FRAME_SAMPLES)?;

    let terms: Vec<LossTerms> = members
        .par_iter()
        .zip(preds.par_iter().zip(logit_parts.par_iter()))
        .map(|(r, (p, l))| utterance_loss(dataset, r, p, l, lambda))
        .collect::<Result<_>>()?;
    let n = terms.len() as f64;
    let loss = terms.iter().map(|t| t.total).sum::<f64>() / n;
    let d_pred: Vec<Array2<f64>> = terms.iter().map(|t| &t.d_pred / n).collect();
    let d_logits: Vec<Array2<f64>> = terms.iter().map(|t| &t.d_logits / n).collect();
    let d_mfcc = repack_frames(
        &d_pred.iter().map(|a| a.view()).collect::<Vec<_>>(),
        plan,
        FRAME_SAMPLES,
        mcfg.out_dims,
    )?;
    let d_log = repack_frames(
        &d_logits.iter().map(|a| a.view()).collect::<Vec<_>>(),
        plan,
        FRAME_SAMPLES,
        mcfg.phoneme_count,
    )?;

    let row_grads: Vec<ModelParams> = rows
        .par_iter()
        .enumerate()
        .map(|(r, (_, cache))| {
            backward(
                params,
                mcfg,
                cache,
                d_mfcc.index_axis(Axis(0), r),
                d_log.index_axis(Axis(0), r),
            )
            .map(|(g, _)| g)
        })
        .collect::<Result<_>>()?;
    let mut grads = params.zeros_like();
    for g in &row_grads {
        grads.add_scaled(g, 1.0);
    }
    Ok(StepResult { loss, grads })
}

fn write_log(dir: &Path, log: &TrainingLog) -> Result<()> {
    let path = dir.join("train_log.csv");
    std::fs::write(&path, log.to_csv()).map_err(|e| Error::io(&path, e))
}

/// Trains from a fresh initialization seeded by `tcfg.seed`.
pub fn train_loop(
    dataset: &Dataset,
    mcfg: &ModelConfig,
    tcfg: &TrainConfig,
) -> Result<(ModelParams, TrainingLog)> {
    train_loop_with(dataset, mcfg, tcfg, TrainOutputs::default())
}

/// [`train_loop`] that also writes the log and checkpoints into `outputs.dir`.
pub fn train_loop_with(
    dataset: &Dataset,
    mcfg: &ModelConfig,
    tcfg: &TrainConfig,
    outputs: TrainOutputs<'_>,
) -> Result<(ModelParams, TrainingLog)> {
    tcfg.validate()?;
    check_compatible(dataset, mcfg)?;
    let mut params = ModelParams::init(mcfg, tcfg.seed)?;
    let mut log = TrainingLog {
        initial_val: None,
        epochs: Vec::new(),
    };
    if let Some(dir) = outputs.dir {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        write_log(dir, &log)?;
    }
    if tcfg.epochs == 0 {
        return Ok((params, log));
    }

    let used: Vec<&EmgRecording> = dataset
        .recordings()
        .iter()
        .filter(|r| {
            matches!(
                dataset.split_of(&r.utterance_id),
                Some(Split::Train | Split::Validation)
            )
        })
        .collect();
    let signals: HashMap<String, ProcessedSignal> = used
        .par_iter()
        .map(|r| prepare_signal(r).map(|s| (r.utterance_id.clone(), s)))
        .collect::<Result<_>>()?;
    let items: Vec<(String, usize)> = dataset
        .in_split(Split::Train)
        .map(|r| (r.utterance_id.clone(), signals[&r.utterance_id].len()))
        .collect();
    if items.is_empty() {
        return Err(Error::Data("training split is empty".into()));
    }

    let lambda = tcfg.phoneme_weight;
    log.initial_val = Some(validate(&params, mcfg, dataset, &signals, lambda)?);
    let mut state = OptimizerState::new(&params, tcfg.decay_patience);
    let mut best = f64::INFINITY;

    for epoch in 1..=tcfg.epochs {
        let plans = shuffled_batches(
            &items,
            tcfg.max_batch_samples,
            tcfg.seq_len,
            derive_seed(tcfg.seed, &[epoch as u64]),
        )?;
        let mut train_sum = 0.0;
        for (b, plan) in plans.iter().enumerate() {
            let seed = derive_seed(tcfg.seed, &[epoch as u64, b as u64 + 1]);
            let step = batch_step(&params, mcfg, dataset, &signals, plan, lambda, seed)?;
            let step_no = state.step as usize;
            let diverged = |reason: String| Error::Diverged {
                epoch,
                step: step_no,
                reason,
                last_good: Box::new(params.clone()),
            };
            if !step.loss.is_finite() {
                return Err(diverged(format!("loss is {}", step.loss)));
            }
            let lr = lr_schedule(
                state.step + 1,
                tcfg.peak_lr,
                tcfg.warmup,
                state.plateau.decays,
                tcfg.decay_factor,
            );
            let mut next = params.clone();
            match adamw_step(&mut next, &step.grads, &mut state, lr, tcfg.weight_decay) {
                Ok(()) if next.all_finite() => params = next,
                Ok(()) => return Err(diverged("parameters became non-finite".into())),
                Err(e) => return Err(diverged(e.to_string())),
            }
            train_sum += step.loss;
        }
        let val = validate(&params, mcfg, dataset, &signals, lambda)?;
        if !val.total.is_finite() {
            return Err(Error::Diverged {
                epoch,
                step: state.step as usize,
                reason: format!("validation loss is {}", val.total),
                last_good: Box::new(params),
            });
        }
        state.plateau.observe(val.total);
        log.epochs.push(EpochRecord {
            epoch,
            step: state.step,
            lr: state.lr,
            train_loss: train_sum / plans.len() as f64,
            val,
        });
        if let Some(dir) = outputs.dir {
            save_checkpoint(&dir.join(format!("epoch_{epoch:03}.mprm")), mcfg, &params)?;
            if val.total < best {
                save_checkpoint(&dir.join("best.mprm"), mcfg, &params)?;
            }
            write_log(dir, &log)?;
        }
        best = best.min(val.total);
    }
    Ok((params, log))
}

/// Predicted features and posteriors for whole utterances, in input order.
pub fn predict_all(
    params: &ModelParams,
    mcfg: &ModelConfig,
    recordings: &[&EmgRecording],
) -> Result<Vec<ModelOutput>> {
    recordings
        .par_iter()
        .map(|r| infer(params, mcfg, &prepare_signal(r)?, r.session))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn seeds_differ_by_tag() {
        assert_ne!(derive_seed(1, &[1, 2]), derive_seed(1, &[2, 1]));
        assert_eq!(derive_seed(7, &[3]), derive_seed(7, &[3]));
    }

    #[test]
    fn default_config_valid() {
        TrainConfig::default().validate().unwrap();
        assert!(TrainConfig {
            seq_len: 12,
            ..TrainConfig::default()
        }
        .validate()
        .is_err());
    }
}
