//! Phoneme-context baseline: a Transformer that sees only the primary model's
//! collapsed phoneme predictions and must recover the labels from context.

use ndarray::{Array1, Array2, ArrayViewD, ArrayViewMutD, Axis};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::forced::{collapse_phonemes, forced_choice_accuracy, AlignedPredictions};
use crate::model::{
    layer_backward, layer_forward, linear, linear_backward, log_softmax_rows, param_group, Init,
    LayerCache, LayerParams, ModelConfig,
};
use crate::training::{adamw_update, derive_seed, AdamHyper};
use crate::{Error, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct BaselineConfig {
    pub model_dim: usize,
    pub heads: usize,
    pub layers: usize,
    pub ff_dim: usize,
    pub rel_clip: usize,
    pub dropout: f64,
    pub epochs: usize,
    pub lr: f64,
    pub batch_utterances: usize,
    pub seed: u64,
}

impl Default for BaselineConfig {
    fn default() -> Self {
        Self::from_model(&ModelConfig::desk(), 0)
    }
}

impl BaselineConfig {
    /// Same Transformer dimensions as the primary model.
    pub fn from_model(cfg: &ModelConfig, seed: u64) -> Self {
        Self {
            model_dim: cfg.model_dim,
            heads: cfg.heads,
            layers: cfg.transformer_layers,
            ff_dim: cfg.ff_dim,
            rel_clip: cfg.rel_clip,
            dropout: cfg.dropout,
            epochs: 30,
            lr: 1e-3,
            batch_utterances: 8,
            seed,
        }
    }

    fn validate(&self) -> Result<()> {
        if self.model_dim == 0 || self.heads == 0 || !self.model_dim.is_multiple_of(self.heads) {
            return Err(Error::Config(
                "baseline model_dim must be a positive multiple of heads".into(),
            ));
        }
        if self.ff_dim == 0
            || self.batch_utterances == 0
            || !(self.lr > 0.0)
            || !(0.0..1.0).contains(&self.dropout)
        {
            return Err(Error::Config("invalid baseline hyperparameters".into()));
        }
        Ok(())
    }
}

param_group!(BaselineHead {
    embed: Array2<f64>,
    out_w: Array2<f64>,
    out_b: Array1<f64>,
});

#[derive(Clone, Debug, PartialEq)]
struct BaselineParams {
    head: BaselineHead,
    layers: Vec<LayerParams>,
}

impl BaselineParams {
    fn zeros_like(&self) -> Self {
        Self {
            head: self.head.zeros_like(),
            layers: self.layers.iter().map(LayerParams::zeros_like).collect(),
        }
    }

    fn tensors(&self) -> Vec<ArrayViewD<'_, f64>> {
        let mut out = Vec::new();
        self.head.visit("", &mut |_, t| out.push(t));
        for l in &self.layers {
            l.visit("", &mut |_, t| out.push(t));
        }
        out
    }

    fn tensors_mut(&mut self) -> Vec<ArrayViewMutD<'_, f64>> {
        let mut out = Vec::new();
        self.head.visit_mut("", &mut |_, t| out.push(t));
        for l in &mut self.layers {
            l.visit_mut("", &mut |_, t| out.push(t));
        }
        out
    }

    fn add(&mut self, other: &Self) {
        for (mut a, b) in self.tensors_mut().into_iter().zip(other.tensors()) {
            a += &b;
        }
    }
}

/// A trained context baseline for one articulatory feature.
#[derive(Clone, Debug)]
pub struct ContextBaseline {
    cfg: BaselineConfig,
    sets: Vec<Vec<usize>>,
    n_phonemes: usize,
    params: BaselineParams,
}

struct SeqCache {
    ids: Vec<usize>,
    layers: Vec<LayerCache>,
    top: Array2<f64>,
    log_probs: Array2<f64>,
}

impl ContextBaseline {
    fn forward(&self, ids: &[usize], rng: Option<&mut ChaCha8Rng>) -> SeqCache {
        let mut rng = rng;
        let p = &self.params;
        let mut h = p.head.embed.select(Axis(0), ids);
        let mut layers = Vec::with_capacity(p.layers.len());
        let dropout = if rng.is_some() { self.cfg.dropout } else { 0.0 };
        for l in &p.layers {
            let (y, c) = layer_forward(
                h.view(),
                l,
                self.cfg.heads,
                self.cfg.rel_clip,
                dropout,
                rng.as_deref_mut(),
            );
            layers.push(c);
            h = y;
        }
        let logits = linear(h.view(), &p.head.out_w, Some(&p.head.out_b));
        SeqCache {
            ids: ids.to_vec(),
            layers,
            top: h,
            log_probs: log_softmax_rows(logits.view()),
        }
    }

    /// Mean NLL of `labels` and its gradient.
    fn loss_grad(&self, cache: &SeqCache, labels: &[usize]) -> (f64, BaselineParams) {
        let p = &self.params;
        let mut g = p.zeros_like();
        let n = labels.len() as f64;
        let mut d_logits = cache.log_probs.mapv(f64::exp);
        let mut loss = 0.0;
        for (i, &l) in labels.iter().enumerate() {
            loss -= cache.log_probs[[i, l]];
            d_logits[[i, l]] -= 1.0;
        }
        d_logits /= n;
        let mut dh = linear_backward(
            cache.top.view(),
            &p.head.out_w,
            d_logits.view(),
            &mut g.head.out_w,
            Some(&mut g.head.out_b),
        );
        for (k, l) in p.layers.iter().enumerate().rev() {
            dh = layer_backward(
                &cache.layers[k],
                l,
                self.cfg.heads,
                self.cfg.rel_clip,
                dh.view(),
                &mut g.layers[k],
            );
        }
        for (row, &id) in dh.rows().into_iter().zip(&cache.ids) {
            let mut dst = g.head.embed.row_mut(id);
            dst += &row;
        }
        (loss / n, g)
    }

    /// Log-posteriors over the original inventory for a sequence of predictions.
    pub fn posteriors(&self, predicted: &[usize]) -> Result<Array2<f64>> {
        let ids = collapse_phonemes(predicted, &self.sets, self.n_phonemes)?;
        Ok(self.forward(&ids, None).log_probs)
    }

    /// Replaces the primary model's posteriors with the baseline's.
    pub fn rescore(&self, aligned: &AlignedPredictions) -> Result<AlignedPredictions> {
        let log_probs = self.posteriors(&aligned.predicted)?;
        let predicted = log_probs
            .rows()
            .into_iter()
            .map(|r| {
                r.iter()
                    .enumerate()
                    .fold(
                        (0, f64::NEG_INFINITY),
                        |b, (i, &v)| if v > b.1 { (i, v) } else { b },
                    )
                    .0
            })
            .collect();
        Ok(AlignedPredictions {
            labels: aligned.labels.clone(),
            source_frames: aligned.source_frames.clone(),
            predicted,
            log_probs,
        })
    }

    /// Forced-choice accuracy of the baseline on `eval`.
    pub fn accuracy(&self, eval: &[AlignedPredictions]) -> Result<Option<f64>> {
        let rescored: Vec<AlignedPredictions> = eval
            .iter()
            .map(|a| self.rescore(a))
            .collect::<Result<_>>()?;
        Ok(forced_choice_accuracy(&rescored, &self.sets))
    }
}

/// Trains a baseline on collapsed primary-model predictions of `train` and
/// scores it on `eval` with the forced-choice procedure.
pub fn context_baseline(
    train: &[AlignedPredictions],
    eval: &[AlignedPredictions],
    sets: &[Vec<usize>],
    n_phonemes: usize,
    cfg: &BaselineConfig,
) -> Result<(ContextBaseline, Option<f64>)> {
    cfg.validate()?;
    let data: Vec<(Vec<usize>, &[usize])> = train
        .iter()
        .filter(|a| !a.is_empty())
        .map(|a| {
            Ok((
                collapse_phonemes(&a.predicted, sets, n_phonemes)?,
                a.labels.as_slice(),
            ))
        })
        .collect::<Result<_>>()?;
    if data.is_empty() {
        return Err(Error::Data(
            "no training sequences for the context baseline".into(),
        ));
    }
    if let Some(bad) = data
        .iter()
        .flat_map(|(_, l)| l.iter())
        .find(|&&l| l >= n_phonemes)
    {
        return Err(Error::Input(format!("label {bad} outside inventory")));
    }
    let vocab = n_phonemes + sets.len();
    let d = cfg.model_dim;
    let mut init = Init::new(cfg.seed);
    let head = BaselineHead {
        embed: init.gaussian(vocab, d),
        out_w: init.linear(d, n_phonemes),
        out_b: init.uniform1(n_phonemes, d),
    };
    let layers = (0..cfg.layers)
        .map(|_| {
            LayerParams::init(
                &mut init,
                d,
                cfg.ff_dim,
                2 * cfg.rel_clip + 1,
                d / cfg.heads,
            )
        })
        .collect();
    let mut model = ContextBaseline {
        cfg: cfg.clone(),
        sets: sets.to_vec(),
        n_phonemes,
        params: BaselineParams { head, layers },
    };
    let mut m = model.params.zeros_like();
    let mut v = model.params.zeros_like();
    let mut step = 0u64;
    let mut order: Vec<usize> = (0..data.len()).collect();
    for epoch in 0..cfg.epochs {
        order.shuffle(&mut ChaCha8Rng::seed_from_u64(derive_seed(
            cfg.seed,
            &[epoch as u64],
        )));
        for (b, chunk) in order.chunks(cfg.batch_utterances).enumerate() {
            let grads: Vec<(f64, BaselineParams)> = chunk
                .par_iter()
                .map(|&k| {
                    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(
                        cfg.seed,
                        &[epoch as u64, b as u64, k as u64],
                    ));
                    let cache = model.forward(&data[k].0, Some(&mut rng));
                    model.loss_grad(&cache, data[k].1)
                })
                .collect();
            let mut total = model.params.zeros_like();
            for (loss, g) in &grads {
                if !loss.is_finite() {
                    return Err(Error::NonFinite("context baseline loss".into()));
                }
                total.add(g);
            }
            let scale = 1.0 / grads.len() as f64;
            step += 1;
            let w = model.params.tensors_mut();
            let g = total.tensors();
            for (((mut w, g), mut m), mut v) in w
                .into_iter()
                .zip(g)
                .zip(m.tensors_mut())
                .zip(v.tensors_mut())
            {
                let g = g.mapv(|x| x * scale);
                adamw_update(
                    w.iter_mut(),
                    g.iter(),
                    m.iter_mut(),
                    v.iter_mut(),
                    step,
                    cfg.lr,
                    0.0,
                    AdamHyper::default(),
                );
            }
        }
    }
    let acc = model.accuracy(eval)?;
    Ok((model, acc))
}
