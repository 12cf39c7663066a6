//! The transduction network: residual conv blocks, session embedding,
//! relative-position Transformer encoder, and the feature and phoneme heads.
//!
//! [`forward`] returns the outputs together with a [`ForwardCache`];
//! [`backward`] turns upstream gradients on both heads into a full set of
//! parameter gradients with the same layout as [`ModelParams`].

mod attention;
pub mod checkpoint;
mod config;
mod conv;
mod layers;
pub(crate) mod params;
mod transformer;

use ndarray::{Array1, Array2, ArrayView2};
use rand_chacha::ChaCha8Rng;

use crate::dsp::FeatureSequence;
use crate::{Error, Result};

pub use config::ModelConfig;
pub use params::{ConvBlockParams, HeadParams, LayerParams, ModelParams};

pub(crate) use layers::{linear, linear_backward, log_softmax_rows};
pub(crate) use params::{param_group, Init};
pub(crate) use transformer::{layer_backward, layer_forward, LayerCache};

/// Predictions for one input sequence.
#[derive(Clone, Debug, PartialEq)]
pub struct ModelOutput {
    /// Predicted speech features, frames × 26.
    pub mfcc: Array2<f64>,
    /// Unnormalized phoneme scores, frames × phoneme count.
    pub phoneme_logits: Array2<f64>,
}

impl ModelOutput {
    pub fn n_frames(&self) -> usize {
        self.mfcc.nrows()
    }

    pub fn features(&self) -> Result<FeatureSequence> {
        FeatureSequence::new(self.mfcc.clone())
    }

    pub fn log_posteriors(&self) -> Array2<f64> {
        log_softmax_rows(self.phoneme_logits.view())
    }
}

/// Activations kept from [`forward`] for [`backward`].
pub struct ForwardCache {
    blocks: Vec<conv::BlockCache>,
    conv_out: Array2<f64>,
    sessions: Vec<usize>,
    layers: Vec<LayerCache>,
    top: Array2<f64>,
}

impl ForwardCache {
    pub fn n_frames(&self) -> usize {
        self.top.nrows()
    }

    /// Attention weights per layer and head, `frames × (2k + 1)` each.
    pub fn attention_weights(&self) -> Vec<&[Array2<f64>]> {
        self.layers
            .iter()
            .map(|l| l.attention().weights())
            .collect()
    }
}

/// Projected session vector, added to every frame of the conv output.
pub fn session_embed(params: &ModelParams, session: usize) -> Result<Array1<f64>> {
    let table = &params.head.session_table;
    if session >= table.nrows() {
        return Err(Error::Input(format!(
            "session index {session} out of range ({} sessions)",
            table.nrows()
        )));
    }
    Ok(table.row(session).dot(&params.head.session_proj))
}

/// Runs the network over `input` (`samples × channels`).
///
/// `sessions` holds one session index per output frame. Dropout is sampled from
/// `rng` when one is supplied and disabled otherwise.
pub fn forward(
    params: &ModelParams,
    cfg: &ModelConfig,
    input: ArrayView2<'_, f64>,
    sessions: &[usize],
    mut rng: Option<&mut ChaCha8Rng>,
) -> Result<(ModelOutput, ForwardCache)> {
    let factor = cfg.downsample_factor();
    if input.ncols() != cfg.in_channels {
        return Err(Error::Input(format!(
            "expected {} input channels, got {}",
            cfg.in_channels,
            input.ncols()
        )));
    }
    if !input.nrows().is_multiple_of(factor) {
        return Err(Error::Input(format!(
            "input length {} is not a multiple of {factor}; pad upstream",
            input.nrows()
        )));
    }
    let frames = input.nrows() / factor;
    if sessions.len() != frames {
        return Err(Error::Input(format!(
            "{} session indices for {frames} frames",
            sessions.len()
        )));
    }
    let table = &params.head.session_table;
    if let Some(&bad) = sessions.iter().find(|&&s| s >= table.nrows()) {
        return Err(Error::Input(format!("session index {bad} out of range")));
    }

    let mut x = input.to_owned();
    let mut block_caches = Vec::with_capacity(params.blocks.len());
    for b in &params.blocks {
        let (y, c) = conv::block_forward(x.view(), b);
        block_caches.push(c);
        x = y;
    }
    let conv_out = x;
    let mut h = layers::linear(
        conv_out.view(),
        &params.head.input_w,
        Some(&params.head.input_b),
    );
    if frames > 0 {
        let projected = table.dot(&params.head.session_proj);
        for (mut row, &s) in h.rows_mut().into_iter().zip(sessions) {
            row += &projected.row(s);
        }
    }
    let mut layer_caches = Vec::with_capacity(params.layers.len());
    for l in &params.layers {
        let (y, c) = transformer::layer_forward(
            h.view(),
            l,
            cfg.heads,
            cfg.rel_clip,
            cfg.dropout,
            rng.as_deref_mut(),
        );
        layer_caches.push(c);
        h = y;
    }
    let mfcc = layers::linear(h.view(), &params.head.mfcc_w, Some(&params.head.mfcc_b));
    let phoneme_logits = layers::linear(
        h.view(),
        &params.head.phoneme_w,
        Some(&params.head.phoneme_b),
    );
    let cache = ForwardCache {
        blocks: block_caches,
        conv_out,
        sessions: sessions.to_vec(),
        layers: layer_caches,
        top: h,
    };
    Ok((
        ModelOutput {
            mfcc,
            phoneme_logits,
        },
        cache,
    ))
}

/// Gradients of every parameter given upstream gradients on both heads.
///
/// Also returns the gradient with respect to the input signal.
pub fn backward(
    params: &ModelParams,
    cfg: &ModelConfig,
    cache: &ForwardCache,
    d_mfcc: ArrayView2<'_, f64>,
    d_logits: ArrayView2<'_, f64>,
) -> Result<(ModelParams, Array2<f64>)> {
    let frames = cache.n_frames();
    if d_mfcc.dim() != (frames, cfg.out_dims) || d_logits.dim() != (frames, cfg.phoneme_count) {
        return Err(Error::Internal(format!(
            "gradient shapes {:?} / {:?} do not match cached {frames} frames",
            d_mfcc.dim(),
            d_logits.dim()
        )));
    }
    if cache.blocks.len() != params.blocks.len() || cache.layers.len() != params.layers.len() {
        return Err(Error::Internal(
            "cache was built for a different model".into(),
        ));
    }
    let mut g = params.zeros_like();
    let top = cache.top.view();
    let mut dh = layers::linear_backward(
        top,
        &params.head.mfcc_w,
        d_mfcc,
        &mut g.head.mfcc_w,
        Some(&mut g.head.mfcc_b),
    );
    dh += &layers::linear_backward(
        top,
        &params.head.phoneme_w,
        d_logits,
        &mut g.head.phoneme_w,
        Some(&mut g.head.phoneme_b),
    );
    for ((lc, lp), lg) in cache
        .layers
        .iter()
        .zip(&params.layers)
        .zip(g.layers.iter_mut())
        .rev()
    {
        dh = transformer::layer_backward(lc, lp, cfg.heads, cfg.rel_clip, dh.view(), lg);
    }
    // session embedding: rows of the table projected and broadcast per frame
    let table = &params.head.session_table;
    for (row, &s) in dh.rows().into_iter().zip(&cache.sessions) {
        let emb = table.row(s);
        for (e_idx, &e) in emb.iter().enumerate() {
            g.head.session_proj.row_mut(e_idx).scaled_add(e, &row);
        }
        let d_emb = params.head.session_proj.dot(&row);
        let mut trow = g.head.session_table.row_mut(s);
        trow += &d_emb;
    }
    let mut dx = layers::linear_backward(
        cache.conv_out.view(),
        &params.head.input_w,
        dh.view(),
        &mut g.head.input_w,
        Some(&mut g.head.input_b),
    );
    for ((bc, bp), bg) in cache
        .blocks
        .iter()
        .zip(&params.blocks)
        .zip(g.blocks.iter_mut())
        .rev()
    {
        dx = conv::block_backward(bc, bp, dx, bg);
    }
    Ok((g, dx))
}
