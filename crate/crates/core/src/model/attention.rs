//! Multi-head self-attention with clipped relative position embeddings on the keys.
//!
//! For head dimension `d_h`, the logit between query `i` and key `j` is
//! `((W_K x_j + p[i - j]) · (W_Q x_i)) / sqrt(d_h)`, with `p` one learned
//! table per layer shared by all heads. Pairs farther apart than `k` are
//! masked before the softmax, so they get exactly zero weight.

use ndarray::{s, Array2, ArrayView2};

use super::layers;
use super::params::LayerParams;

pub(crate) struct AttnCache {
    x: Array2<f64>,
    q: Array2<f64>,
    k: Array2<f64>,
    v: Array2<f64>,
    /// Per head, `T × (2k + 1)`; column `o` holds the weight on key `i + o - k`.
    weights: Vec<Array2<f64>>,
    ctx: Array2<f64>,
}

impl AttnCache {
    pub(crate) fn weights(&self) -> &[Array2<f64>] {
        &self.weights
    }
}

fn window(i: usize, len: usize, clip: usize) -> std::ops::RangeInclusive<usize> {
    i.saturating_sub(clip)..=(i + clip).min(len - 1)
}

pub(crate) fn attention_forward(
    x: ArrayView2<'_, f64>,
    p: &LayerParams,
    heads: usize,
    clip: usize,
) -> (Array2<f64>, AttnCache) {
    let (len, d) = x.dim();
    let dh = d / heads;
    let scale = 1.0 / (dh as f64).sqrt();
    let q = x.dot(&p.wq);
    let k = x.dot(&p.wk);
    let v = x.dot(&p.wv);
    let mut ctx = Array2::zeros((len, d));
    let mut weights = Vec::with_capacity(heads);
    for h in 0..heads {
        let cols = s![.., h * dh..(h + 1) * dh];
        let (qh, kh, vh) = (q.slice(cols), k.slice(cols), v.slice(cols));
        let mut w = Array2::zeros((len, 2 * clip + 1));
        for i in 0..len {
            let qi = qh.row(i);
            let mut logits = Vec::with_capacity(2 * clip + 1);
            for j in window(i, len, clip) {
                let rel = p.rel.row(i + clip - j);
                let e: f64 = qi
                    .iter()
                    .zip(kh.row(j).iter().zip(rel.iter()))
                    .map(|(a, (b, c))| a * (b + c))
                    .sum();
                logits.push(e * scale);
            }
            let probs = layers::softmax(ndarray::ArrayView1::from(&logits));
            let mut out = ctx.slice_mut(s![i, h * dh..(h + 1) * dh]);
            for (a, j) in probs.iter().zip(window(i, len, clip)) {
                w[[i, j + clip - i]] = *a;
                out.scaled_add(*a, &vh.row(j));
            }
        }
        weights.push(w);
    }
    let y = layers::linear(ctx.view(), &p.wo, Some(&p.bo));
    let cache = AttnCache {
        x: x.to_owned(),
        q,
        k,
        v,
        weights,
        ctx,
    };
    (y, cache)
}

pub(crate) fn attention_backward(
    cache: &AttnCache,
    p: &LayerParams,
    heads: usize,
    clip: usize,
    dy: ArrayView2<'_, f64>,
    g: &mut LayerParams,
) -> Array2<f64> {
    let (len, d) = cache.x.dim();
    let dh = d / heads;
    let scale = 1.0 / (dh as f64).sqrt();
    let dctx = layers::linear_backward(cache.ctx.view(), &p.wo, dy, &mut g.wo, Some(&mut g.bo));
    let mut dq = Array2::zeros((len, d));
    let mut dk = Array2::zeros((len, d));
    let mut dv = Array2::zeros((len, d));
    for h in 0..heads {
        let cols = s![.., h * dh..(h + 1) * dh];
        let (qh, kh, vh) = (
            cache.q.slice(cols),
            cache.k.slice(cols),
            cache.v.slice(cols),
        );
        let w = &cache.weights[h];
        let dctx_h = dctx.slice(cols);
        for i in 0..len {
            let range = window(i, len, clip);
            let dci = dctx_h.row(i);
            // d(weight) then softmax backward
            let da: Vec<f64> = range
                .clone()
                .map(|j| dci.iter().zip(vh.row(j).iter()).map(|(a, b)| a * b).sum())
                .collect();
            let avg: f64 = range
                .clone()
                .zip(&da)
                .map(|(j, g)| w[[i, j + clip - i]] * g)
                .sum();
            for (j, dai) in range.zip(da) {
                let a = w[[i, j + clip - i]];
                dv.slice_mut(s![j, h * dh..(h + 1) * dh])
                    .scaled_add(a, &dci);
                let de = a * (dai - avg) * scale;
                if de == 0.0 {
                    continue;
                }
                let r = i + clip - j;
                let qi = qh.row(i);
                {
                    let mut dqi = dq.slice_mut(s![i, h * dh..(h + 1) * dh]);
                    dqi.scaled_add(de, &kh.row(j));
                    dqi.scaled_add(de, &p.rel.row(r));
                }
                dk.slice_mut(s![j, h * dh..(h + 1) * dh])
                    .scaled_add(de, &qi);
                g.rel.row_mut(r).scaled_add(de, &qi);
            }
        }
    }
    let x = cache.x.view();
    let mut dx = layers::linear_backward(x, &p.wq, dq.view(), &mut g.wq, None);
    dx += &layers::linear_backward(x, &p.wk, dk.view(), &mut g.wk, None);
    dx += &layers::linear_backward(x, &p.wv, dv.view(), &mut g.wv, None);
    dx
}
