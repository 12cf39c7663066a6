//! Post-norm Transformer encoder layer with a ReLU feed-forward block.

use ndarray::{Array2, ArrayView2};
use rand_chacha::ChaCha8Rng;

use super::attention::{self, AttnCache};
use super::layers::{self, NormCache};
use super::params::LayerParams;

pub(crate) struct LayerCache {
    attn: AttnCache,
    drop_attn: Option<Array2<f64>>,
    norm1: NormCache,
    y: Array2<f64>,
    hidden: Array2<f64>,
    drop_hidden: Option<Array2<f64>>,
    hidden_dropped: Array2<f64>,
    drop_ff: Option<Array2<f64>>,
    norm2: NormCache,
}

impl LayerCache {
    pub(crate) fn attention(&self) -> &AttnCache {
        &self.attn
    }
}

pub(crate) fn layer_forward(
    x: ArrayView2<'_, f64>,
    p: &LayerParams,
    heads: usize,
    clip: usize,
    dropout: f64,
    mut rng: Option<&mut ChaCha8Rng>,
) -> (Array2<f64>, LayerCache) {
    let (len, d) = x.dim();
    let (a, attn) = attention::attention_forward(x, p, heads, clip);
    let drop_attn = layers::dropout_mask((len, d), dropout, rng.as_deref_mut());
    let a = layers::apply_mask(a, drop_attn.as_ref());
    let (y, norm1) = layers::layer_norm((&x + &a).view(), &p.norm1_g, &p.norm1_b);
    let hidden = layers::relu(layers::linear(y.view(), &p.ff1_w, Some(&p.ff1_b)));
    let drop_hidden = layers::dropout_mask(hidden.dim(), dropout, rng.as_deref_mut());
    let hidden_dropped = layers::apply_mask(hidden.clone(), drop_hidden.as_ref());
    let f = layers::linear(hidden_dropped.view(), &p.ff2_w, Some(&p.ff2_b));
    let drop_ff = layers::dropout_mask((len, d), dropout, rng);
    let f = layers::apply_mask(f, drop_ff.as_ref());
    let (z, norm2) = layers::layer_norm((&y + &f).view(), &p.norm2_g, &p.norm2_b);
    let cache = LayerCache {
        attn,
        drop_attn,
        norm1,
        y,
        hidden,
        drop_hidden,
        hidden_dropped,
        drop_ff,
        norm2,
    };
    (z, cache)
}

pub(crate) fn layer_backward(
    cache: &LayerCache,
    p: &LayerParams,
    heads: usize,
    clip: usize,
    dz: ArrayView2<'_, f64>,
    g: &mut LayerParams,
) -> Array2<f64> {
    let dsum2 =
        layers::layer_norm_backward(&cache.norm2, &p.norm2_g, dz, &mut g.norm2_g, &mut g.norm2_b);
    let df = layers::apply_mask(dsum2.clone(), cache.drop_ff.as_ref());
    let dhd = layers::linear_backward(
        cache.hidden_dropped.view(),
        &p.ff2_w,
        df.view(),
        &mut g.ff2_w,
        Some(&mut g.ff2_b),
    );
    let dh = layers::apply_mask(dhd, cache.drop_hidden.as_ref());
    let dh = layers::relu_backward(cache.hidden.view(), dh);
    let mut dy = layers::linear_backward(
        cache.y.view(),
        &p.ff1_w,
        dh.view(),
        &mut g.ff1_w,
        Some(&mut g.ff1_b),
    );
    dy += &dsum2;
    let dsum1 = layers::layer_norm_backward(
        &cache.norm1,
        &p.norm1_g,
        dy.view(),
        &mut g.norm1_g,
        &mut g.norm1_b,
    );
    let da = layers::apply_mask(dsum1.clone(), cache.drop_attn.as_ref());
    let mut dx = attention::attention_backward(&cache.attn, p, heads, clip, da.view(), g);
    dx += &dsum1;
    dx
}
