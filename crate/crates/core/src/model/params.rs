use ndarray::{Array1, Array2, Array3, ArrayViewD, ArrayViewMutD};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use super::ModelConfig;
use crate::Result;

const EMBED_STD: f64 = 0.1;

pub(crate) type Visitor<'a, 'b> = &'b mut dyn FnMut(String, ArrayViewD<'a, f64>);
pub(crate) type VisitorMut<'a, 'b> = &'b mut dyn FnMut(String, ArrayViewMutD<'a, f64>);

macro_rules! param_group {
    ($(#[$m:meta])* $name:ident { $($field:ident : $ty:ty),* $(,)? }) => {
        $(#[$m])*
        #[derive(Clone, Debug, PartialEq)]
        pub struct $name {
            $(pub $field: $ty),*
        }

        impl $name {
            pub(crate) fn visit<'a>(&'a self, prefix: &str, f: $crate::model::params::Visitor<'a, '_>) {
                $( f(format!("{prefix}{}", stringify!($field)), self.$field.view().into_dyn()); )*
            }

            pub(crate) fn visit_mut<'a>(&'a mut self, prefix: &str, f: $crate::model::params::VisitorMut<'a, '_>) {
                $( f(format!("{prefix}{}", stringify!($field)), self.$field.view_mut().into_dyn()); )*
            }

            pub(crate) fn zeros_like(&self) -> Self {
                Self { $($field: <$ty>::zeros(self.$field.raw_dim())),* }
            }
        }
    };
}
pub(crate) use param_group;

param_group!(
    /// One residual block. Conv weights are `[kernel, in, out]`.
    ConvBlockParams {
        conv1_w: Array3<f64>,
        conv1_b: Array1<f64>,
        norm1_g: Array1<f64>,
        norm1_b: Array1<f64>,
        conv2_w: Array3<f64>,
        conv2_b: Array1<f64>,
        norm2_g: Array1<f64>,
        norm2_b: Array1<f64>,
        short_w: Array2<f64>,
        short_b: Array1<f64>,
    }
);

param_group!(
    /// One post-norm Transformer layer. Linear weights are `[in, out]`.
    LayerParams {
        wq: Array2<f64>,
        wk: Array2<f64>,
        wv: Array2<f64>,
        wo: Array2<f64>,
        bo: Array1<f64>,
        rel: Array2<f64>,
        norm1_g: Array1<f64>,
        norm1_b: Array1<f64>,
        ff1_w: Array2<f64>,
        ff1_b: Array1<f64>,
        ff2_w: Array2<f64>,
        ff2_b: Array1<f64>,
        norm2_g: Array1<f64>,
        norm2_b: Array1<f64>,
    }
);

param_group!(
    HeadParams {
        input_w: Array2<f64>,
        input_b: Array1<f64>,
        session_table: Array2<f64>,
        session_proj: Array2<f64>,
        mfcc_w: Array2<f64>,
        mfcc_b: Array1<f64>,
        phoneme_w: Array2<f64>,
        phoneme_b: Array1<f64>,
    }
);

/// Deterministic initializer: fan-in scaled uniform weights, small Gaussian embeddings.
pub(crate) struct Init {
    rng: ChaCha8Rng,
    embed: Normal<f64>,
}

impl Init {
    pub(crate) fn new(seed: u64) -> Self {
        Self {
            rng: ChaCha8Rng::seed_from_u64(seed),
            embed: Normal::new(0.0, EMBED_STD).expect("valid std"),
        }
    }

    fn bound(fan_in: usize) -> f64 {
        1.0 / (fan_in as f64).sqrt()
    }

    pub(crate) fn uniform1(&mut self, n: usize, fan_in: usize) -> Array1<f64> {
        let b = Self::bound(fan_in);
        Array1::from_shape_fn(n, |_| self.rng.random_range(-b..b))
    }

    pub(crate) fn uniform2(&mut self, rows: usize, cols: usize, fan_in: usize) -> Array2<f64> {
        let b = Self::bound(fan_in);
        Array2::from_shape_fn((rows, cols), |_| self.rng.random_range(-b..b))
    }

    /// `[in, out]` linear weight.
    pub(crate) fn linear(&mut self, input: usize, output: usize) -> Array2<f64> {
        self.uniform2(input, output, input)
    }

    pub(crate) fn conv(&mut self, kernel: usize, input: usize, output: usize) -> Array3<f64> {
        let b = Self::bound(kernel * input);
        Array3::from_shape_fn((kernel, input, output), |_| self.rng.random_range(-b..b))
    }

    pub(crate) fn gaussian(&mut self, rows: usize, cols: usize) -> Array2<f64> {
        Array2::from_shape_fn((rows, cols), |_| self.embed.sample(&mut self.rng))
    }
}

impl ConvBlockParams {
    fn init(init: &mut Init, cin: usize, c: usize) -> Self {
        Self {
            conv1_w: init.conv(3, cin, c),
            conv1_b: init.uniform1(c, 3 * cin),
            norm1_g: Array1::ones(c),
            norm1_b: Array1::zeros(c),
            conv2_w: init.conv(3, c, c),
            conv2_b: init.uniform1(c, 3 * c),
            norm2_g: Array1::ones(c),
            norm2_b: Array1::zeros(c),
            short_w: init.linear(cin, c),
            short_b: init.uniform1(c, cin),
        }
    }
}

impl LayerParams {
    pub(crate) fn init(
        init: &mut Init,
        d: usize,
        ff: usize,
        rel_rows: usize,
        head_dim: usize,
    ) -> Self {
        Self {
            wq: init.linear(d, d),
            wk: init.linear(d, d),
            wv: init.linear(d, d),
            wo: init.linear(d, d),
            bo: init.uniform1(d, d),
            rel: init.gaussian(rel_rows, head_dim),
            norm1_g: Array1::ones(d),
            norm1_b: Array1::zeros(d),
            ff1_w: init.linear(d, ff),
            ff1_b: init.uniform1(ff, d),
            ff2_w: init.linear(ff, d),
            ff2_b: init.uniform1(d, ff),
            norm2_g: Array1::ones(d),
            norm2_b: Array1::zeros(d),
        }
    }
}

/// All learnable tensors of the transduction network.
///
/// The same type doubles as a gradient accumulator and as optimizer moment storage.
#[derive(Clone, Debug, PartialEq)]
pub struct ModelParams {
    pub blocks: Vec<ConvBlockParams>,
    pub layers: Vec<LayerParams>,
    pub head: HeadParams,
}

impl ModelParams {
    pub fn init(cfg: &ModelConfig, seed: u64) -> Result<Self> {
        cfg.validate()?;
        let mut init = Init::new(seed);
        let c = cfg.channels;
        let d = cfg.model_dim;
        let blocks = (0..cfg.conv_blocks)
            .map(|b| ConvBlockParams::init(&mut init, if b == 0 { cfg.in_channels } else { c }, c))
            .collect();
        let layers = (0..cfg.transformer_layers)
            .map(|_| {
                LayerParams::init(
                    &mut init,
                    d,
                    cfg.ff_dim,
                    2 * cfg.rel_clip + 1,
                    cfg.head_dim(),
                )
            })
            .collect();
        let head = HeadParams {
            input_w: init.linear(c, d),
            input_b: init.uniform1(d, c),
            session_table: init.gaussian(cfg.sessions, cfg.session_embed_dim),
            session_proj: init.linear(cfg.session_embed_dim, d),
            mfcc_w: init.linear(d, cfg.out_dims),
            mfcc_b: init.uniform1(cfg.out_dims, d),
            phoneme_w: init.linear(d, cfg.phoneme_count),
            phoneme_b: init.uniform1(cfg.phoneme_count, d),
        };
        Ok(Self {
            blocks,
            layers,
            head,
        })
    }

    /// Zero tensors shaped like `self`.
    pub fn zeros_like(&self) -> Self {
        Self {
            blocks: self
                .blocks
                .iter()
                .map(ConvBlockParams::zeros_like)
                .collect(),
            layers: self.layers.iter().map(LayerParams::zeros_like).collect(),
            head: self.head.zeros_like(),
        }
    }

    pub fn zeros(cfg: &ModelConfig) -> Result<Self> {
        Ok(Self::init(cfg, 0)?.zeros_like())
    }

    /// Visits every tensor in canonical order with its dotted name.
    pub fn visit<'a>(&'a self, f: &mut dyn FnMut(String, ArrayViewD<'a, f64>)) {
        for (i, b) in self.blocks.iter().enumerate() {
            b.visit(&format!("blocks.{i}."), f);
        }
        self.head.visit("head.", f);
        for (i, l) in self.layers.iter().enumerate() {
            l.visit(&format!("layers.{i}."), f);
        }
    }

    pub fn visit_mut<'a>(&'a mut self, f: &mut dyn FnMut(String, ArrayViewMutD<'a, f64>)) {
        for (i, b) in self.blocks.iter_mut().enumerate() {
            b.visit_mut(&format!("blocks.{i}."), f);
        }
        self.head.visit_mut("head.", f);
        for (i, l) in self.layers.iter_mut().enumerate() {
            l.visit_mut(&format!("layers.{i}."), f);
        }
    }

    pub fn named_tensors(&self) -> Vec<(String, ArrayViewD<'_, f64>)> {
        let mut out = Vec::new();
        self.visit(&mut |n, v| out.push((n, v)));
        out
    }

    pub fn named_tensors_mut(&mut self) -> Vec<(String, ArrayViewMutD<'_, f64>)> {
        let mut out = Vec::new();
        self.visit_mut(&mut |n, v| out.push((n, v)));
        out
    }

    pub fn parameter_count(&self) -> usize {
        self.named_tensors().iter().map(|(_, t)| t.len()).sum()
    }

    /// `self += scale * other`, tensor by tensor.
    pub fn add_scaled(&mut self, other: &Self, scale: f64) {
        let src = other.named_tensors();
        for ((_, mut dst), (_, s)) in self.named_tensors_mut().into_iter().zip(src) {
            dst.scaled_add(scale, &s);
        }
    }

    pub fn scale(&mut self, factor: f64) {
        for (_, mut t) in self.named_tensors_mut() {
            t.mapv_inplace(|v| v * factor);
        }
    }

    pub fn all_finite(&self) -> bool {
        self.named_tensors()
            .iter()
            .all(|(_, t)| t.iter().all(|v| v.is_finite()))
    }

    /// Little-endian bytes of every value, for bitwise comparisons.
    pub fn to_bytes(&self) -> Vec<u8> {
        self.named_tensors()
            .iter()
            .flat_map(|(_, t)| t.iter().flat_map(|v| v.to_le_bytes()).collect::<Vec<_>>())
            .collect()
    }
}
