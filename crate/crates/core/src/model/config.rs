use serde::{Deserialize, Serialize};

use crate::dsp::FEATURE_DIMS;
use crate::{Error, Result};

/// Architecture hyperparameters. `Default` is the full-size configuration.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ModelConfig {
    pub in_channels: usize,
    pub conv_blocks: usize,
    pub channels: usize,
    pub transformer_layers: usize,
    pub heads: usize,
    pub model_dim: usize,
    pub ff_dim: usize,
    pub dropout: f64,
    /// Maximum attended distance `k`, in frames, in each direction.
    pub rel_clip: usize,
    pub session_embed_dim: usize,
    pub sessions: usize,
    pub out_dims: usize,
    pub phoneme_count: usize,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            in_channels: 8,
            conv_blocks: 3,
            channels: 768,
            transformer_layers: 6,
            heads: 8,
            model_dim: 768,
            ff_dim: 3072,
            dropout: 0.1,
            rel_clip: 100,
            session_embed_dim: 32,
            sessions: 1,
            out_dims: FEATURE_DIMS,
            phoneme_count: 40,
        }
    }
}

impl ModelConfig {
    /// A small configuration that trains in minutes on a CPU.
    pub fn desk() -> Self {
        Self {
            in_channels: 8,
            conv_blocks: 3,
            channels: 32,
            transformer_layers: 2,
            heads: 4,
            model_dim: 32,
            ff_dim: 64,
            dropout: 0.1,
            rel_clip: 16,
            session_embed_dim: 8,
            sessions: 1,
            out_dims: FEATURE_DIMS,
            phoneme_count: 40,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("in_channels", self.in_channels),
            ("conv_blocks", self.conv_blocks),
            ("channels", self.channels),
            ("heads", self.heads),
            ("model_dim", self.model_dim),
            ("ff_dim", self.ff_dim),
            ("session_embed_dim", self.session_embed_dim),
            ("sessions", self.sessions),
            ("phoneme_count", self.phoneme_count),
        ];
        if let Some((name, _)) = positive.iter().find(|(_, v)| *v == 0) {
            return Err(Error::Config(format!("{name} must be positive")));
        }
        if !self.model_dim.is_multiple_of(self.heads) {
            return Err(Error::Config(format!(
                "model_dim {} is not divisible by heads {}",
                self.model_dim, self.heads
            )));
        }
        if self.out_dims != FEATURE_DIMS {
            return Err(Error::Config(format!("out_dims must be {FEATURE_DIMS}")));
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return Err(Error::Config(format!(
                "dropout {} outside [0, 1)",
                self.dropout
            )));
        }
        if self.conv_blocks > 16 {
            return Err(Error::Config("too many conv blocks".into()));
        }
        Ok(())
    }

    pub fn head_dim(&self) -> usize {
        self.model_dim / self.heads
    }

    /// Input samples per output frame.
    pub fn downsample_factor(&self) -> usize {
        1 << self.conv_blocks
    }

    /// Closed-form count of learnable scalars.
    pub fn parameter_count(&self) -> usize {
        let c = self.channels;
        let d = self.model_dim;
        let mut n = 0;
        for b in 0..self.conv_blocks {
            let cin = if b == 0 { self.in_channels } else { c };
            n += 3 * cin * c + c; // conv1
            n += 3 * c * c + c; // conv2
            n += 4 * c; // two norms
            n += cin * c + c; // shortcut
        }
        n += c * d + d;
        n += self.sessions * self.session_embed_dim + self.session_embed_dim * d;
        let per_layer = 3 * d * d
            + d * d
            + d
            + (2 * self.rel_clip + 1) * self.head_dim()
            + 4 * d
            + d * self.ff_dim
            + self.ff_dim
            + self.ff_dim * d
            + d;
        n += self.transformer_layers * per_layer;
        n += d * self.out_dims + self.out_dims;
        n += d * self.phoneme_count + self.phoneme_count;
        n
    }
}
