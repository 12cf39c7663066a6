//! Signal preprocessing and speech-feature extraction.
//!
//! Raw EMG is cleaned in a fixed order: powerline notch bank, zero-phase
//! high-pass, rational resampling from 1000 Hz to 800 Hz, then division by a
//! constant. Every operation is a pure function of its inputs.

mod filter;
pub mod format;
mod mfcc;
mod resample;

use ndarray::{Array2, ArrayView2};

use crate::{Error, Result};

pub use filter::{butterworth_highpass, highpass_filter, notch_filter_bank, Biquad, NOTCH_Q};
pub use mfcc::{extract_mfcc, mel_energies, mel_filterbank, MfccConfig};
pub use resample::{resample_1000_to_800, resample_rational, resampled_len};

/// Number of speech feature dimensions predicted per frame.
pub const FEATURE_DIMS: usize = 26;
/// Frame rate of speech features, Hz.
pub const FEATURE_RATE: u32 = 100;
/// Sample rate of raw EMG recordings, Hz.
pub const RAW_RATE: u32 = 1000;
/// Sample rate of preprocessed EMG, Hz.
pub const PROCESSED_RATE: u32 = 800;

/// Multichannel signal stored channel-major.
#[derive(Clone, Debug, PartialEq)]
pub struct RawSignal {
    channels: Vec<Vec<f64>>,
    sample_rate: u32,
}

impl RawSignal {
    /// Builds a signal, rejecting ragged channels, a zero rate and non-finite samples.
    pub fn new(channels: Vec<Vec<f64>>, sample_rate: u32) -> Result<Self> {
        if sample_rate == 0 {
            return Err(Error::Input("sample rate must be positive".into()));
        }
        if let Some(first) = channels.first() {
            let len = first.len();
            if channels.iter().any(|c| c.len() != len) {
                return Err(Error::Input("channels have unequal lengths".into()));
            }
        }
        for (i, ch) in channels.iter().enumerate() {
            if let Some(pos) = ch.iter().position(|v| !v.is_finite()) {
                return Err(Error::Input(format!(
                    "non-finite sample at channel {i}, index {pos}"
                )));
            }
        }
        Ok(Self {
            channels,
            sample_rate,
        })
    }

    pub fn zeros(n_channels: usize, len: usize, sample_rate: u32) -> Self {
        Self {
            channels: vec![vec![0.0; len]; n_channels],
            sample_rate,
        }
    }

    /// Builds from a `len × channels` matrix.
    pub fn from_frames(frames: ArrayView2<'_, f64>, sample_rate: u32) -> Result<Self> {
        let channels = frames.columns().into_iter().map(|c| c.to_vec()).collect();
        Self::new(channels, sample_rate)
    }

    pub fn sample_rate(&self) -> u32 {
        self.sample_rate
    }

    pub fn n_channels(&self) -> usize {
        self.channels.len()
    }

    /// Samples per channel.
    pub fn len(&self) -> usize {
        self.channels.first().map_or(0, Vec::len)
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn channel(&self, i: usize) -> &[f64] {
        &self.channels[i]
    }

    pub fn channels(&self) -> &[Vec<f64>] {
        &self.channels
    }

    /// `len × channels` matrix view of the samples, the layout the model consumes.
    pub fn to_frames(&self) -> Array2<f64> {
        let mut out = Array2::zeros((self.len(), self.n_channels()));
        for (c, ch) in self.channels.iter().enumerate() {
            for (t, &v) in ch.iter().enumerate() {
                out[[t, c]] = v;
            }
        }
        out
    }

    pub(crate) fn map_channels<F>(&self, sample_rate: u32, f: F) -> Self
    where
        F: Fn(&[f64]) -> Vec<f64>,
    {
        Self {
            channels: self.channels.iter().map(|c| f(c)).collect(),
            sample_rate,
        }
    }

    /// Right-pads every channel with zeros to the next multiple of `multiple`.
    pub fn zero_padded_to(&self, multiple: usize) -> Self {
        let len = self.len().div_ceil(multiple) * multiple;
        self.map_channels(self.sample_rate, |c| {
            let mut v = c.to_vec();
            v.resize(len, 0.0);
            v
        })
    }
}

/// EMG after [`preprocess_signal`]: 800 Hz, scaled.
#[derive(Clone, Debug, PartialEq)]
pub struct ProcessedSignal {
    pub signal: RawSignal,
    pub scale_applied: bool,
}

impl ProcessedSignal {
    pub fn len(&self) -> usize {
        self.signal.len()
    }

    pub fn is_empty(&self) -> bool {
        self.signal.is_empty()
    }
}

/// Frames × 26 speech features at 100 Hz.
#[derive(Clone, Debug, PartialEq)]
pub struct FeatureSequence {
    frames: Array2<f64>,
}

impl FeatureSequence {
    pub fn new(frames: Array2<f64>) -> Result<Self> {
        if frames.ncols() != FEATURE_DIMS {
            return Err(Error::Input(format!(
                "feature sequence needs {FEATURE_DIMS} columns, got {}",
                frames.ncols()
            )));
        }
        if frames.iter().any(|v| !v.is_finite()) {
            return Err(Error::Input("non-finite feature value".into()));
        }
        Ok(Self { frames })
    }

    pub fn empty() -> Self {
        Self {
            frames: Array2::zeros((0, FEATURE_DIMS)),
        }
    }

    pub fn frames(&self) -> &Array2<f64> {
        &self.frames
    }

    pub fn into_inner(self) -> Array2<f64> {
        self.frames
    }

    pub fn n_frames(&self) -> usize {
        self.frames.nrows()
    }

    pub fn truncated(&self, n: usize) -> Self {
        Self {
            frames: self
                .frames
                .slice(ndarray::s![..n.min(self.n_frames()), ..])
                .to_owned(),
        }
    }
}

/// Parameters of the EMG cleaning chain.
#[derive(Clone, Debug, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PreprocessConfig {
    pub notch_base_hz: f64,
    pub notch_harmonics: usize,
    pub highpass_hz: f64,
    pub scale_divisor: f64,
}

impl Default for PreprocessConfig {
    fn default() -> Self {
        Self {
            notch_base_hz: 60.0,
            notch_harmonics: 7,
            highpass_hz: 2.0,
            scale_divisor: 10.0,
        }
    }
}

/// Divides every sample by `divisor`.
pub fn scale_signal(signal: &RawSignal, divisor: f64) -> Result<RawSignal> {
    if divisor == 0.0 || !divisor.is_finite() {
        return Err(Error::Config(format!("invalid scale divisor {divisor}")));
    }
    Ok(signal.map_channels(signal.sample_rate, |c| {
        c.iter().map(|v| v / divisor).collect()
    }))
}

/// notch → high-pass → resample → scale.
pub fn preprocess_signal(raw: &RawSignal, cfg: &PreprocessConfig) -> Result<ProcessedSignal> {
    let notched = notch_filter_bank(raw, cfg.notch_base_hz, cfg.notch_harmonics)?;
    let filtered = highpass_filter(&notched, cfg.highpass_hz)?;
    let resampled = resample_1000_to_800(&filtered)?;
    let scaled = scale_signal(&resampled, cfg.scale_divisor)?;
    Ok(ProcessedSignal {
        signal: scaled,
        scale_applied: true,
    })
}

/// Preprocesses the raw EMG of a recording with the default chain.
pub fn preprocess_emg(recording: &crate::data::EmgRecording) -> Result<ProcessedSignal> {
    preprocess_signal(&recording.raw, &PreprocessConfig::default())
}
