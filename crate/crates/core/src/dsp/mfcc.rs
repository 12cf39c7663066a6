//! MFCC target features: 40 mel filters, DCT-II, log energy in place of c0.

use std::f64::consts::PI;

use ndarray::Array2;
use rustfft::{num_complex::Complex, FftPlanner};

use super::{FeatureSequence, RawSignal, FEATURE_DIMS};
use crate::{Error, Result};

const LOG_FLOOR: f64 = 1e-10;

#[derive(Clone, Debug, PartialEq)]
pub struct MfccConfig {
    pub n_filters: usize,
    pub frame_len_ms: f64,
    pub hop_ms: f64,
}

impl Default for MfccConfig {
    fn default() -> Self {
        Self {
            n_filters: 40,
            frame_len_ms: 25.0,
            hop_ms: 10.0,
        }
    }
}

impl MfccConfig {
    fn frame_samples(&self, rate: u32) -> (usize, usize) {
        let len = (self.frame_len_ms * f64::from(rate) / 1000.0).round() as usize;
        let hop = (self.hop_ms * f64::from(rate) / 1000.0).round() as usize;
        (len, hop)
    }
}

fn hz_to_mel(f: f64) -> f64 {
    2595.0 * (1.0 + f / 700.0).log10()
}

fn mel_to_hz(m: f64) -> f64 {
    700.0 * (10f64.powf(m / 2595.0) - 1.0)
}

/// Triangular mel filters over the `n_fft / 2 + 1` one-sided power bins.
pub fn mel_filterbank(n_filters: usize, n_fft: usize, sample_rate: u32) -> Array2<f64> {
    let n_bins = n_fft / 2 + 1;
    let nyquist = f64::from(sample_rate) / 2.0;
    let top = hz_to_mel(nyquist);
    let edges: Vec<f64> = (0..n_filters + 2)
        .map(|i| mel_to_hz(top * i as f64 / (n_filters + 1) as f64))
        .collect();
    let mut fb = Array2::zeros((n_filters, n_bins));
    for m in 0..n_filters {
        let (lo, mid, hi) = (edges[m], edges[m + 1], edges[m + 2]);
        for b in 0..n_bins {
            let f = b as f64 * f64::from(sample_rate) / n_fft as f64;
            let w = if f > lo && f <= mid {
                (f - lo) / (mid - lo)
            } else if f > mid && f < hi {
                (hi - f) / (hi - mid)
            } else {
                0.0
            };
            fb[[m, b]] = w;
        }
    }
    fb
}

struct Framer {
    len: usize,
    hop: usize,
    n_fft: usize,
    window: Vec<f64>,
    fb: Array2<f64>,
}

impl Framer {
    fn new(audio: &RawSignal, cfg: &MfccConfig) -> Result<Self> {
        if audio.sample_rate() < 8000 {
            return Err(Error::Config(format!(
                "MFCC extraction needs at least 8 kHz audio, got {} Hz",
                audio.sample_rate()
            )));
        }
        if audio.n_channels() != 1 {
            return Err(Error::Input(format!(
                "MFCC extraction needs mono audio, got {} channels",
                audio.n_channels()
            )));
        }
        let (len, hop) = cfg.frame_samples(audio.sample_rate());
        if cfg.n_filters < FEATURE_DIMS - 1 || len == 0 || hop == 0 {
            return Err(Error::Config("degenerate MFCC configuration".into()));
        }
        let n_fft = len.next_power_of_two();
        let window = (0..len)
            .map(|i| 0.54 - 0.46 * (2.0 * PI * i as f64 / (len - 1) as f64).cos())
            .collect();
        let fb = mel_filterbank(cfg.n_filters, n_fft, audio.sample_rate());
        Ok(Self {
            len,
            hop,
            n_fft,
            window,
            fb,
        })
    }

    fn n_frames(&self, n: usize) -> usize {
        if n < self.len {
            0
        } else {
            (n - self.len) / self.hop + 1
        }
    }

    /// Returns (log frame energy, mel energies) for every frame.
    fn analyze(&self, x: &[f64]) -> Vec<(f64, Vec<f64>)> {
        let fft = FftPlanner::new().plan_fft_forward(self.n_fft);
        let mut buf = vec![Complex::new(0.0, 0.0); self.n_fft];
        (0..self.n_frames(x.len()))
            .map(|f| {
                let frame = &x[f * self.hop..f * self.hop + self.len];
                let energy: f64 = frame.iter().map(|v| v * v).sum();
                buf.iter_mut().for_each(|c| *c = Complex::new(0.0, 0.0));
                for (c, (&v, &w)) in buf.iter_mut().zip(frame.iter().zip(&self.window)) {
                    c.re = v * w;
                }
                fft.process(&mut buf);
                let power: Vec<f64> = buf[..self.n_fft / 2 + 1]
                    .iter()
                    .map(|c| c.norm_sqr())
                    .collect();
                let mel = self
                    .fb
                    .rows()
                    .into_iter()
                    .map(|row| row.iter().zip(&power).map(|(a, b)| a * b).sum())
                    .collect();
                (energy.max(LOG_FLOOR).ln(), mel)
            })
            .collect()
    }
}

/// Mel filterbank energies (frames × filters) before the log, for inspection.
pub fn mel_energies(audio: &RawSignal, cfg: &MfccConfig) -> Result<Array2<f64>> {
    let framer = Framer::new(audio, cfg)?;
    let frames = framer.analyze(audio.channel(0));
    let mut out = Array2::zeros((frames.len(), cfg.n_filters));
    for (i, (_, mel)) in frames.iter().enumerate() {
        for (j, v) in mel.iter().enumerate() {
            out[[i, j]] = *v;
        }
    }
    Ok(out)
}

/// 26 coefficients per 10 ms frame. Audio shorter than one frame gives an empty sequence.
pub fn extract_mfcc(audio: &RawSignal, cfg: &MfccConfig) -> Result<FeatureSequence> {
    let framer = Framer::new(audio, cfg)?;
    let frames = framer.analyze(audio.channel(0));
    let n = cfg.n_filters as f64;
    let mut out = Array2::zeros((frames.len(), FEATURE_DIMS));
    for (i, (log_energy, mel)) in frames.iter().enumerate() {
        let log_mel: Vec<f64> = mel.iter().map(|v| v.max(LOG_FLOOR).ln()).collect();
        out[[i, 0]] = *log_energy;
        for k in 1..FEATURE_DIMS {
            let c: f64 = log_mel
                .iter()
                .enumerate()
                .map(|(m, v)| v * (PI * k as f64 * (m as f64 + 0.5) / n).cos())
                .sum();
            out[[i, k]] = c * (2.0 / n).sqrt();
        }
    }
    FeatureSequence::new(out)
}
