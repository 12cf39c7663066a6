//! Polyphase rational resampling with a Kaiser-windowed sinc kernel.

use std::f64::consts::PI;

use super::{RawSignal, PROCESSED_RATE, RAW_RATE};
use crate::{Error, Result};

/// Kernel half-length, in input samples.
const HALF_TAPS_IN: usize = 32;
/// Kaiser window shape; about 80 dB stopband rejection.
const KAISER_BETA: f64 = 8.0;
/// Passband edge as a fraction of the output Nyquist frequency.
const ROLLOFF: f64 = 0.9;

/// Output length for an `up / down` conversion: `round(n * up / down)`.
pub fn resampled_len(n: usize, up: usize, down: usize) -> usize {
    (2 * n * up + down) / (2 * down)
}

fn bessel_i0(x: f64) -> f64 {
    let mut sum = 1.0;
    let mut term = 1.0;
    let q = x * x / 4.0;
    for k in 1..64 {
        term *= q / (k * k) as f64;
        sum += term;
        if term < sum * 1e-17 {
            break;
        }
    }
    sum
}

/// Low-pass kernel at the upsampled rate, each polyphase branch normalized to unit DC gain.
fn design_kernel(up: usize, down: usize) -> (Vec<f64>, usize) {
    let half = HALF_TAPS_IN * up;
    // cutoff in cycles per upsampled sample
    let cutoff = ROLLOFF * 0.5 / up.max(down) as f64;
    let norm = bessel_i0(KAISER_BETA);
    let mut h: Vec<f64> = (0..=2 * half)
        .map(|i| {
            let m = i as f64 - half as f64;
            let x = 2.0 * cutoff * m;
            let sinc = if m == 0.0 {
                1.0
            } else {
                (PI * x).sin() / (PI * x)
            };
            let r = m / half as f64;
            let w = bessel_i0(KAISER_BETA * (1.0 - r * r).max(0.0).sqrt()) / norm;
            sinc * w
        })
        .collect();
    for phase in 0..up {
        let idx = |i: usize| (i + up * half - half) % up == phase;
        let sum: f64 = (0..h.len()).filter(|&i| idx(i)).map(|i| h[i]).sum();
        for (i, v) in h.iter_mut().enumerate() {
            if idx(i) {
                *v /= sum;
            }
        }
    }
    (h, half)
}

/// Resamples one channel by `up / down`. Samples beyond either end repeat the edge value.
pub fn resample_rational(x: &[f64], up: usize, down: usize) -> Vec<f64> {
    let n_out = resampled_len(x.len(), up, down);
    if x.is_empty() {
        return Vec::new();
    }
    let (h, half) = design_kernel(up, down);
    let last = x.len() as i64 - 1;
    (0..n_out)
        .map(|n| {
            let centre = (n * down) as i64;
            // input k contributes through kernel index centre - up*k
            let k_lo = (centre - half as i64).div_euclid(up as i64);
            let k_hi = (centre + half as i64).div_euclid(up as i64);
            let mut acc = 0.0;
            for k in k_lo..=k_hi {
                let m = centre - up as i64 * k;
                if m.unsigned_abs() as usize > half {
                    continue;
                }
                acc += h[(m + half as i64) as usize] * x[k.clamp(0, last) as usize];
            }
            acc
        })
        .collect()
}

/// 1000 Hz → 800 Hz conversion of every channel.
pub fn resample_1000_to_800(signal: &RawSignal) -> Result<RawSignal> {
    if signal.sample_rate() != RAW_RATE {
        return Err(Error::Config(format!(
            "resampler expects {RAW_RATE} Hz input, got {} Hz",
            signal.sample_rate()
        )));
    }
    Ok(signal.map_channels(PROCESSED_RATE, |c| resample_rational(c, 4, 5)))
}
