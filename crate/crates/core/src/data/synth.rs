//! Synthetic silent/vocalized utterance pairs with a known
//! signal → feature → phoneme structure.
//!
//! Each phoneme has a fixed target position for a small set of articulators.
//! An utterance is a random phoneme string rendered as piecewise-constant
//! targets at 1000 Hz and smoothed with a Hann kernel. EMG is one fixed linear
//! mixture of the trajectories plus noise, DC offset and mains hum; speech
//! features are a second fixed mixture sampled at 100 Hz. The silent version of
//! an utterance replays the same trajectories through a random piecewise-linear
//! time warp.

use std::collections::BTreeMap;

use ndarray::{Array2, Axis};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use super::{Dataset, EmgRecording, Mode, Split};
use crate::alignment::PhonemeSequence;
use crate::analysis::PhonemeInventory;
use crate::dsp::{FeatureSequence, RawSignal, FEATURE_DIMS, RAW_RATE};
use crate::{Error, Result};

const SAMPLES_PER_FRAME: usize = 10;
const EDGE_SILENCE_FRAMES: (usize, usize) = (15, 25);
const PHONEME_FRAMES: (usize, usize) = (8, 15);
const SMOOTHING_SAMPLES: usize = 41;
const WARP_PIECE_SAMPLES: f64 = 300.0;
const WARP_SLOPE_RANGE: (f64, f64) = (-0.3, 0.4);
const EMG_GAIN: f64 = 10.0;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SynthConfig {
    pub channels: usize,
    /// Total recordings; half silent, half vocalized.
    pub utterances: usize,
    /// Inventory size including silence.
    pub phonemes: usize,
    pub mean_length_s: f64,
    /// 0 disables the silent time warp; 1 gives slopes in [0.7, 1.4].
    pub warp_strength: f64,
    /// Noise standard deviation relative to unit-scale trajectories.
    pub noise_level: f64,
    pub hum_level: f64,
    pub articulators: usize,
    pub sessions: usize,
    pub validation_fraction: f64,
    pub test_fraction: f64,
    pub seed: u64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            channels: 4,
            utterances: 200,
            phonemes: 10,
            mean_length_s: 1.2,
            warp_strength: 1.0,
            noise_level: 0.05,
            hum_level: 0.5,
            articulators: 4,
            sessions: 1,
            validation_fraction: 0.1,
            test_fraction: 0.1,
            seed: 0,
        }
    }
}

impl SynthConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::Config(format!("synth: {m}")));
        if self.phonemes < 2 {
            return bad("need at least one phoneme besides silence");
        }
        if self.channels == 0 || self.articulators == 0 || self.sessions == 0 {
            return bad("channels, articulators and sessions must be positive");
        }
        if self.utterances < 2 || !self.utterances.is_multiple_of(2) {
            return bad("utterance count must be a positive even number");
        }
        if !(self.mean_length_s >= 0.5 && self.mean_length_s <= 60.0) {
            return bad("mean length must be within [0.5, 60] s");
        }
        if !(0.0..=1.0).contains(&self.warp_strength) {
            return bad("warp strength must be within [0, 1]");
        }
        if !(self.noise_level >= 0.0 && self.hum_level >= 0.0)
            || !self.noise_level.is_finite()
            || !self.hum_level.is_finite()
        {
            return bad("noise and hum levels must be finite and non-negative");
        }
        let (v, t) = (self.validation_fraction, self.test_fraction);
        if !(v >= 0.0 && t >= 0.0 && v + t < 1.0) {
            return bad("split fractions must be non-negative and sum below 1");
        }
        Ok(())
    }
}

fn gaussian(rng: &mut ChaCha8Rng) -> f64 {
    rng.sample(StandardNormal)
}

fn gaussian_matrix(rng: &mut ChaCha8Rng, rows: usize, cols: usize) -> Array2<f64> {
    Array2::from_shape_simple_fn((rows, cols), || gaussian(rng))
}

/// Columns made orthonormal when there are enough rows, for a well-conditioned mixture.
fn orthonormal_columns(mut m: Array2<f64>) -> Array2<f64> {
    if m.nrows() < m.ncols() {
        return m.mapv(|v| v / (m.ncols() as f64).sqrt());
    }
    for j in 0..m.ncols() {
        for k in 0..j {
            let dot = m.column(j).dot(&m.column(k));
            let prev = m.column(k).to_owned();
            m.column_mut(j).scaled_add(-dot, &prev);
        }
        let norm = m.column(j).dot(&m.column(j)).sqrt();
        m.column_mut(j).mapv_inplace(|v| v / norm);
    }
    m
}

struct World {
    targets: Array2<f64>,
    emg_mix: Array2<f64>,
    feature_mix: Array2<f64>,
    session_gains: Array2<f64>,
}

impl World {
    fn draw(cfg: &SynthConfig, rng: &mut ChaCha8Rng) -> Self {
        let mut targets = gaussian_matrix(rng, cfg.phonemes, cfg.articulators);
        targets.row_mut(0).fill(0.0);
        let emg_mix = orthonormal_columns(gaussian_matrix(rng, cfg.channels, cfg.articulators));
        let feature_mix = gaussian_matrix(rng, FEATURE_DIMS, cfg.articulators)
            .mapv(|v| v / (cfg.articulators as f64).sqrt());
        let session_gains = if cfg.sessions == 1 {
            Array2::ones((1, cfg.channels))
        } else {
            Array2::from_shape_simple_fn((cfg.sessions, cfg.channels), || 1.0 + 0.2 * gaussian(rng))
        };
        Self {
            targets,
            emg_mix,
            feature_mix,
            session_gains,
        }
    }
}

/// Phoneme id per frame: silence, random phonemes, silence.
fn draw_frame_labels(cfg: &SynthConfig, rng: &mut ChaCha8Rng) -> (Vec<usize>, Vec<usize>) {
    let mean_inner = (PHONEME_FRAMES.0 + PHONEME_FRAMES.1) as f64 / 2.0;
    let edge = (EDGE_SILENCE_FRAMES.0 + EDGE_SILENCE_FRAMES.1) as f64;
    let total_frames = cfg.mean_length_s * 100.0;
    let n0 = ((total_frames - edge) / mean_inner).round().max(1.0);
    let lo = (0.75 * n0).round().max(1.0) as usize;
    let hi = (1.25 * n0).round().max(lo as f64) as usize;
    let count = rng.random_range(lo..=hi);
    let phones: Vec<usize> = (0..count)
        .map(|_| rng.random_range(1..cfg.phonemes))
        .collect();
    let mut labels = vec![0; rng.random_range(EDGE_SILENCE_FRAMES.0..=EDGE_SILENCE_FRAMES.1)];
    for &p in &phones {
        let d = rng.random_range(PHONEME_FRAMES.0..=PHONEME_FRAMES.1);
        labels.extend(std::iter::repeat_n(p, d));
    }
    let tail = rng.random_range(EDGE_SILENCE_FRAMES.0..=EDGE_SILENCE_FRAMES.1);
    labels.extend(std::iter::repeat_n(0, tail));
    (labels, phones)
}

/// Articulator trajectories (samples × articulators) at 1000 Hz.
fn render_trajectory(labels: &[usize], targets: &Array2<f64>) -> Array2<f64> {
    let n = labels.len() * SAMPLES_PER_FRAME;
    let a = targets.ncols();
    let kernel: Vec<f64> = {
        let m = SMOOTHING_SAMPLES;
        let k: Vec<f64> = (0..m)
            .map(|i| {
                0.5 - 0.5 * (2.0 * std::f64::consts::PI * (i + 1) as f64 / (m + 1) as f64).cos()
            })
            .collect();
        let s: f64 = k.iter().sum();
        k.into_iter().map(|v| v / s).collect()
    };
    let half = SMOOTHING_SAMPLES / 2;
    let step = |t: usize| labels[t.min(n - 1) / SAMPLES_PER_FRAME];
    let mut out = Array2::zeros((n, a));
    for t in 0..n {
        for (i, w) in kernel.iter().enumerate() {
            let src = (t + i).saturating_sub(half);
            out.row_mut(t).scaled_add(*w, &targets.row(step(src)));
        }
    }
    out
}

/// Maps each silent sample to a (fractional) vocalized sample time.
fn draw_warp(n_vocal: usize, strength: f64, rng: &mut ChaCha8Rng) -> Vec<f64> {
    let pieces = ((n_vocal as f64 / WARP_PIECE_SAMPLES).round() as usize).max(1);
    let vocal_len = n_vocal as f64 / pieces as f64;
    let silent_lens: Vec<f64> = (0..pieces)
        .map(|_| {
            let slope = 1.0 + strength * rng.random_range(WARP_SLOPE_RANGE.0..WARP_SLOPE_RANGE.1);
            vocal_len / slope
        })
        .collect();
    let raw_total: f64 = silent_lens.iter().sum();
    let frames = ((raw_total / SAMPLES_PER_FRAME as f64).round() as usize).max(1);
    let n_silent = frames * SAMPLES_PER_FRAME;
    let stretch = n_silent as f64 / raw_total;
    let mut knots_s = vec![0.0];
    let mut knots_v = vec![0.0];
    for (k, len) in silent_lens.iter().enumerate() {
        knots_s.push(knots_s[k] + len * stretch);
        knots_v.push((k + 1) as f64 * vocal_len);
    }
    let mut piece = 0;
    (0..n_silent)
        .map(|t| {
            let t = t as f64;
            while piece + 1 < pieces && t >= knots_s[piece + 1] {
                piece += 1;
            }
            let frac = (t - knots_s[piece]) / (knots_s[piece + 1] - knots_s[piece]);
            knots_v[piece] + frac * (knots_v[piece + 1] - knots_v[piece])
        })
        .collect()
}

fn warp_trajectory(traj: &Array2<f64>, times: &[f64]) -> Array2<f64> {
    let n = traj.nrows();
    let mut out = Array2::zeros((times.len(), traj.ncols()));
    for (mut row, &tau) in out.rows_mut().into_iter().zip(times) {
        let tau = tau.clamp(0.0, (n - 1) as f64);
        let i = (tau.floor() as usize).min(n - 1);
        let j = (i + 1).min(n - 1);
        let f = tau - i as f64;
        row.scaled_add(1.0 - f, &traj.row(i));
        row.scaled_add(f, &traj.row(j));
    }
    out
}

fn quantize(v: f64) -> f64 {
    f64::from(v as f32)
}

fn render_emg(
    traj: &Array2<f64>,
    world: &World,
    session: usize,
    cfg: &SynthConfig,
    rng: &mut ChaCha8Rng,
) -> Result<RawSignal> {
    let clean = traj.dot(&world.emg_mix.t());
    let dt = 1.0 / RAW_RATE as f64;
    let channels = (0..cfg.channels)
        .map(|c| {
            let gain = world.session_gains[[session, c]] * EMG_GAIN;
            let dc = EMG_GAIN * rng.random_range(-1.0..1.0);
            let phase = rng.random_range(0.0..std::f64::consts::TAU);
            clean
                .column(c)
                .iter()
                .enumerate()
                .map(|(t, &x)| {
                    let hum = cfg.hum_level
                        * EMG_GAIN
                        * (std::f64::consts::TAU * 60.0 * t as f64 * dt + phase).sin();
                    quantize(gain * (x + cfg.noise_level * gaussian(rng)) + dc + hum)
                })
                .collect()
        })
        .collect();
    RawSignal::new(channels, RAW_RATE)
}

fn words(phones: &[usize], inventory: &PhonemeInventory, rng: &mut ChaCha8Rng) -> Vec<String> {
    let mut out = Vec::new();
    let mut rest = phones;
    while !rest.is_empty() {
        let take = rng.random_range(2..=4).min(rest.len());
        out.push(
            rest[..take]
                .iter()
                .map(|&p| inventory.symbol(p))
                .collect::<String>(),
        );
        rest = &rest[take..];
    }
    out
}

/// Generates a dataset deterministically from `cfg.seed`.
pub fn synth_dataset(cfg: &SynthConfig) -> Result<Dataset> {
    cfg.validate()?;
    let inventory = PhonemeInventory::synthetic(cfg.phonemes)?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let world = World::draw(cfg, &mut rng);
    let pairs = cfg.utterances / 2;

    let mut order: Vec<usize> = (0..pairs).collect();
    order.shuffle(&mut rng);
    let n_val = (pairs as f64 * cfg.validation_fraction).round() as usize;
    let n_test = ((pairs as f64 * cfg.test_fraction).round() as usize).min(pairs - n_val);
    let mut pair_split = vec![Split::Train; pairs];
    for (rank, &p) in order.iter().enumerate() {
        if rank < n_val {
            pair_split[p] = Split::Validation;
        } else if rank < n_val + n_test {
            pair_split[p] = Split::Test;
        }
    }

    let mut recordings = Vec::with_capacity(cfg.utterances);
    let mut splits = BTreeMap::new();
    for (p, &split) in pair_split.iter().enumerate() {
        let session = rng.random_range(0..cfg.sessions);
        let (labels, phones) = draw_frame_labels(cfg, &mut rng);
        let transcript = words(&phones, &inventory, &mut rng);
        let traj = render_trajectory(&labels, &world.targets);
        let centers = traj.select(
            Axis(0),
            &(0..labels.len())
                .map(|f| f * SAMPLES_PER_FRAME + SAMPLES_PER_FRAME / 2)
                .collect::<Vec<_>>(),
        );
        let features = centers.dot(&world.feature_mix.t()).mapv(quantize);
        let vocal_emg = render_emg(&traj, &world, session, cfg, &mut rng)?;
        let warp = draw_warp(traj.nrows(), cfg.warp_strength, &mut rng);
        let silent_emg = render_emg(
            &warp_trajectory(&traj, &warp),
            &world,
            session,
            cfg,
            &mut rng,
        )?;

        let voc_id = format!("u{p:04}_voc");
        let sil_id = format!("u{p:04}_sil");
        splits.insert(voc_id.clone(), split);
        splits.insert(sil_id.clone(), split);
        recordings.push(EmgRecording {
            utterance_id: voc_id.clone(),
            session,
            mode: Mode::Vocalized,
            raw: vocal_emg,
            transcript: transcript.clone(),
            paired_id: None,
            audio_features: Some(FeatureSequence::new(features)?),
            phoneme_labels: Some(PhonemeSequence::new(labels, cfg.phonemes)?),
        });
        recordings.push(EmgRecording {
            utterance_id: sil_id,
            session,
            mode: Mode::Silent,
            raw: silent_emg,
            transcript,
            paired_id: Some(voc_id),
            audio_features: None,
            phoneme_labels: None,
        });
    }
    let sessions = (0..cfg.sessions).map(|s| format!("session{s}")).collect();
    Dataset::new(recordings, splits, sessions, inventory)
}
