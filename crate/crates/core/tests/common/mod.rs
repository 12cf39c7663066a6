//! Independent reference implementations used by the integration tests.
//!
//! Everything here is written from the mathematical definitions with plain
//! loops and shares no code with the library beyond its public data types.

#![allow(dead_code)]

use std::f64::consts::PI;

use emg_voicing::model::{ModelConfig, ModelParams};
use ndarray::{Array2, ArrayView2};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn random_matrix(rng: &mut ChaCha8Rng, rows: usize, cols: usize, scale: f64) -> Array2<f64> {
    Array2::from_shape_fn((rows, cols), |_| rng.random_range(-scale..scale))
}

// ---------------------------------------------------------------- model

fn naive_conv(
    x: &Array2<f64>,
    w: &ndarray::Array3<f64>,
    b: &ndarray::Array1<f64>,
    stride: usize,
) -> Array2<f64> {
    let (len, cin) = x.dim();
    let (kernel, _, cout) = w.dim();
    let out_len = (len + 2 - kernel) / stride + 1;
    let mut y = Array2::zeros((out_len, cout));
    for t in 0..out_len {
        for o in 0..cout {
            let mut acc = b[o];
            for k in 0..kernel {
                let src = (stride * t + k) as isize - 1;
                if src < 0 || src as usize >= len {
                    continue;
                }
                for c in 0..cin {
                    acc += w[[k, c, o]] * x[[src as usize, c]];
                }
            }
            y[[t, o]] = acc;
        }
    }
    y
}

fn naive_norm(x: &Array2<f64>, g: &ndarray::Array1<f64>, b: &ndarray::Array1<f64>) -> Array2<f64> {
    let mut y = x.clone();
    let n = x.ncols() as f64;
    for mut row in y.rows_mut() {
        let mean: f64 = row.iter().sum::<f64>() / n;
        let var: f64 = row.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
        for (k, v) in row.iter_mut().enumerate() {
            *v = (*v - mean) / (var + 1e-5).sqrt() * g[k] + b[k];
        }
    }
    y
}

fn naive_linear(x: &Array2<f64>, w: &Array2<f64>, b: Option<&ndarray::Array1<f64>>) -> Array2<f64> {
    let mut y = Array2::zeros((x.nrows(), w.ncols()));
    for i in 0..x.nrows() {
        for o in 0..w.ncols() {
            let mut acc = b.map_or(0.0, |b| b[o]);
            for k in 0..x.ncols() {
                acc += x[[i, k]] * w[[k, o]];
            }
            y[[i, o]] = acc;
        }
    }
    y
}

fn relu(x: Array2<f64>) -> Array2<f64> {
    x.mapv(|v| v.max(0.0))
}

/// Dense attention: full `T × T` logits, masked to `-inf` beyond distance `clip`.
pub fn dense_attention(
    x: &Array2<f64>,
    p: &emg_voicing::model::LayerParams,
    heads: usize,
    clip: usize,
) -> Array2<f64> {
    let (len, d) = x.dim();
    let dh = d / heads;
    let q = naive_linear(x, &p.wq, None);
    let k = naive_linear(x, &p.wk, None);
    let v = naive_linear(x, &p.wv, None);
    let mut ctx = Array2::zeros((len, d));
    for h in 0..heads {
        let off = h * dh;
        for i in 0..len {
            let mut logits = vec![f64::NEG_INFINITY; len];
            for (j, l) in logits.iter_mut().enumerate() {
                let dist = i as isize - j as isize;
                if dist.unsigned_abs() > clip {
                    continue;
                }
                let r = (dist + clip as isize) as usize;
                let mut e = 0.0;
                for c in 0..dh {
                    e += (k[[j, off + c]] + p.rel[[r, c]]) * q[[i, off + c]];
                }
                *l = e / (dh as f64).sqrt();
            }
            let max = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let z: f64 = logits.iter().map(|l| (l - max).exp()).sum();
            for j in 0..len {
                let a = (logits[j] - max).exp() / z;
                for c in 0..dh {
                    ctx[[i, off + c]] += a * v[[j, off + c]];
                }
            }
        }
    }
    naive_linear(&ctx, &p.wo, Some(&p.bo))
}

/// Loop-based forward pass with dropout off. Returns (features, phoneme logits).
pub fn naive_forward(
    p: &ModelParams,
    cfg: &ModelConfig,
    input: &Array2<f64>,
    sessions: &[usize],
) -> (Array2<f64>, Array2<f64>) {
    let mut x = input.clone();
    for b in &p.blocks {
        let h1 = naive_conv(&x, &b.conv1_w, &b.conv1_b, 2);
        let a1 = relu(naive_norm(&h1, &b.norm1_g, &b.norm1_b));
        let h2 = naive_norm(
            &naive_conv(&a1, &b.conv2_w, &b.conv2_b, 1),
            &b.norm2_g,
            &b.norm2_b,
        );
        let sub = Array2::from_shape_fn((x.nrows().div_ceil(2), x.ncols()), |(t, c)| x[[2 * t, c]]);
        let short = naive_linear(&sub, &b.short_w, Some(&b.short_b));
        x = relu(h2 + short);
    }
    let mut h = naive_linear(&x, &p.head.input_w, Some(&p.head.input_b));
    for (t, &s) in sessions.iter().enumerate() {
        for o in 0..h.ncols() {
            let mut acc = 0.0;
            for e in 0..p.head.session_table.ncols() {
                acc += p.head.session_table[[s, e]] * p.head.session_proj[[e, o]];
            }
            h[[t, o]] += acc;
        }
    }
    for l in &p.layers {
        let a = dense_attention(&h, l, cfg.heads, cfg.rel_clip);
        let y = naive_norm(&(&h + &a), &l.norm1_g, &l.norm1_b);
        let f = naive_linear(
            &relu(naive_linear(&y, &l.ff1_w, Some(&l.ff1_b))),
            &l.ff2_w,
            Some(&l.ff2_b),
        );
        h = naive_norm(&(&y + &f), &l.norm2_g, &l.norm2_b);
    }
    (
        naive_linear(&h, &p.head.mfcc_w, Some(&p.head.mfcc_b)),
        naive_linear(&h, &p.head.phoneme_w, Some(&p.head.phoneme_b)),
    )
}

/// Largest relative error between analytic gradients and central differences
/// of `L = Σ mfcc ⊙ r1 + Σ logits ⊙ r2`, over every scalar parameter.
/// Relative error is `|a − n| / max(|a|, |n|, floor)`.
pub fn gradient_check(
    cfg: &ModelConfig,
    seed: u64,
    input_len: usize,
    h: f64,
    floor: f64,
) -> (f64, String) {
    use emg_voicing::model::{backward, forward};
    let mut r = rng(seed.wrapping_add(1000));
    let params = ModelParams::init(cfg, seed).unwrap();
    let x = random_matrix(&mut r, input_len, cfg.in_channels, 1.0);
    let frames = input_len / cfg.downsample_factor();
    let sessions: Vec<usize> = (0..frames)
        .map(|_| r.random_range(0..cfg.sessions))
        .collect();
    let r1 = random_matrix(&mut r, frames, cfg.out_dims, 1.0);
    let r2 = random_matrix(&mut r, frames, cfg.phoneme_count, 1.0);
    let objective = |p: &ModelParams| {
        let (out, _) = forward(p, cfg, x.view(), &sessions, None).unwrap();
        (&out.mfcc * &r1).sum() + (&out.phoneme_logits * &r2).sum()
    };
    let (_, cache) = forward(&params, cfg, x.view(), &sessions, None).unwrap();
    let (grads, _) = backward(&params, cfg, &cache, r1.view(), r2.view()).unwrap();
    let analytic: Vec<(String, Vec<f64>)> = grads
        .named_tensors()
        .into_iter()
        .map(|(n, t)| (n, t.iter().copied().collect()))
        .collect();
    let mut worst = (0.0, String::new());
    let mut probe = params.clone();
    for (ti, (name, g)) in analytic.iter().enumerate() {
        for (k, &a) in g.iter().enumerate() {
            let set = |p: &mut ModelParams, v: f64| {
                let mut tensors = p.named_tensors_mut();
                *tensors[ti].1.iter_mut().nth(k).unwrap() = v;
            };
            let orig = *params.named_tensors()[ti].1.iter().nth(k).unwrap();
            set(&mut probe, orig + h);
            let plus = objective(&probe);
            set(&mut probe, orig - h);
            let minus = objective(&probe);
            set(&mut probe, orig);
            let n = (plus - minus) / (2.0 * h);
            let rel = (a - n).abs() / a.abs().max(n.abs()).max(floor);
            if rel > worst.0 {
                worst = (rel, format!("{name}[{k}]: analytic {a:e}, numeric {n:e}"));
            }
        }
    }
    worst
}

// ------------------------------------------------------------ alignment

/// Minimum over every monotone corner-to-corner path with unit steps of the
/// summed visited costs, plus the first-match map of one minimizing path.
pub fn brute_force_dtw(cost: ArrayView2<'_, f64>) -> (f64, Vec<Vec<(usize, usize)>>) {
    let (n, m) = cost.dim();
    let mut best = f64::INFINITY;
    let mut best_paths = Vec::new();
    let mut path = vec![(0, 0)];
    fn walk(
        cost: ArrayView2<'_, f64>,
        path: &mut Vec<(usize, usize)>,
        acc: f64,
        best: &mut f64,
        best_paths: &mut Vec<Vec<(usize, usize)>>,
    ) {
        let (n, m) = cost.dim();
        let (i, j) = *path.last().unwrap();
        if (i, j) == (n - 1, m - 1) {
            if acc < *best - 1e-12 {
                *best = acc;
                best_paths.clear();
                best_paths.push(path.clone());
            } else if (acc - *best).abs() <= 1e-12 {
                best_paths.push(path.clone());
            }
            return;
        }
        for (di, dj) in [(1, 1), (1, 0), (0, 1)] {
            let (a, b) = (i + di, j + dj);
            if a < n && b < m {
                path.push((a, b));
                walk(cost, path, acc + cost[[a, b]], best, best_paths);
                path.pop();
            }
        }
    }
    walk(cost, &mut path, cost[[0, 0]], &mut best, &mut best_paths);
    let _ = (n, m);
    (best, best_paths)
}

pub fn first_match_map(path: &[(usize, usize)], n: usize) -> Vec<usize> {
    (0..n)
        .map(|i| path.iter().find(|&&(a, _)| a == i).unwrap().1)
        .collect()
}

/// `true` if the path starts and ends at the corners and every step is one of
/// (1,1), (1,0), (0,1).
pub fn path_is_valid(path: &[(usize, usize)], n: usize, m: usize) -> bool {
    path.first() == Some(&(0, 0))
        && path.last() == Some(&(n - 1, m - 1))
        && path.windows(2).all(|w| {
            let (di, dj) = (
                w[1].0 as isize - w[0].0 as isize,
                w[1].1 as isize - w[0].1 as isize,
            );
            matches!((di, dj), (1, 1) | (1, 0) | (0, 1))
        })
}

/// Scalar δ′ from the definition: Euclidean distance minus λ times the
/// clamped log-probability of the label.
pub fn delta_prime(target: &[f64], pred: &[f64], log_prob_of_label: f64, lambda: f64) -> f64 {
    let d: f64 = target
        .iter()
        .zip(pred)
        .map(|(a, b)| (a - b) * (a - b))
        .sum::<f64>()
        .sqrt();
    d - lambda * log_prob_of_label.max(-20.0)
}

pub fn log_softmax(row: &[f64]) -> Vec<f64> {
    let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let lse = max + row.iter().map(|v| (v - max).exp()).sum::<f64>().ln();
    row.iter().map(|v| v - lse).collect()
}

// ------------------------------------------------------------------ dsp

/// Direct O(N²) DFT power spectrum of a real frame zero-padded to `n_fft`.
pub fn dft_power(frame: &[f64], n_fft: usize) -> Vec<f64> {
    (0..=n_fft / 2)
        .map(|k| {
            let (mut re, mut im) = (0.0, 0.0);
            for (t, &x) in frame.iter().enumerate() {
                let ang = -2.0 * PI * (k * t) as f64 / n_fft as f64;
                re += x * ang.cos();
                im += x * ang.sin();
            }
            re * re + im * im
        })
        .collect()
}

/// MFCCs from the textbook definition (Hamming, HTK mel triangles from 0 Hz to
/// Nyquist, natural log, orthonormal DCT-II with c0 replaced by log energy).
pub fn reference_mfcc(audio: &[f64], rate: f64, n_filters: usize) -> Array2<f64> {
    let len = (0.025 * rate).round() as usize;
    let hop = (0.010 * rate).round() as usize;
    let n_fft = len.next_power_of_two();
    let mel = |f: f64| 2595.0 * (1.0 + f / 700.0).log10();
    let inv = |m: f64| 700.0 * (10f64.powf(m / 2595.0) - 1.0);
    let top = mel(rate / 2.0);
    let centers: Vec<f64> = (0..n_filters + 2)
        .map(|i| inv(top * i as f64 / (n_filters + 1) as f64))
        .collect();
    let frames = if audio.len() < len {
        0
    } else {
        (audio.len() - len) / hop + 1
    };
    let mut out = Array2::zeros((frames, 26));
    for f in 0..frames {
        let raw = &audio[f * hop..f * hop + len];
        let windowed: Vec<f64> = raw
            .iter()
            .enumerate()
            .map(|(i, x)| x * (0.54 - 0.46 * (2.0 * PI * i as f64 / (len - 1) as f64).cos()))
            .collect();
        let power = dft_power(&windowed, n_fft);
        let log_mel: Vec<f64> = (0..n_filters)
            .map(|m| {
                let (lo, c, hi) = (centers[m], centers[m + 1], centers[m + 2]);
                let e: f64 = power
                    .iter()
                    .enumerate()
                    .map(|(b, p)| {
                        let hz = b as f64 * rate / n_fft as f64;
                        let w = if hz > lo && hz <= c {
                            (hz - lo) / (c - lo)
                        } else if hz > c && hz < hi {
                            (hi - hz) / (hi - c)
                        } else {
                            0.0
                        };
                        w * p
                    })
                    .sum();
                e.max(1e-10).ln()
            })
            .collect();
        out[[f, 0]] = raw.iter().map(|x| x * x).sum::<f64>().max(1e-10).ln();
        for k in 1..26 {
            let s: f64 = (0..n_filters)
                .map(|m| log_mel[m] * (PI * k as f64 * (m as f64 + 0.5) / n_filters as f64).cos())
                .sum();
            out[[f, k]] = s * (2.0 / n_filters as f64).sqrt();
        }
    }
    out
}

/// Steady-state amplitude of the `freq` component of `y` (1000 Hz, 4 s),
/// measured by FFT over samples `[500, 3500)`. `freq = 0` reads the DC level.
pub fn steady_state_amplitude(y: &[f64], freq: f64) -> f64 {
    use rustfft::{num_complex::Complex, FftPlanner};
    let seg = &y[500..3500];
    let n = seg.len();
    let mut buf: Vec<Complex<f64>> = seg.iter().map(|&v| Complex::new(v, 0.0)).collect();
    FftPlanner::new().plan_fft_forward(n).process(&mut buf);
    let bin = (freq * n as f64 / 1000.0).round() as usize;
    if bin == 0 {
        buf[0].norm() / n as f64
    } else {
        2.0 * buf[bin].norm() / n as f64
    }
}

pub fn tone(freq: f64, seconds: f64, rate: f64) -> Vec<f64> {
    (0..(seconds * rate) as usize)
        .map(|t| (2.0 * PI * freq * t as f64 / rate).sin())
        .collect()
}

pub fn pearson(a: &[f64], b: &[f64]) -> f64 {
    let n = a.len() as f64;
    let (ma, mb) = (a.iter().sum::<f64>() / n, b.iter().sum::<f64>() / n);
    let cov: f64 = a.iter().zip(b).map(|(x, y)| (x - ma) * (y - mb)).sum();
    let va: f64 = a.iter().map(|x| (x - ma) * (x - ma)).sum();
    let vb: f64 = b.iter().map(|y| (y - mb) * (y - mb)).sum();
    cov / (va * vb).sqrt()
}

// ----------------------------------------------------------- optimizer

/// One AdamW step on a scalar, written out from the update rule.
pub fn adamw_scalar(w: f64, g: f64, m: f64, v: f64, t: i32, lr: f64, wd: f64) -> (f64, f64, f64) {
    let (b1, b2, eps) = (0.9f64, 0.999f64, 1e-8);
    let w = w * (1.0 - lr * wd);
    let m = b1 * m + (1.0 - b1) * g;
    let v = b2 * v + (1.0 - b2) * g * g;
    let m_hat = m / (1.0 - b1.powi(t));
    let v_hat = v / (1.0 - b2.powi(t));
    (w - lr * m_hat / (v_hat.sqrt() + eps), m, v)
}

// ------------------------------------------------------------------ wer

/// Fewest edits over an exhaustive search of all alignments (no memoization).
pub fn exhaustive_edits(h: &[&str], r: &[&str]) -> usize {
    match (h.split_first(), r.split_first()) {
        (None, _) => r.len(),
        (_, None) => h.len(),
        (Some((hx, ht)), Some((rx, rt))) => {
            let sub = exhaustive_edits(ht, rt) + usize::from(hx != rx);
            let del = exhaustive_edits(ht, r) + 1;
            let ins = exhaustive_edits(h, rt) + 1;
            sub.min(del).min(ins)
        }
    }
}

/// Random word lists of length ≤ `max` over a small vocabulary.
pub fn random_words(rng: &mut ChaCha8Rng, max: usize, min: usize) -> Vec<&'static str> {
    const VOCAB: [&str; 4] = ["a", "b", "c", "d"];
    let n = rng.random_range(min..=max);
    (0..n)
        .map(|_| VOCAB[rng.random_range(0..VOCAB.len())])
        .collect()
}
