//! Transduction of facial EMG signals into speech features.
//!
//! The crate covers the whole desk-scale pipeline:
//!
//! - [`dsp`]: powerline notch bank, zero-phase high-pass, 1000 Hz to 800 Hz
//!   resampling, magnitude scaling and MFCC target extraction.
//! - [`model`]: residual 1-D convolution blocks, a session embedding and a
//!   Transformer encoder with clipped relative position embeddings, with
//!   a hand-derived backward pass.
//! - [`alignment`]: pairwise feature distances, the phoneme-augmented cost,
//!   dynamic time warping and the aligned / direct losses.
//! - [`training`]: concatenate-and-reshape batching, AdamW with linear warmup
//!   and plateau decay, and the epoch loop over silent and vocalized data.
//! - [`analysis`]: phoneme confusion, articulatory forced-choice accuracy,
//!   context and majority baselines, and word error rate.
//! - [`data`]: on-disk dataset formats and a synthetic data generator.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod alignment;
pub mod analysis;
pub mod data;
pub mod dsp;
pub mod error;
pub mod model;
pub mod training;

pub use error::{Error, Result};
