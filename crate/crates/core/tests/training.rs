mod common;

use common::*;
use emg_voicing::data::{synth_dataset, SynthConfig};
use emg_voicing::dsp::{ProcessedSignal, RawSignal, PROCESSED_RATE};
use emg_voicing::model::{ModelConfig, ModelParams};
use emg_voicing::training::*;
use emg_voicing::Error;
use proptest::prelude::*;
use rand::Rng;

fn processed(seed: u64, len: usize, channels: usize) -> ProcessedSignal {
    let frames = random_matrix(&mut rng(seed), len, channels, 1.0);
    ProcessedSignal {
        signal: RawSignal::from_frames(frames.view(), PROCESSED_RATE).unwrap(),
        scale_applied: true,
    }
}

fn items(lens: &[usize]) -> Vec<(String, usize)> {
    lens.iter()
        .enumerate()
        .map(|(i, &l)| (format!("u{i}"), l))
        .collect()
}

fn tiny_dataset() -> emg_voicing::data::Dataset {
    synth_dataset(&SynthConfig {
        utterances: 24,
        mean_length_s: 0.6,
        validation_fraction: 0.2,
        test_fraction: 0.1,
        seed: 5,
        ..SynthConfig::default()
    })
    .unwrap()
}

fn tiny_model() -> ModelConfig {
    ModelConfig {
        in_channels: 4,
        channels: 8,
        transformer_layers: 1,
        heads: 2,
        model_dim: 8,
        ff_dim: 16,
        rel_clip: 4,
        session_embed_dim: 4,
        phoneme_count: 10,
        ..ModelConfig::desk()
    }
}

fn tiny_train(epochs: usize) -> TrainConfig {
    TrainConfig {
        max_batch_samples: 8000,
        warmup: 5,
        peak_lr: 3e-3,
        epochs,
        ..TrainConfig::default()
    }
}

#[test]
fn greedy_batching_example() {
    let plans = make_batches(&items(&[100_000, 100_000, 10_000]), 204_800, 1600).unwrap();
    assert_eq!(plans.len(), 2);
    assert_eq!(plans[0].ids, ["u0", "u1"]);
    assert_eq!(plans[0].rows, 125);
    assert_eq!(plans[0].pad, 0);
    assert_eq!(plans[1].ids, ["u2"]);
    assert_eq!(plans[1].rows, 7);
    assert_eq!(plans[1].pad, 7 * 1600 - 10_000);
}

#[test]
fn oversized_utterance_gets_its_own_batch() {
    let plans = make_batches(&items(&[5000, 300_000, 5000]), 204_800, 1600).unwrap();
    let ids: Vec<_> = plans.iter().map(|p| p.ids.clone()).collect();
    assert_eq!(ids, [vec!["u0"], vec!["u1"], vec!["u2"]]);
    assert!(make_batches(&[], 10, 8).is_err());
}

#[test]
fn packed_layout_is_row_major_concatenation() {
    let a = processed(1, 24, 3);
    let b = processed(2, 40, 3);
    let (block, plan) = pack_batch(&[("a", &a), ("b", &b)], 16).unwrap();
    assert_eq!(block.dim(), (4, 16, 3));
    let concat: Vec<[f64; 3]> = [&a, &b]
        .iter()
        .flat_map(|s| {
            (0..s.len()).map(|t| {
                [
                    s.signal.channel(0)[t],
                    s.signal.channel(1)[t],
                    s.signal.channel(2)[t],
                ]
            })
        })
        .collect();
    for (t, v) in concat.iter().enumerate() {
        for c in 0..3 {
            assert_eq!(block[[t / 16, t % 16, c]], v[c]);
        }
    }
    for t in concat.len()..64 {
        assert!((0..3).all(|c| block[[t / 16, t % 16, c]] == 0.0));
    }
    assert_eq!(
        plan.frame_owners(8),
        [
            Some(0),
            Some(0),
            Some(0),
            Some(1),
            Some(1),
            Some(1),
            Some(1),
            Some(1)
        ]
    );
}

#[test]
fn adamw_matches_scalar_reference() {
    let mut r = rng(9);
    let (lr, wd) = (1e-3, 1e-2);
    let mut w: Vec<f64> = (0..5).map(|_| r.random_range(-1.0..1.0)).collect();
    let mut m = [0.0; 5];
    let mut v = [0.0; 5];
    let mut reference: Vec<(f64, f64, f64)> = w.iter().map(|&x| (x, 0.0, 0.0)).collect();
    for step in 1..=20u64 {
        let g: Vec<f64> = (0..5).map(|_| r.random_range(-2.0..2.0)).collect();
        adamw_update(
            w.iter_mut(),
            g.iter(),
            m.iter_mut(),
            v.iter_mut(),
            step,
            lr,
            wd,
            AdamHyper::default(),
        );
        for (s, &gi) in reference.iter_mut().zip(&g) {
            *s = adamw_scalar(s.0, gi, s.1, s.2, step as i32, lr, wd);
        }
        for (i, s) in reference.iter().enumerate() {
            assert!((w[i] - s.0).abs() < 1e-15);
            assert!((m[i] - s.1).abs() < 1e-15 && (v[i] - s.2).abs() < 1e-15);
        }
    }
}

#[test]
fn adamw_first_step_hand_computed() {
    // m̂ = g, v̂ = g², so the Adam part moves by lr · g / (|g| + eps).
    let (mut w, mut m, mut v) = ([2.0], [0.0], [0.0]);
    adamw_update(
        w.iter_mut(),
        [0.5].iter(),
        m.iter_mut(),
        v.iter_mut(),
        1,
        0.1,
        0.01,
        AdamHyper::default(),
    );
    let expected = 2.0 * (1.0 - 0.1 * 0.01) - 0.1 * 0.5 / (0.5 + 1e-8);
    assert!((w[0] - expected).abs() < 1e-15);
    assert!((m[0] - 0.05).abs() < 1e-15);
    assert!((v[0] - 0.00025).abs() < 1e-15);
}

#[test]
fn warmup_schedule_values() {
    assert!((lr_schedule(250, 1e-3, 500, 0, 0.5) - 5e-4).abs() < 1e-18);
    assert_eq!(lr_schedule(500, 1e-3, 500, 0, 0.5), 1e-3);
    assert_eq!(lr_schedule(9000, 1e-3, 500, 0, 0.5), 1e-3);
    assert_eq!(lr_schedule(9000, 1e-3, 500, 2, 0.5), 2.5e-4);
    assert_eq!(lr_schedule(1, 1e-3, 0, 0, 0.5), 1e-3);
}

#[test]
fn plateau_halves_after_five_bad_epochs() {
    let mut p = PlateauTracker::new(5);
    assert!(!p.observe(1.0));
    for _ in 0..4 {
        assert!(!p.observe(1.0));
    }
    assert!(p.observe(1.5));
    assert_eq!(p.decays, 1);
    assert_eq!(lr_schedule(1000, 1e-3, 500, p.decays, 0.5), 5e-4);
    // Improvement resets the count.
    for _ in 0..4 {
        p.observe(2.0);
    }
    assert!(!p.observe(0.5));
    for _ in 0..4 {
        assert!(!p.observe(0.5));
    }
    assert!(p.observe(0.5));
    assert_eq!(p.decays, 2);
}

#[test]
fn non_finite_gradient_leaves_parameters_untouched() {
    let cfg = tiny_model();
    let mut params = ModelParams::init(&cfg, 1).unwrap();
    let before = params.clone();
    let mut grads = params.zeros_like();
    *grads.named_tensors_mut()[3].1.iter_mut().next().unwrap() = f64::NAN;
    let mut state = OptimizerState::new(&params, 5);
    let err = adamw_step(&mut params, &grads, &mut state, 1e-3, 0.0).unwrap_err();
    assert!(matches!(err, Error::NonFinite(_)));
    assert_eq!(params.to_bytes(), before.to_bytes());
    assert_eq!(state.step, 0);
}

#[test]
fn zero_epochs_returns_initialization() {
    let ds = tiny_dataset();
    let cfg = tiny_model();
    let (params, log) = train_loop(&ds, &cfg, &tiny_train(0)).unwrap();
    assert_eq!(
        params.to_bytes(),
        ModelParams::init(&cfg, 0).unwrap().to_bytes()
    );
    assert!(log.epochs.is_empty());
    assert_eq!(log.to_csv().lines().next(), Some(LOG_HEADER));
}

#[test]
fn incompatible_configurations_are_rejected() {
    let ds = tiny_dataset();
    let two_blocks = ModelConfig {
        conv_blocks: 2,
        ..tiny_model()
    };
    assert!(matches!(
        train_loop(&ds, &two_blocks, &tiny_train(1)),
        Err(Error::Config(_))
    ));
    let wrong_inventory = ModelConfig {
        phoneme_count: 40,
        ..tiny_model()
    };
    assert!(matches!(
        train_loop(&ds, &wrong_inventory, &tiny_train(1)),
        Err(Error::Config(_))
    ));
}

#[test]
fn short_run_lowers_validation_loss_and_is_repeatable() {
    let ds = tiny_dataset();
    let cfg = tiny_model();
    let tcfg = tiny_train(6);
    let (a, log_a) = train_loop(&ds, &cfg, &tcfg).unwrap();
    let (b, log_b) = train_loop(&ds, &cfg, &tcfg).unwrap();
    assert_eq!(a.to_bytes(), b.to_bytes());
    assert_eq!(log_a.to_csv(), log_b.to_csv());
    let initial = log_a.initial_val.unwrap().total;
    let last = log_a.epochs.last().unwrap().val.total;
    assert!(last < initial, "{last} !< {initial}");
    assert_eq!(log_a.epochs.len(), 6);
    assert!(log_a.epochs.windows(2).all(|w| w[1].step > w[0].step));

    let (c, _) = train_loop(&ds, &cfg, &TrainConfig { seed: 1, ..tcfg }).unwrap();
    assert_ne!(a.to_bytes(), c.to_bytes());
}

#[test]
fn predictions_have_one_frame_per_eight_processed_samples() {
    let ds = tiny_dataset();
    let cfg = tiny_model();
    let params = ModelParams::init(&cfg, 0).unwrap();
    let recs: Vec<_> = ds.recordings().iter().take(3).collect();
    let outs = predict_all(&params, &cfg, &recs).unwrap();
    for (r, o) in recs.iter().zip(&outs) {
        assert_eq!(
            o.n_frames() * FRAME_SAMPLES,
            prepare_signal(r).unwrap().len()
        );
        assert_eq!(o.mfcc.ncols(), 26);
        assert_eq!(o.phoneme_logits.ncols(), 10);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn unpack_inverts_pack(lens in prop::collection::vec(1usize..60, 1..8), seq in 1usize..8, ch in 1usize..4, seed in 0u64..1000) {
        let seq_len = seq * 8;
        let sigs: Vec<ProcessedSignal> = lens.iter().enumerate().map(|(i, &l)| processed(seed + i as u64, l * 8, ch)).collect();
        let ids: Vec<String> = (0..sigs.len()).map(|i| format!("u{i}")).collect();
        let members: Vec<(&str, &ProcessedSignal)> = ids.iter().map(|s| s.as_str()).zip(&sigs).collect();
        let (block, plan) = pack_batch(&members, seq_len).unwrap();
        let total: usize = lens.iter().sum::<usize>() * 8;
        prop_assert_eq!(plan.rows, total.div_ceil(seq_len));
        prop_assert_eq!(block.dim(), (plan.rows, seq_len, ch));
        let parts = unpack_batch(block.view(), &plan, 1).unwrap();
        for (p, s) in parts.iter().zip(&sigs) {
            prop_assert_eq!(p, &s.signal.to_frames());
        }
        let views: Vec<_> = parts.iter().map(|p| p.view()).collect();
        prop_assert_eq!(&repack_frames(&views, &plan, 1, ch).unwrap(), &block);

        let frames = block.mapv(|x| x * 2.0).slice(ndarray::s![.., ..;8, ..]).to_owned();
        let per = unpack_batch(frames.view(), &plan, 8).unwrap();
        for (p, s) in per.iter().zip(&sigs) {
            prop_assert_eq!(p.nrows(), s.len() / 8);
        }
    }

    #[test]
    fn greedy_batches_cover_in_order_and_respect_cap(lens in prop::collection::vec(1usize..300_000, 1..30), cap in 1000usize..400_000) {
        let its = items(&lens);
        let plans = make_batches(&its, cap, 1600).unwrap();
        let flat: Vec<String> = plans.iter().flat_map(|p| p.ids.clone()).collect();
        prop_assert_eq!(flat, its.iter().map(|i| i.0.clone()).collect::<Vec<_>>());
        for p in &plans {
            prop_assert!(p.total_len() <= cap || p.len() == 1);
            prop_assert_eq!(p.rows, p.total_len().div_ceil(1600));
        }
        let shuffled = shuffled_batches(&its, cap, 1600, 3).unwrap();
        let mut ids: Vec<String> = shuffled.iter().flat_map(|p| p.ids.clone()).collect();
        ids.sort();
        let mut expected: Vec<String> = its.iter().map(|i| i.0.clone()).collect();
        expected.sort();
        prop_assert_eq!(ids, expected);
    }

    #[test]
    fn adam_first_step_is_bounded_by_lr(g in -1e3f64..1e3, w in -10f64..10.0, lr in 1e-5f64..1e-1) {
        let (mut w1, mut m, mut v) = ([w], [0.0], [0.0]);
        adamw_update(w1.iter_mut(), [g].iter(), m.iter_mut(), v.iter_mut(), 1, lr, 0.0, AdamHyper::default());
        prop_assert!((w1[0] - w).abs() <= lr * (1.0 + 1e-12));
        let (mut w2, mut m2, mut v2) = ([w], [0.0], [0.0]);
        adamw_update(w2.iter_mut(), [g].iter(), m2.iter_mut(), v2.iter_mut(), 1, lr, 0.0, AdamHyper::default());
        let plain = adamw_scalar(w, g, 0.0, 0.0, 1, lr, 0.0).0;
        prop_assert!((w2[0] - plain).abs() < 1e-15);
    }
}
