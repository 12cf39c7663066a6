mod common;

use common::*;
use emg_voicing::alignment::*;
use emg_voicing::dsp::FeatureSequence;
use ndarray::Array2;
use proptest::prelude::*;
use rand::Rng;

fn random_case(
    seed: u64,
    n_v: usize,
    n_s: usize,
    p: usize,
) -> (Array2<f64>, Array2<f64>, Vec<usize>, Array2<f64>) {
    let mut r = rng(seed);
    let target = random_matrix(&mut r, n_v, 26, 1.0);
    let pred = random_matrix(&mut r, n_s, 26, 1.0);
    let labels = (0..n_v).map(|_| r.random_range(0..p)).collect();
    let logits = random_matrix(&mut r, n_s, p, 3.0);
    (target, pred, labels, logits)
}

fn oracle_delta(
    target: &Array2<f64>,
    pred: &Array2<f64>,
    labels: &[usize],
    logits: &Array2<f64>,
    lambda: f64,
) -> Array2<f64> {
    Array2::from_shape_fn((target.nrows(), pred.nrows()), |(i, j)| {
        let lp = log_softmax(&logits.row(j).to_vec());
        delta_prime(
            &target.row(i).to_vec(),
            &pred.row(j).to_vec(),
            lp[labels[i]],
            lambda,
        )
    })
}

#[test]
fn dtw_matches_brute_force() {
    let mut r = rng(11);
    for _ in 0..200 {
        let (n, m) = (r.random_range(1..=7), r.random_range(1..=7));
        let c = random_matrix(&mut r, n, m, 1.0).mapv(f64::abs);
        let ours = dtw(&CostMatrix::new(c.clone(), CostKind::Plain).unwrap()).unwrap();
        let (best, paths) = brute_force_dtw(c.view());
        assert!((ours.cost() - best).abs() < 1e-9);
        assert!(path_is_valid(ours.path(), n, m));
        assert!(paths.iter().any(|p| p == ours.path()));
        assert_eq!(ours.map(), first_match_map(ours.path(), n).as_slice());
        let visited: f64 = ours.path().iter().map(|&(i, j)| c[[i, j]]).sum();
        assert!((visited - ours.cost()).abs() < 1e-9);
    }
}

#[test]
fn aligned_loss_matches_scalar_oracle() {
    for seed in 0..30 {
        let (n_v, n_s) = (2 + seed as usize % 6, 3 + (seed as usize * 7) % 5);
        let (t, p, l, z) = random_case(seed, n_v, n_s, 4);
        let delta = oracle_delta(&t, &p, &l, &z, 0.1);
        let (best, paths) = brute_force_dtw(delta.view());
        let map = first_match_map(&paths[0], n_v);
        let expected: f64 = map
            .iter()
            .enumerate()
            .map(|(i, &j)| delta[[i, j]])
            .sum::<f64>()
            / n_v as f64;
        let (loss, path) = aligned_loss(
            &FeatureSequence::new(t).unwrap(),
            &FeatureSequence::new(p).unwrap(),
            &PhonemeSequence::new(l, 4).unwrap(),
            &PhonemePosterior::from_logits(z.view()),
            0.1,
        )
        .unwrap();
        assert!((path.cost() - best).abs() < 1e-9);
        assert!((loss - expected).abs() < 1e-12, "{loss} vs {expected}");
    }
}

#[test]
fn identical_sequences_with_perfect_posteriors_cost_nothing() {
    let mut r = rng(2);
    let f = random_matrix(&mut r, 9, 26, 1.0);
    let labels: Vec<usize> = (0..9).map(|i| i % 3).collect();
    let probs = Array2::from_shape_fn((9, 3), |(i, k)| f64::from(u8::from(labels[i] == k)));
    let seq = FeatureSequence::new(f).unwrap();
    let post = PhonemePosterior::from_probs(probs.view()).unwrap();
    let lab = PhonemeSequence::new(labels, 3).unwrap();
    let (loss, path) = aligned_loss(&seq, &seq, &lab, &post, DEFAULT_PHONEME_WEIGHT).unwrap();
    assert_eq!(loss, 0.0);
    assert_eq!(path.map(), (0..9).collect::<Vec<_>>().as_slice());
    assert_eq!(direct_loss(&seq, &seq, &lab, &post, 0.1).unwrap(), 0.0);
}

#[test]
fn phoneme_weight_default() {
    assert_eq!(DEFAULT_PHONEME_WEIGHT, 0.1);
}

#[test]
fn direct_loss_truncates_and_rejects_large_mismatch() {
    let (t, p, l, z) = random_case(3, 10, 8, 3);
    let delta = oracle_delta(&t, &p, &l, &z, 0.1);
    let expected: f64 = (0..8).map(|i| delta[[i, i]]).sum::<f64>() / 8.0;
    let got = direct_loss(
        &FeatureSequence::new(t.clone()).unwrap(),
        &FeatureSequence::new(p.clone()).unwrap(),
        &PhonemeSequence::new(l.clone(), 3).unwrap(),
        &PhonemePosterior::from_logits(z.view()),
        0.1,
    )
    .unwrap();
    assert!((got - expected).abs() < 1e-12);
    let (t, p, l, z) = random_case(3, 11, 8, 3);
    let err = direct_loss(
        &FeatureSequence::new(t).unwrap(),
        &FeatureSequence::new(p).unwrap(),
        &PhonemeSequence::new(l, 3).unwrap(),
        &PhonemePosterior::from_logits(z.view()),
        0.1,
    );
    assert!(matches!(err, Err(emg_voicing::Error::Data(_))));
}

/// Loss along a frozen map, recomputed from the scalar definition.
fn frozen_loss(
    t: &Array2<f64>,
    p: &Array2<f64>,
    l: &[usize],
    z: &Array2<f64>,
    map: &[usize],
    lambda: f64,
) -> f64 {
    map.iter()
        .enumerate()
        .map(|(i, &j)| {
            let lp = log_softmax(&z.row(j).to_vec());
            delta_prime(&t.row(i).to_vec(), &p.row(j).to_vec(), lp[l[i]], lambda)
        })
        .sum::<f64>()
        / map.len() as f64
}

#[test]
fn loss_gradients_match_finite_differences() {
    let h = 1e-6;
    for seed in 0..5 {
        let (t, p, l, z) = random_case(seed + 40, 6, 8, 4);
        for aligned in [true, false] {
            let (p, terms) = if aligned {
                (
                    p.clone(),
                    aligned_loss_grad(t.view(), p.view(), &l, z.view(), 0.1).unwrap(),
                )
            } else {
                let p6 = p.slice(ndarray::s![..6, ..]).to_owned();
                let z6 = z.slice(ndarray::s![..6, ..]).to_owned();
                let terms = direct_loss_grad(t.view(), p6.view(), &l, z6.view(), 0.1).unwrap();
                (p6, terms)
            };
            let z = z.slice(ndarray::s![..p.nrows(), ..]).to_owned();
            let map = terms.path.map().to_vec();
            assert!((frozen_loss(&t, &p, &l, &z, &map, 0.1) - terms.total).abs() < 1e-12);
            for ((i, j), g) in terms.d_pred.indexed_iter() {
                let (mut a, mut b) = (p.clone(), p.clone());
                a[[i, j]] += h;
                b[[i, j]] -= h;
                let n = (frozen_loss(&t, &a, &l, &z, &map, 0.1)
                    - frozen_loss(&t, &b, &l, &z, &map, 0.1))
                    / (2.0 * h);
                assert!((g - n).abs() < 1e-7, "d_pred[{i},{j}] {g} vs {n}");
            }
            for ((i, j), g) in terms.d_logits.indexed_iter() {
                let (mut a, mut b) = (z.clone(), z.clone());
                a[[i, j]] += h;
                b[[i, j]] -= h;
                let n = (frozen_loss(&t, &p, &l, &a, &map, 0.1)
                    - frozen_loss(&t, &p, &l, &b, &map, 0.1))
                    / (2.0 * h);
                assert!((g - n).abs() < 1e-7, "d_logits[{i},{j}] {g} vs {n}");
            }
        }
    }
}

#[test]
fn clamped_log_probabilities_have_no_gradient() {
    let t = Array2::zeros((1, 26));
    let p = Array2::zeros((1, 26));
    let z = ndarray::array![[0.0, 50.0]];
    let terms = aligned_loss_grad(t.view(), p.view(), &[0], z.view(), 0.1).unwrap();
    assert!((terms.phoneme - 20.0).abs() < 1e-12);
    assert!(terms.d_logits.iter().all(|&g| g == 0.0));
}

proptest! {
    #[test]
    fn dtw_paths_are_monotone_and_total(n in 1usize..12, m in 1usize..12, seed in 0u64..1000) {
        let c = random_matrix(&mut rng(seed), n, m, 1.0).mapv(f64::abs);
        let a = dtw(&CostMatrix::new(c, CostKind::Plain).unwrap()).unwrap();
        prop_assert!(path_is_valid(a.path(), n, m));
        prop_assert_eq!(a.map().len(), n);
        prop_assert!(a.map().windows(2).all(|w| w[0] <= w[1]));
        prop_assert!(a.path().len() >= n.max(m) && a.path().len() < n + m);
    }

    #[test]
    fn pairwise_distance_is_euclidean(n in 1usize..6, m in 1usize..6, seed in 0u64..1000) {
        let mut r = rng(seed);
        let a = random_matrix(&mut r, n, 26, 2.0);
        let b = random_matrix(&mut r, m, 26, 2.0);
        let d = pairwise_distance_matrix(a.view(), b.view()).unwrap();
        for i in 0..n {
            for j in 0..m {
                let e: f64 = a.row(i).iter().zip(b.row(j)).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt();
                prop_assert!((d[[i, j]] - e).abs() < 1e-12);
            }
        }
    }
}
