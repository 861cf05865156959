use mi_probe::mine::*;
use mi_probe::nn::{Activation, DenseMatrix, MlpParams, Parameters};
use proptest::prelude::*;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

fn normal_matrix(r: &mut ChaCha8Rng, rows: usize, cols: usize) -> DenseMatrix {
    DenseMatrix::from_fn(rows, cols, |_, _| StandardNormal.sample(r))
}

fn bound(net: &MlpParams, joint: &DenseMatrix, marginal: &DenseMatrix) -> f64 {
    dv_objective(&net.forward(joint).unwrap(), &net.forward(marginal).unwrap()).unwrap()
}

#[test]
fn gradient_matches_finite_differences_of_the_batch_bound() {
    // With the average seeded from the current batch the corrected gradient
    // is the exact gradient of the batch bound.
    for seed in 0..5u64 {
        let net = MlpParams::seeded(&[3, 6, 5, 1], if seed % 2 == 0 { Activation::Elu } else { Activation::Relu }, seed).unwrap();
        let mut r = rng(50 + seed);
        let joint = normal_matrix(&mut r, 16, 3);
        let marginal = normal_matrix(&mut r, 12, 3);
        let g = mine_gradient(&joint, &marginal, &net, None, 0.0).unwrap();
        assert_eq!(g.clamp_events, 0);
        assert!((g.objective - bound(&net, &joint, &marginal)).abs() < 1e-12);
        let h = 1e-6;
        for ti in 0..net.tensors().len() {
            for i in 0..net.tensors()[ti].len() {
                let mut plus = net.clone();
                plus.tensors_mut()[ti][i] += h;
                let mut minus = net.clone();
                minus.tensors_mut()[ti][i] -= h;
                let fd = (bound(&plus, &joint, &marginal) - bound(&minus, &joint, &marginal)) / (2.0 * h);
                let an = g.grads.tensors()[ti][i];
                assert!((fd - an).abs() < 1e-6, "seed {seed} {} [{i}]: {fd} vs {an}", net.tensor_name(ti));
            }
        }
    }
}

#[test]
fn decay_zero_ignores_the_previous_average() {
    let net = MlpParams::seeded(&[2, 4, 1], Activation::Elu, 1).unwrap();
    let mut r = rng(2);
    let joint = normal_matrix(&mut r, 8, 2);
    let marginal = normal_matrix(&mut r, 8, 2);
    let fresh = mine_gradient(&joint, &marginal, &net, None, 0.0).unwrap();
    let stale = mine_gradient(&joint, &marginal, &net, Some(123.0), 0.0).unwrap();
    assert_eq!(fresh.ema, stale.ema);
    assert_eq!(fresh.grads, stale.grads);
    let mixed = mine_gradient(&joint, &marginal, &net, Some(2.0), 0.5).unwrap();
    assert!((mixed.ema - (1.0 + 0.5 * fresh.ema)).abs() < 1e-12);
}

/// Textbook Durstenfeld shuffle, retried until no element stays in place.
fn reference_derangement(len: usize, seed: u64) -> Vec<usize> {
    let mut r = rng(seed);
    loop {
        let mut a: Vec<usize> = (0..len).collect();
        let mut i = len - 1;
        while i > 0 {
            let j: usize = rand::Rng::random_range(&mut r, 0..i + 1);
            a.swap(i, j);
            i -= 1;
        }
        if (0..len).all(|k| a[k] != k) {
            return a;
        }
    }
}

#[test]
fn marginal_permutation_matches_reference_fisher_yates() {
    let perm = marginal_permutation(5, &mut rng(7)).unwrap();
    assert_eq!(perm, reference_derangement(5, 7));
    let mut sorted = perm.clone();
    sorted.sort_unstable();
    assert_eq!(sorted, vec![0, 1, 2, 3, 4]);
    for seed in 0..50 {
        assert_eq!(marginal_permutation(9, &mut rng(seed)).unwrap(), reference_derangement(9, seed));
    }
}

#[test]
fn shuffle_marginal_pairs_each_frame_with_another_frame() {
    let x = FeatureSequence::new(DenseMatrix::from_fn(5, 2, |i, j| (10 * i + j) as f64)).unwrap();
    let t = FeatureSequence::new(DenseMatrix::from_fn(5, 1, |i, _| -(i as f64) - 1.0)).unwrap();
    let pairs = shuffle_marginal(&x, &t, &mut rng(7)).unwrap();
    let perm = marginal_permutation(5, &mut rng(7)).unwrap();
    assert_eq!(pairs.shape(), (5, 3));
    for j in 0..5 {
        assert_eq!(&pairs.row(j)[..2], x.values().row(j));
        assert_eq!(pairs.get(j, 2), t.values().get(perm[j], 0));
        assert_ne!(pairs.get(j, 2), t.values().get(j, 0));
    }
}

#[test]
fn derangement_targets_are_spread_evenly() {
    let mut r = rng(11);
    let len = 4;
    let draws = 30_000;
    let mut counts = vec![vec![0usize; len]; len];
    for _ in 0..draws {
        for (j, &p) in marginal_permutation(len, &mut r).unwrap().iter().enumerate() {
            counts[j][p] += 1;
        }
    }
    for (j, row) in counts.iter().enumerate() {
        assert_eq!(row[j], 0);
        for (k, &c) in row.iter().enumerate() {
            if k != j {
                let frac = c as f64 / draws as f64;
                assert!((frac - 1.0 / 3.0).abs() < 0.1, "{j}->{k}: {frac}");
            }
        }
    }
}

#[test]
fn degenerate_inputs_are_rejected() {
    assert!(marginal_permutation(1, &mut rng(0)).is_err());
    assert!(FeatureSequence::new(DenseMatrix::zeros(1, 3)).is_err());
    let x = FeatureSequence::new(DenseMatrix::zeros(4, 1)).unwrap();
    let t = FeatureSequence::new(DenseMatrix::zeros(5, 1)).unwrap();
    assert!(shuffle_marginal(&x, &t, &mut rng(0)).is_err());
}

fn quick_config(seed: u64) -> MineConfig {
    MineConfig {
        batch_size: 128,
        train_steps: 400,
        eval_batches: 8,
        hidden: vec![32, 32],
        learning_rate: 1e-3,
        seed,
        ..MineConfig::default()
    }
}

fn correlated(len: usize, rho: f64, seed: u64) -> (FeatureSequence, FeatureSequence) {
    let mut r = rng(seed);
    let x = normal_matrix(&mut r, len, 1);
    let noise = normal_matrix(&mut r, len, 1);
    let y = DenseMatrix::from_fn(len, 1, |i, _| rho * x.get(i, 0) + (1.0 - rho * rho).sqrt() * noise.get(i, 0));
    (FeatureSequence::new(x).unwrap(), FeatureSequence::new(y).unwrap())
}

#[test]
fn invertible_reparametrization_preserves_the_estimate() {
    let (x, y) = correlated(1024, 0.8, 3);
    let truth = -0.5 * (1.0 - 0.64f64).ln();
    let mapped = FeatureSequence::new(DenseMatrix::from_fn(1024, 1, |i, _| 2.0 * y.values().get(i, 0) + 1.0)).unwrap();
    let a = estimate_mi_sample(&x, &y, &quick_config(1)).unwrap().value_nats;
    let b = estimate_mi_sample(&x, &mapped, &quick_config(1)).unwrap().value_nats;
    assert!((a - truth).abs() < 0.15, "{a} vs {truth}");
    assert!((b - truth).abs() < 0.15, "{b} vs {truth}");
    assert!((a - b).abs() < 0.15, "{a} vs {b}");
}

#[test]
fn estimation_is_reproducible_and_records_a_curve() {
    let (x, y) = correlated(256, 0.5, 4);
    let mut cfg = quick_config(9);
    cfg.train_steps = 60;
    let a = estimate_mi_sample(&x, &y, &cfg).unwrap();
    let b = estimate_mi_sample(&x, &y, &cfg).unwrap();
    assert_eq!(a, b);
    assert!(a.final_loss_curve.len() <= cfg.curve_points && !a.final_loss_curve.is_empty());
    cfg.seed = 10;
    assert_ne!(estimate_mi_sample(&x, &y, &cfg).unwrap().value_nats, a.value_nats);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn bound_is_invariant_to_score_order(
        joint in prop::collection::vec(-20.0f64..20.0, 1..30),
        marginal in prop::collection::vec(-20.0f64..20.0, 1..30),
        seed in 0u64..1000,
    ) {
        let base = dv_objective(&joint, &marginal).unwrap();
        let mut j2 = joint.clone();
        let mut m2 = marginal.clone();
        let mut r = rng(seed);
        j2.shuffle(&mut r);
        m2.shuffle(&mut r);
        prop_assert!((dv_objective(&j2, &m2).unwrap() - base).abs() < 1e-12);
    }

    #[test]
    fn identical_score_sets_never_exceed_zero(scores in prop::collection::vec(-50.0f64..50.0, 1..40)) {
        prop_assert!(dv_objective(&scores, &scores).unwrap() <= 1e-12);
    }

    #[test]
    fn constant_shift_of_scores_cancels(
        joint in prop::collection::vec(-10.0f64..10.0, 1..20),
        marginal in prop::collection::vec(-10.0f64..10.0, 1..20),
        c in -30.0f64..30.0,
    ) {
        let shifted_j: Vec<f64> = joint.iter().map(|v| v + c).collect();
        let shifted_m: Vec<f64> = marginal.iter().map(|v| v + c).collect();
        let a = dv_objective(&joint, &marginal).unwrap();
        let b = dv_objective(&shifted_j, &shifted_m).unwrap();
        prop_assert!((a - b).abs() < 1e-9);
    }

    #[test]
    fn permutations_are_derangements(len in 2usize..200, seed in any::<u64>()) {
        let p = marginal_permutation(len, &mut rng(seed)).unwrap();
        let mut seen = vec![false; len];
        for (j, &k) in p.iter().enumerate() {
            prop_assert_ne!(j, k);
            prop_assert!(!seen[k]);
            seen[k] = true;
        }
    }
}

#[test]
fn clamped_scores_stop_contributing() {
    let mut net = MlpParams::zeros(&[1, 1], Activation::Relu).unwrap();
    net.biases[0][0] = 80.0;
    let joint = DenseMatrix::from_vec(2, 1, vec![0.0, 1.0]).unwrap();
    let g = mine_gradient(&joint, &joint, &net, None, 0.0).unwrap();
    assert_eq!(g.clamp_events, 4);
    assert!(g.grads.tensors().iter().all(|t| t.iter().all(|v| *v == 0.0)));
}
