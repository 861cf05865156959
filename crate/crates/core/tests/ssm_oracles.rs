//! Independent oracles for the state-space kernels.

use mi_probe::nn::{DenseMatrix, Parameters};
use mi_probe::ssm::*;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

fn random_matrix(r: &mut ChaCha8Rng, rows: usize, cols: usize, scale: f64) -> DenseMatrix {
    DenseMatrix::from_fn(rows, cols, |_, _| r.random_range(-scale..scale))
}

fn perturb(r: &mut ChaCha8Rng, v: &mut [f64], scale: f64) {
    for x in v.iter_mut() {
        *x += r.random_range(-scale..scale);
    }
}

#[test]
fn zoh_matches_scalar_closed_form() {
    let mut r = rng(9);
    for _ in 0..50 {
        let a = -r.random_range(0.01..5.0);
        let b = r.random_range(-2.0..2.0);
        let log_delta: f64 = r.random_range(-4.0..1.0);
        let c = ContinuousSSM::new(vec![a], vec![b], vec![1.0], 0.0, log_delta).unwrap();
        let d = discretize_zoh(&c);
        let delta = log_delta.exp();
        let a_bar = (delta * a).exp();
        let b_bar = (a_bar - 1.0) / a * b;
        assert!((d.a_bar[0] - a_bar).abs() < 1e-9);
        assert!((d.b_bar[0] - b_bar).abs() < 1e-9);
        assert!(d.a_bar[0].abs() < 1.0);
    }
}

#[test]
fn scan_matches_naive_step_loop() {
    let mut r = rng(4);
    let n = 5;
    let d = DiscreteSSM {
        a_bar: (0..n).map(|_| r.random_range(-0.95..0.95)).collect(),
        b_bar: (0..n).map(|_| r.random_range(-1.0..1.0)).collect(),
    };
    let c: Vec<f64> = (0..n).map(|_| r.random_range(-1.0..1.0)).collect();
    let input: Vec<f64> = (0..64).map(|_| r.random_range(-1.0..1.0)).collect();
    let scanned = ssm_scan(&d, &c, 0.7, &input).unwrap();
    let mut h = vec![0.0; n];
    for (t, &x) in input.iter().enumerate() {
        let (next, y) = ssm_step(&h, x, &d, &c, 0.7).unwrap();
        h = next;
        assert!((scanned[t] - y).abs() < 1e-12);
    }
}

#[test]
fn stable_scan_stays_bounded_over_ten_thousand_steps() {
    let mut r = rng(8);
    let cont = ContinuousSSM::new(
        (0..16).map(|i| -(i as f64 + 1.0) * 0.01).collect(),
        vec![1.0; 16],
        vec![1.0; 16],
        1.0,
        0.0,
    )
    .unwrap();
    let d = discretize_zoh(&cont);
    let input: Vec<f64> = (0..10_000).map(|_| r.random_range(-1.0..=1.0)).collect();
    let mut h = vec![0.0; 16];
    let mut worst: f64 = 0.0;
    for &x in &input {
        let (next, y) = ssm_step(&h, x, &d, &cont.c, cont.d).unwrap();
        h = next;
        let norm = h.iter().map(|v| v * v).sum::<f64>().sqrt();
        assert!(norm.is_finite() && y.is_finite());
        worst = worst.max(norm);
    }
    // |h_n| ≤ |B̄_n| / (1 − |Ā_n|) for inputs bounded by 1.
    let bound = d
        .a_bar
        .iter()
        .zip(&d.b_bar)
        .map(|(a, b)| (b / (1.0 - a)).powi(2))
        .sum::<f64>()
        .sqrt();
    assert!(worst <= bound + 1e-9, "{worst} > {bound}");

    // The selective path must stay bounded too.
    let ssm = SelectiveSsm::init(4, 4, &mut r);
    let seq = random_matrix(&mut r, 10_000, 4, 1.0);
    let y = ssm.forward(&seq).unwrap();
    assert!(y.is_finite());
}

fn frozen_projections(width: usize, n: usize, delta_bias: f64, b: &[f64], c: &[f64]) -> SelectiveProjections {
    let mut p = SelectiveProjections::zeros(width, n);
    p.delta.b = vec![delta_bias; width];
    p.b.b = b.to_vec();
    p.c.b = c.to_vec();
    p
}

#[test]
fn frozen_selective_scan_reduces_to_time_invariant_scan() {
    let mut r = rng(21);
    let (m, n, l) = (3, 4, 50);
    let b: Vec<f64> = (0..n).map(|_| r.random_range(-1.0..1.0)).collect();
    let c: Vec<f64> = (0..n).map(|_| r.random_range(-1.0..1.0)).collect();
    let a = DenseMatrix::from_fn(m, n, |_, _| -r.random_range(0.1..3.0));
    let skip: Vec<f64> = (0..m).map(|_| r.random_range(-1.0..1.0)).collect();
    let proj = frozen_projections(m, n, 0.4, &b, &c);
    let seq = random_matrix(&mut r, l, m, 1.0);
    let y = selective_scan(&proj, &a, &skip, &seq).unwrap();
    let delta = (1.0f64 + 0.4f64.exp()).ln();
    for ch in 0..m {
        let d = frozen_equivalent(a.row(ch), &b, delta);
        let col: Vec<f64> = (0..l).map(|t| seq.get(t, ch)).collect();
        let expect = ssm_scan(&d, &c, skip[ch], &col).unwrap();
        for t in 0..l {
            assert!((y.get(t, ch) - expect[t]).abs() < 1e-9);
        }
    }
}

/// Per-step loop written from the recurrence, independent of the library scan.
fn naive_selective(p: &SelectiveProjections, a: &DenseMatrix, skip: &[f64], seq: &DenseMatrix) -> DenseMatrix {
    let (m, n) = (a.rows(), a.cols());
    let mut h = vec![vec![0.0; n]; m];
    let mut out = DenseMatrix::zeros(seq.rows(), m);
    for t in 0..seq.rows() {
        let x = seq.row(t);
        let mut dt = vec![0.0; m];
        for (i, d) in dt.iter_mut().enumerate() {
            let mut z = p.delta.b[i];
            for j in 0..m {
                z += p.delta.w.get(i, j) * x[j];
            }
            *d = (1.0 + z.exp()).ln();
        }
        let lin = |aff: &mi_probe::nn::Affine, s: usize| -> f64 {
            aff.b[s] + (0..m).map(|j| aff.w.get(s, j) * x[j]).sum::<f64>()
        };
        let bt: Vec<f64> = (0..n).map(|s| lin(&p.b, s)).collect();
        let ct: Vec<f64> = (0..n).map(|s| lin(&p.c, s)).collect();
        for ch in 0..m {
            let mut y = skip[ch] * x[ch];
            for s in 0..n {
                h[ch][s] = (dt[ch] * a.get(ch, s)).exp() * h[ch][s] + dt[ch] * bt[s] * x[ch];
                y += ct[s] * h[ch][s];
            }
            out.set(t, ch, y);
        }
    }
    out
}

#[test]
fn selective_scan_matches_naive_loop() {
    let mut r = rng(33);
    let mut s = SelectiveSsm::init(4, 3, &mut r);
    s.proj.delta.w = random_matrix(&mut r, 4, 4, 0.5);
    let seq = random_matrix(&mut r, 8, 4, 1.0);
    let y = s.forward(&seq).unwrap();
    let expect = naive_selective(&s.proj, &s.a_matrix(), &s.d, &seq);
    assert!(y.max_abs_diff(&expect) < 1e-12);

    let (dt, b, c) = selective_params(seq.row(3), &s.proj).unwrap();
    for i in 0..4 {
        let z = s.proj.delta.b[i] + (0..4).map(|j| s.proj.delta.w.get(i, j) * seq.get(3, j)).sum::<f64>();
        assert!((dt[i] - (1.0 + z.exp()).ln()).abs() < 1e-12);
    }
    assert_eq!(b.len(), 3);
    assert_eq!(c.len(), 3);
}

fn random_block(seed: u64, width: usize, n: usize, residual: bool) -> BiMambaBlockParams {
    let mut r = rng(seed);
    let mut b = BiMambaBlockParams::init(width, n, residual, &mut r);
    perturb(&mut r, &mut b.norm.gain, 0.3);
    perturb(&mut r, &mut b.norm.bias, 0.3);
    b
}

#[test]
fn block_equals_manual_composition() {
    let p = random_block(5, 4, 3, true);
    let mut r = rng(6);
    let x = random_matrix(&mut r, 12, 4, 1.0);
    let out = bimamba_block(&p, &x).unwrap();

    let normed = p.norm.forward(&x);
    let u = p.in_proj.forward(&normed);
    let y_f = naive_selective(&p.forward.proj, &p.forward.a_matrix(), &p.forward.d, &u);
    let y_b = naive_selective(&p.backward.proj, &p.backward.a_matrix(), &p.backward.d, &u.reverse_rows()).reverse_rows();
    let mut s = y_f;
    s.add_assign(&y_b);
    let mut expect = p.out_proj.forward(&s);
    expect.add_assign(&x);
    assert!(out.max_abs_diff(&expect) < 1e-12);
}

#[test]
fn zeroed_backward_branch_equals_forward_only() {
    let mut p = random_block(7, 4, 3, false);
    p.backward = SelectiveSsm::zeros(4, 3);
    let mut r = rng(8);
    let x = random_matrix(&mut r, 10, 4, 1.0);
    let out = p.forward(&x).unwrap();
    let u = p.in_proj.forward(&p.norm.forward(&x));
    let expect = p.out_proj.forward(&p.forward.forward(&u).unwrap());
    assert!(out.max_abs_diff(&expect) < 1e-12);
}

#[test]
fn palindromic_input_with_mirrored_branches_stays_palindromic() {
    let mut p = random_block(9, 4, 3, true);
    p.backward = p.forward.clone();
    let mut r = rng(10);
    let half = random_matrix(&mut r, 6, 4, 1.0);
    let mut rows: Vec<Vec<f64>> = half.iter_rows().map(<[f64]>::to_vec).collect();
    rows.extend(half.reverse_rows().iter_rows().map(<[f64]>::to_vec));
    let x = DenseMatrix::from_rows(&rows).unwrap();
    let out = p.forward(&x).unwrap();
    assert!(out.max_abs_diff(&out.reverse_rows()) < 1e-12);
}

#[test]
fn identity_block_passes_input_through() {
    let p = BiMambaBlockParams::identity(5, 2);
    let mut r = rng(1);
    let x = random_matrix(&mut r, 7, 5, 2.0);
    assert_eq!(p.forward(&x).unwrap(), x);
}

#[test]
fn reversal_duality() {
    let mut r = rng(12);
    let s = SelectiveSsm::init(3, 4, &mut r);
    let x = random_matrix(&mut r, 20, 3, 1.0);
    let via_backward = s.forward(&x.reverse_rows().reverse_rows()).unwrap();
    let direct = s.forward(&x).unwrap();
    assert!(via_backward.max_abs_diff(&direct) < 1e-15);

    // A block whose forward branch is zero runs only the backward branch; a
    // reversed copy with branches swapped must produce the reversed output.
    let mut only_back = random_block(13, 3, 2, false);
    only_back.forward = SelectiveSsm::zeros(3, 2);
    let mut only_fwd = only_back.clone();
    only_fwd.forward = only_back.backward.clone();
    only_fwd.backward = SelectiveSsm::zeros(3, 2);
    let a = only_back.forward(&x.reverse_rows()).unwrap().reverse_rows();
    let b = only_fwd.forward(&x).unwrap();
    assert!(a.max_abs_diff(&b) < 1e-12);
}

fn block_loss(p: &BiMambaBlockParams, x: &DenseMatrix, w: &DenseMatrix) -> f64 {
    let y = p.forward(x).unwrap();
    y.data().iter().zip(w.data()).map(|(a, b)| a * b).sum()
}

#[test]
fn block_backward_matches_finite_differences() {
    for seed in 0..5u64 {
        let p = random_block(100 + seed, 3, 2, seed % 2 == 0);
        let mut r = rng(200 + seed);
        let x = random_matrix(&mut r, 6, 3, 1.0);
        let w = random_matrix(&mut r, 6, 3, 1.0);
        let (_, cache) = p.forward_cached(&x).unwrap();
        let mut grads = p.zeros_like();
        let gx = p.backward_pass(&cache, &w, &mut grads);

        let h = 1e-5;
        let n_t = p.tensors().len();
        for ti in 0..n_t {
            for i in 0..p.tensors()[ti].len() {
                let mut plus = p.clone();
                plus.tensors_mut()[ti][i] += h;
                let mut minus = p.clone();
                minus.tensors_mut()[ti][i] -= h;
                let fd = (block_loss(&plus, &x, &w) - block_loss(&minus, &x, &w)) / (2.0 * h);
                let an = grads.tensors()[ti][i];
                let err = (fd - an).abs() / fd.abs().max(an.abs()).max(1e-4);
                assert!(err < 1e-5, "seed {seed} {} [{i}]: fd {fd} vs {an}", p.tensor_name(ti));
            }
        }
        for i in 0..x.data().len() {
            let mut xp = x.clone();
            xp.data_mut()[i] += h;
            let mut xm = x.clone();
            xm.data_mut()[i] -= h;
            let fd = (block_loss(&p, &xp, &w) - block_loss(&p, &xm, &w)) / (2.0 * h);
            let an = gx.data()[i];
            assert!((fd - an).abs() / fd.abs().max(an.abs()).max(1e-4) < 1e-5, "input {i}: {fd} vs {an}");
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn time_invariant_scan_is_linear(
        seed in 0u64..1000,
        alpha in -3.0f64..3.0,
        beta in -3.0f64..3.0,
    ) {
        let mut r = rng(seed);
        let n = 4;
        let d = DiscreteSSM {
            a_bar: (0..n).map(|_| r.random_range(-0.99..0.99)).collect(),
            b_bar: (0..n).map(|_| r.random_range(-1.0..1.0)).collect(),
        };
        let c: Vec<f64> = (0..n).map(|_| r.random_range(-1.0..1.0)).collect();
        let u: Vec<f64> = (0..40).map(|_| r.random_range(-1.0..1.0)).collect();
        let v: Vec<f64> = (0..40).map(|_| r.random_range(-1.0..1.0)).collect();
        let mix: Vec<f64> = u.iter().zip(&v).map(|(a, b)| alpha * a + beta * b).collect();
        let su = ssm_scan(&d, &c, 0.3, &u).unwrap();
        let sv = ssm_scan(&d, &c, 0.3, &v).unwrap();
        let sm = ssm_scan(&d, &c, 0.3, &mix).unwrap();
        for t in 0..40 {
            prop_assert!((sm[t] - (alpha * su[t] + beta * sv[t])).abs() < 1e-9);
        }
    }
}
