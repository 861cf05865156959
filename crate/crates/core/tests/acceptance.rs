//! End-to-end acceptance run. Prints one PASS/FAIL line per criterion and
//! fails if any criterion fails.
//!
//! The trend criterion trains and probes fifteen desk-sized models, so this
//! test takes tens of minutes on a single core.

use std::time::Instant;

use mi_probe::experiment::{run_experiment, ExperimentSpec, CSV_FILE, REPORT_FILE};
use mi_probe::mine::*;
use mi_probe::models::{gen_synthetic_dataset, DataSpec, HeadKind, Model, ModelSpec};
use mi_probe::nn::{Activation, DenseMatrix, MlpParams, Parameters};
use mi_probe::probe::{probe_layers, ProbeConfig, TrendLabel};
use mi_probe::ssm::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

struct Ledger {
    lines: Vec<(bool, String)>,
}

impl Ledger {
    fn record(&mut self, id: &str, ok: bool, detail: String) {
        let line = format!("[{}] {id}: {detail}", if ok { "PASS" } else { "FAIL" });
        println!("{line}");
        self.lines.push((ok, line));
    }
}

fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

fn normal(r: &mut ChaCha8Rng, rows: usize, cols: usize) -> DenseMatrix {
    DenseMatrix::from_fn(rows, cols, |_, _| StandardNormal.sample(r))
}

const FRAMES: usize = 4096;

fn oracle_mine(seed: u64) -> MineConfig {
    MineConfig {
        batch_size: 256,
        train_steps: 1000,
        hidden: vec![64, 64],
        learning_rate: 1e-3,
        seed,
        ..MineConfig::default()
    }
}

fn gaussian_pair(rho: f64, d: usize, seed: u64) -> (FeatureSequence, FeatureSequence) {
    let mut r = rng(1000 + seed);
    let x = normal(&mut r, FRAMES, d);
    let noise = normal(&mut r, FRAMES, d);
    let s = (1.0 - rho * rho).sqrt();
    let t = DenseMatrix::from_fn(FRAMES, d, |i, j| rho * x.get(i, j) + s * noise.get(i, j));
    (FeatureSequence::new(x).unwrap(), FeatureSequence::new(t).unwrap())
}

fn mean_over_seeds(pair: impl Fn(u64) -> (FeatureSequence, FeatureSequence)) -> (f64, Vec<f64>, f64) {
    let start = Instant::now();
    let values: Vec<f64> = (0..5)
        .map(|seed| {
            let (x, t) = pair(seed);
            estimate_mi_sample(&x, &t, &oracle_mine(seed)).unwrap().value_nats
        })
        .collect();
    (values.iter().sum::<f64>() / 5.0, values, start.elapsed().as_secs_f64())
}

fn fmt(values: &[f64]) -> String {
    values.iter().map(|v| format!("{v:.4}")).collect::<Vec<_>>().join(", ")
}

fn gaussian_oracle(ledger: &mut Ledger) {
    for (rho, d, tol) in [(0.5f64, 1, 0.08), (0.9, 1, 0.08), (0.5, 4, 0.12)] {
        let truth = -0.5 * d as f64 * (1.0 - rho * rho).ln();
        let (mean, values, secs) = mean_over_seeds(|s| gaussian_pair(rho, d, s));
        let ok = (mean - truth).abs() <= tol && secs < 120.0;
        ledger.record(
            &format!("1 gaussian rho={rho} d={d}"),
            ok,
            format!("mean {mean:.4} vs {truth:.4} ± {tol} over [{}] in {secs:.1}s", fmt(&values)),
        );
    }
}

fn independence_null(ledger: &mut Ledger) {
    let (mean, values, _) = mean_over_seeds(|seed| {
        let x = normal(&mut rng(2000 + seed), FRAMES, 1);
        let t = normal(&mut rng(3000 + seed), FRAMES, 1);
        (FeatureSequence::new(x).unwrap(), FeatureSequence::new(t).unwrap())
    });
    ledger.record(
        "2 independence",
        mean.abs() < 0.05,
        format!("|mean| {:.4} < 0.05 over [{}]", mean.abs(), fmt(&values)),
    );
}

fn discrete_ceiling(ledger: &mut Ledger) {
    let mut r = rng(4000);
    let code = DenseMatrix::from_fn(8, 3, |c, j| if (c >> j) & 1 == 1 { 1.0 } else { -1.0 });
    let mut x = DenseMatrix::zeros(FRAMES, 3);
    for i in 0..FRAMES {
        let c = r.random_range(0..8);
        x.row_mut(i).copy_from_slice(code.row(c));
    }
    let seq = FeatureSequence::new(x).unwrap();
    let v = estimate_mi_sample(&seq, &seq, &oracle_mine(0)).unwrap().value_nats;
    let truth = 8f64.ln();
    ledger.record("3 discrete ceiling", (v - truth).abs() <= 0.15, format!("{v:.4} vs {truth:.4} ± 0.15"));
}

fn rel_err(fd: f64, an: f64) -> f64 {
    (fd - an).abs() / fd.abs().max(an.abs()).max(1e-4)
}

fn max_fd_error(net: &MlpParams, f: impl Fn(&MlpParams) -> f64, grads: &MlpParams) -> f64 {
    let h = 1e-5;
    let mut worst: f64 = 0.0;
    for ti in 0..net.tensors().len() {
        for i in 0..net.tensors()[ti].len() {
            let mut plus = net.clone();
            plus.tensors_mut()[ti][i] += h;
            let mut minus = net.clone();
            minus.tensors_mut()[ti][i] -= h;
            let fd = (f(&plus) - f(&minus)) / (2.0 * h);
            worst = worst.max(rel_err(fd, grads.tensors()[ti][i]));
        }
    }
    worst
}

fn gradient_correctness(ledger: &mut Ledger) {
    let mut worst_mlp: f64 = 0.0;
    let mut worst_mine: f64 = 0.0;
    for seed in 0..6u64 {
        let act = if seed % 2 == 0 { Activation::Relu } else { Activation::Elu };
        let sizes: &[usize] = if seed < 3 { &[3, 7, 1] } else { &[3, 6, 5, 1] };
        let net = MlpParams::seeded(sizes, act, seed).unwrap();
        let mut r = rng(500 + seed);
        let batch = normal(&mut r, 9, 3);
        let upstream: Vec<f64> = (0..9).map(|_| r.random_range(-1.0..1.0)).collect();
        let weighted = |p: &MlpParams| -> f64 {
            p.forward(&batch).unwrap().iter().zip(&upstream).map(|(s, u)| s * u).sum()
        };
        let grads = net.backward(&net.forward_cached(&batch).unwrap(), &upstream).unwrap();
        worst_mlp = worst_mlp.max(max_fd_error(&net, weighted, &grads));

        let joint = normal(&mut r, 12, 3);
        let marginal = normal(&mut r, 10, 3);
        let g = mine_gradient(&joint, &marginal, &net, Some(1.7), 0.99).unwrap();
        let ema = g.ema;
        // With the denominator frozen the ascent direction is the gradient of
        // mean(ψ_joint) − mean(exp ψ_marginal) / ema.
        let surrogate = |p: &MlpParams| -> f64 {
            let j = p.forward(&joint).unwrap();
            let m = p.forward(&marginal).unwrap();
            j.iter().sum::<f64>() / j.len() as f64 - m.iter().map(|s| s.exp()).sum::<f64>() / m.len() as f64 / ema
        };
        worst_mine = worst_mine.max(max_fd_error(&net, surrogate, &g.grads));
    }
    ledger.record("4 mlp_backward", worst_mlp < 1e-5, format!("max relative error {worst_mlp:.2e} < 1e-5 over 6 nets"));
    ledger.record("4 mine_gradient", worst_mine < 1e-5, format!("max relative error {worst_mine:.2e} < 1e-5 over 6 nets"));
}

fn ssm_exactness(ledger: &mut Ledger) {
    let mut r = rng(600);
    let mut zoh: f64 = 0.0;
    for _ in 0..100 {
        let a = -r.random_range(0.01..5.0);
        let b = r.random_range(-2.0..2.0);
        let log_delta: f64 = r.random_range(-4.0..1.0);
        let d = discretize_zoh(&ContinuousSSM::new(vec![a], vec![b], vec![1.0], 0.0, log_delta).unwrap());
        let a_bar = (log_delta.exp() * a).exp();
        let b_bar = (a_bar - 1.0) / a * b;
        zoh = zoh.max((d.a_bar[0] - a_bar).abs()).max((d.b_bar[0] - b_bar).abs());
    }
    ledger.record("5 zoh closed form", zoh < 1e-9, format!("max error {zoh:.2e} < 1e-9"));

    let (m, n, l) = (3, 4, 64);
    let b: Vec<f64> = (0..n).map(|_| r.random_range(-1.0..1.0)).collect();
    let c: Vec<f64> = (0..n).map(|_| r.random_range(-1.0..1.0)).collect();
    let a = DenseMatrix::from_fn(m, n, |_, _| -r.random_range(0.1..3.0));
    let skip: Vec<f64> = (0..m).map(|_| r.random_range(-1.0..1.0)).collect();
    let mut proj = SelectiveProjections::zeros(m, n);
    proj.delta.b = vec![-0.3; m];
    proj.b.b = b.clone();
    proj.c.b = c.clone();
    let seq = DenseMatrix::from_fn(l, m, |_, _| r.random_range(-1.0..1.0));
    let y = selective_scan(&proj, &a, &skip, &seq).unwrap();
    let delta = (1.0 + (-0.3f64).exp()).ln();
    let mut frozen: f64 = 0.0;
    for ch in 0..m {
        let d = frozen_equivalent(a.row(ch), &b, delta);
        let col: Vec<f64> = (0..l).map(|t| seq.get(t, ch)).collect();
        let expect = ssm_scan(&d, &c, skip[ch], &col).unwrap();
        for (t, e) in expect.iter().enumerate() {
            frozen = frozen.max((y.get(t, ch) - e).abs());
        }
    }
    ledger.record("5 frozen selective scan", frozen < 1e-9, format!("max error {frozen:.2e} < 1e-9"));

    let d = DiscreteSSM {
        a_bar: (0..n).map(|_| r.random_range(-0.95..0.95)).collect(),
        b_bar: (0..n).map(|_| r.random_range(-1.0..1.0)).collect(),
    };
    let input: Vec<f64> = (0..256).map(|_| r.random_range(-1.0..1.0)).collect();
    let scanned = ssm_scan(&d, &c, 0.4, &input).unwrap();
    let mut h = vec![0.0; n];
    let mut looped: f64 = 0.0;
    for (t, &x) in input.iter().enumerate() {
        let (next, y) = ssm_step(&h, x, &d, &c, 0.4).unwrap();
        h = next;
        looped = looped.max((scanned[t] - y).abs());
    }
    ledger.record("5 scan vs step loop", looped < 1e-12, format!("max error {looped:.2e} < 1e-12"));

    let cont = ContinuousSSM::new((1..=8).map(|i| -0.02 * i as f64).collect(), vec![1.0; 8], vec![1.0; 8], 1.0, 0.0).unwrap();
    let d = discretize_zoh(&cont);
    let long: Vec<f64> = (0..10_000).map(|_| r.random_range(-1.0..=1.0)).collect();
    let bound: f64 = d.a_bar.iter().zip(&d.b_bar).map(|(a, b)| b.abs() / (1.0 - a.abs())).sum::<f64>() + 1.0;
    let out = ssm_scan(&d, &cont.c, cont.d, &long).unwrap();
    let peak = out.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let selective = SelectiveSsm::init(4, 4, &mut r).forward(&DenseMatrix::from_fn(10_000, 4, |_, _| r.random_range(-1.0..1.0))).unwrap();
    let ok = out.iter().all(|v| v.is_finite()) && peak <= bound && selective.is_finite();
    ledger.record(
        "5 stability L=10000",
        ok,
        format!("time-invariant peak {peak:.3} ≤ {bound:.3}, selective output finite: {}", selective.is_finite()),
    );
}

fn trend_spec(head: HeadKind, seed: u64, dir: &std::path::Path) -> ExperimentSpec {
    let name = format!("{}-{seed}", head.as_str());
    let mut spec = ExperimentSpec {
        name: name.clone(),
        task: head.task(),
        out_dir: dir.join(name),
        master_seed: seed,
        ..ExperimentSpec::default()
    };
    spec.model.head = head;
    spec
}

fn trend_reproduction(ledger: &mut Ledger, dir: &std::path::Path) {
    let variants = [
        ("6a reconstruction encoder", HeadKind::Reconstruction, TrendLabel::ReconstructionShaped),
        ("6b classification encoder", HeadKind::FrameClassification, TrendLabel::MonotoneDecreasing),
        ("6c classification encoder+decoder", HeadKind::DecoderSeq2seq, TrendLabel::ReconstructionShaped),
    ];
    for (id, head, wanted) in variants {
        let start = Instant::now();
        let mut hits = 0;
        let mut seen = Vec::new();
        for seed in 0..5u64 {
            let out = run_experiment(&trend_spec(head, seed, dir)).unwrap();
            let side = out.report.side(Side::InputSide).unwrap();
            hits += (side.trend_label == wanted) as usize;
            println!("    {id} seed {seed}: {} log curve [{}]", side.trend_label.as_str(), fmt(&side.curve.log_values));
            seen.push(format!("{seed}:{}", side.trend_label.as_str()));
        }
        ledger.record(
            id,
            hits >= 3,
            format!(
                "{hits}/5 seeds {} (need 3) [{}] in {:.0}s",
                wanted.as_str(),
                seen.join(" "),
                start.elapsed().as_secs_f64()
            ),
        );
    }
}

fn determinism(ledger: &mut Ledger, dir: &std::path::Path) {
    let first = trend_spec(HeadKind::FrameClassification, 0, dir);
    let mut again = first.clone();
    again.out_dir = dir.join("rerun");
    run_experiment(&again).unwrap();
    let same = [CSV_FILE, REPORT_FILE].iter().all(|f| {
        std::fs::read(first.out_dir.join(f)).unwrap() == std::fs::read(again.out_dir.join(f)).unwrap()
    });
    ledger.record("7 determinism", same, format!("{CSV_FILE} and {REPORT_FILE} byte-identical on rerun: {same}"));
}

fn single_sample_identity(ledger: &mut Ledger) {
    let spec = ModelSpec::default();
    let data = gen_synthetic_dataset(&DataSpec { n_samples: 2, ..DataSpec::default() }, 3).unwrap();
    let model = Model::init(&spec, &mut rng(4)).unwrap();
    let cfg = ProbeConfig {
        n_samples: 1,
        sides: vec![Side::InputSide, Side::TargetSide],
        mine: MineConfig { batch_size: 64, train_steps: 80, eval_batches: 2, hidden: vec![16], learning_rate: 1e-3, ..MineConfig::default() },
        seed: 5,
        ..ProbeConfig::default()
    };
    let report = probe_layers(&model, &data, &cfg, "acceptance").unwrap();
    let mut worst: f64 = 0.0;
    for side in &report.sides {
        for (k, mean) in side.curve.per_layer_mean.iter().enumerate() {
            let raw = report
                .estimates
                .iter()
                .find(|e| e.side == side.side && e.layer_index == report.taps[k])
                .unwrap()
                .value_nats;
            worst = worst.max((mean - raw).abs());
        }
    }
    ledger.record("8 single-sample identity", worst <= 1e-12, format!("max |curve − raw| {worst:.1e} ≤ 1e-12"));
}

#[test]
fn acceptance() {
    let tmp = tempfile::tempdir().unwrap();
    let mut ledger = Ledger { lines: Vec::new() };
    gaussian_oracle(&mut ledger);
    independence_null(&mut ledger);
    discrete_ceiling(&mut ledger);
    gradient_correctness(&mut ledger);
    ssm_exactness(&mut ledger);
    single_sample_identity(&mut ledger);
    trend_reproduction(&mut ledger, tmp.path());
    determinism(&mut ledger, tmp.path());

    println!("\nsummary");
    for (_, line) in &ledger.lines {
        println!("{line}");
    }
    let failed: Vec<&str> = ledger.lines.iter().filter(|(ok, _)| !ok).map(|(_, l)| l.as_str()).collect();
    assert!(failed.is_empty(), "{} criteria failed:\n{}", failed.len(), failed.join("\n"));
}
