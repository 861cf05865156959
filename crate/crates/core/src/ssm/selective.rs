use rand::Rng;
use serde::{Deserialize, Serialize};

use super::discrete::DiscreteSSM;
use crate::error::{Error, Result};
use crate::nn::{Affine, DenseMatrix};

#[inline]
pub(crate) fn softplus(z: f64) -> f64 {
    if z > 30.0 {
        z
    } else {
        z.exp().ln_1p()
    }
}

#[inline]
pub(crate) fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// Input-dependent step sizes and input/output vectors.
///
/// For a frame `x_t` of width `M`: `Δ_t = softplus(W_Δ x_t + b_Δ)` (one step
/// per channel), `B_t = W_B x_t + b_B` and `C_t = W_C x_t + b_C` (shared
/// across channels, length `N`).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SelectiveProjections {
    pub delta: Affine,
    pub b: Affine,
    pub c: Affine,
}

impl SelectiveProjections {
    pub fn zeros(width: usize, state_dim: usize) -> Self {
        Self {
            delta: Affine::zeros(width, width),
            b: Affine::zeros(state_dim, width),
            c: Affine::zeros(state_dim, width),
        }
    }

    pub fn width(&self) -> usize {
        self.delta.in_dim()
    }

    pub fn state_dim(&self) -> usize {
        self.b.out_dim()
    }

    fn validate(&self) -> Result<()> {
        let (m, n) = (self.width(), self.state_dim());
        let ok = self.delta.w.shape() == (m, m)
            && self.delta.b.len() == m
            && self.b.w.shape() == (n, m)
            && self.b.b.len() == n
            && self.c.w.shape() == (n, m)
            && self.c.b.len() == n;
        if !ok {
            return Err(Error::dimension(
                "SelectiveProjections",
                format!("Δ {m}x{m}, B/C {n}x{m}"),
                format!(
                    "Δ {:?}, B {:?}, C {:?}",
                    self.delta.w.shape(),
                    self.b.w.shape(),
                    self.c.w.shape()
                ),
            ));
        }
        Ok(())
    }
}

/// `(Δ_t, B_t, C_t)` for a single frame.
pub fn selective_params(x_t: &[f64], proj: &SelectiveProjections) -> Result<(Vec<f64>, Vec<f64>, Vec<f64>)> {
    proj.validate()?;
    if x_t.len() != proj.width() {
        return Err(Error::dimension("selective_params frame width", proj.width(), x_t.len()));
    }
    let delta = proj.delta.apply_row(x_t).into_iter().map(softplus).collect();
    Ok((delta, proj.b.apply_row(x_t), proj.c.apply_row(x_t)))
}

/// A selective SSM over `M` channels with `N` states per channel.
///
/// `A = −exp(a_log)` keeps every diagonal entry strictly negative.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SelectiveSsm {
    pub proj: SelectiveProjections,
    /// `M × N`.
    pub a_log: DenseMatrix,
    /// Per-channel skip coefficient.
    pub d: Vec<f64>,
}

/// Everything the backward pass needs from one forward scan.
#[derive(Debug, Clone)]
pub struct ScanCache {
    u: DenseMatrix,
    z_delta: DenseMatrix,
    delta: DenseMatrix,
    b: DenseMatrix,
    c: DenseMatrix,
    /// `A` materialized, `M × N`.
    a: Vec<f64>,
    /// `L × M × N` post-update states.
    hs: Vec<f64>,
    /// `L × M × N` per-step decays `exp(Δ_t a)`.
    decay: Vec<f64>,
}

impl SelectiveSsm {
    pub fn zeros(width: usize, state_dim: usize) -> Self {
        Self {
            proj: SelectiveProjections::zeros(width, state_dim),
            a_log: DenseMatrix::zeros(width, state_dim),
            d: vec![0.0; width],
        }
    }

    /// Real diagonal initialization `A_n = −(n+1)`, step sizes log-uniform
    /// in `[1e-3, 1e-1]`, unit skip.
    pub fn init(width: usize, state_dim: usize, rng: &mut impl Rng) -> Self {
        let mut s = Self::zeros(width, state_dim);
        s.a_log = DenseMatrix::from_fn(width, state_dim, |_, n| ((n + 1) as f64).ln());
        s.proj.delta = Affine::init(width, width, 0.1, rng);
        for b in s.proj.delta.b.iter_mut() {
            let dt = (rng.random_range(1e-3f64.ln()..1e-1f64.ln())).exp();
            // inverse softplus
            *b = dt + (-(-dt).exp_m1()).ln();
        }
        s.proj.b = Affine::init(state_dim, width, 1.0, rng);
        s.proj.c = Affine::init(state_dim, width, 1.0, rng);
        s.d = vec![1.0; width];
        s
    }

    pub fn width(&self) -> usize {
        self.proj.width()
    }

    pub fn state_dim(&self) -> usize {
        self.proj.state_dim()
    }

    pub fn a_matrix(&self) -> DenseMatrix {
        let mut a = self.a_log.clone();
        a.data_mut().iter_mut().for_each(|v| *v = -v.exp());
        a
    }

    pub fn zeros_like(&self) -> Self {
        Self::zeros(self.width(), self.state_dim())
    }

    pub fn forward(&self, u: &DenseMatrix) -> Result<DenseMatrix> {
        Ok(self.forward_cached(u)?.0)
    }

    pub fn forward_cached(&self, u: &DenseMatrix) -> Result<(DenseMatrix, ScanCache)> {
        scan_cached(&self.proj, &self.a_matrix(), &self.d, u)
    }

    /// Accumulates parameter gradients into `grads`; returns `∂/∂u`.
    pub fn backward(&self, cache: &ScanCache, gy: &DenseMatrix, grads: &mut SelectiveSsm) -> DenseMatrix {
        let (l, m, n) = (cache.u.rows(), self.width(), self.state_dim());
        let u = &cache.u;
        let mut gu = DenseMatrix::zeros(l, m);
        let mut g_delta = DenseMatrix::zeros(l, m);
        let mut g_b = DenseMatrix::zeros(l, n);
        let mut g_c = DenseMatrix::zeros(l, n);
        let mut g_a = vec![0.0; m * n];
        let mut gh = vec![0.0; m * n];

        for t in (0..l).rev() {
            let h_t = &cache.hs[t * m * n..(t + 1) * m * n];
            let h_prev = if t > 0 {
                Some(&cache.hs[(t - 1) * m * n..t * m * n])
            } else {
                None
            };
            let dec = &cache.decay[t * m * n..(t + 1) * m * n];
            let b_t = cache.b.row(t);
            let c_t = cache.c.row(t);
            for ch in 0..m {
                let gy_tc = gy.get(t, ch);
                let u_tc = u.get(t, ch);
                let dt = cache.delta.get(t, ch);
                grads.d[ch] += gy_tc * u_tc;
                let mut gu_acc = gy_tc * self.d[ch];
                let mut gdt_acc = 0.0;
                for s in 0..n {
                    let k = ch * n + s;
                    let mut g = gh[k] + gy_tc * c_t[s];
                    g_c.data_mut()[t * n + s] += gy_tc * h_t[k];
                    let hp = h_prev.map_or(0.0, |h| h[k]);
                    let g_dec = g * hp * dec[k];
                    gdt_acc += g_dec * cache.a[k] + g * b_t[s] * u_tc;
                    g_a[k] += g_dec * dt;
                    g_b.data_mut()[t * n + s] += g * dt * u_tc;
                    gu_acc += g * dt * b_t[s];
                    g *= dec[k];
                    gh[k] = g;
                }
                g_delta.set(t, ch, gdt_acc);
                gu.data_mut()[t * m + ch] += gu_acc;
            }
        }

        // A = −exp(a_log) ⇒ ∂A/∂a_log = A
        for (k, g) in grads.a_log.data_mut().iter_mut().enumerate() {
            *g += g_a[k] * cache.a[k];
        }
        let mut g_z = g_delta;
        for (g, z) in g_z.data_mut().iter_mut().zip(cache.z_delta.data()) {
            *g *= sigmoid(*z);
        }
        let gu_d = self.proj.delta.backward(u, &g_z, &mut grads.proj.delta);
        let gu_b = self.proj.b.backward(u, &g_b, &mut grads.proj.b);
        let gu_c = self.proj.c.backward(u, &g_c, &mut grads.proj.c);
        gu.add_assign(&gu_d);
        gu.add_assign(&gu_b);
        gu.add_assign(&gu_c);
        gu
    }

    pub(crate) fn push_tensors<'a>(&'a self, out: &mut Vec<&'a [f64]>) {
        self.proj.delta.push_tensors(out);
        self.proj.b.push_tensors(out);
        self.proj.c.push_tensors(out);
        out.push(self.a_log.data());
        out.push(&self.d);
    }

    pub(crate) fn push_tensors_mut<'a>(&'a mut self, out: &mut Vec<&'a mut [f64]>) {
        self.proj.delta.push_tensors_mut(out);
        self.proj.b.push_tensors_mut(out);
        self.proj.c.push_tensors_mut(out);
        out.push(self.a_log.data_mut());
        out.push(&mut self.d);
    }
}

/// Names matching the order of `push_tensors`.
pub(crate) const SSM_TENSOR_NAMES: [&str; 8] = [
    "delta.w", "delta.b", "b.w", "b.b", "c.w", "c.b", "a_log", "d",
];

/// Selective scan with input-dependent `(Δ_t, B_t, C_t)`.
///
/// Per channel `c` and state `n`:
/// `h_t = exp(Δ_t a) h_{t−1} + Δ_t B_t u_t`, `y_t = ⟨C_t, h_t⟩ + D u_t`.
/// `a` holds the (negative) diagonal entries of `A` as an `M × N` matrix.
pub fn selective_scan(proj: &SelectiveProjections, a: &DenseMatrix, skip: &[f64], sequence: &DenseMatrix) -> Result<DenseMatrix> {
    Ok(scan_cached(proj, a, skip, sequence)?.0)
}

fn scan_cached(proj: &SelectiveProjections, a: &DenseMatrix, skip: &[f64], u: &DenseMatrix) -> Result<(DenseMatrix, ScanCache)> {
    proj.validate()?;
    let (m, n) = (proj.width(), proj.state_dim());
    if u.cols() != m {
        return Err(Error::dimension("selective_scan frame width", m, u.cols()));
    }
    if u.rows() == 0 {
        return Err(Error::Usage("selective_scan needs at least one frame".into()));
    }
    if a.shape() != (m, n) {
        return Err(Error::dimension("selective_scan A", format!("{m}x{n}"), format!("{:?}", a.shape())));
    }
    if skip.len() != m {
        return Err(Error::dimension("selective_scan D", m, skip.len()));
    }
    let l = u.rows();
    let z_delta = proj.delta.forward(u);
    let mut delta = z_delta.clone();
    delta.data_mut().iter_mut().for_each(|v| *v = softplus(*v));
    let b = proj.b.forward(u);
    let c = proj.c.forward(u);

    let a = a.data().to_vec();
    let mut hs = vec![0.0; l * m * n];
    let mut decay = vec![0.0; l * m * n];
    let mut h = vec![0.0; m * n];
    let mut y = DenseMatrix::zeros(l, m);
    for t in 0..l {
        let b_t = b.row(t);
        let c_t = c.row(t);
        let base = t * m * n;
        let mut norm = 0.0;
        for ch in 0..m {
            let dt = delta.get(t, ch);
            let u_tc = u.get(t, ch);
            let mut acc = skip[ch] * u_tc;
            for s in 0..n {
                let k = ch * n + s;
                let dk = (dt * a[k]).exp();
                h[k] = dk * h[k] + dt * b_t[s] * u_tc;
                acc += c_t[s] * h[k];
                decay[base + k] = dk;
                norm += h[k].abs();
            }
            y.set(t, ch, acc);
        }
        if !norm.is_finite() {
            return Err(Error::numeric("selective_scan", format!("non-finite state at step {t}")));
        }
        hs[base..base + m * n].copy_from_slice(&h);
    }
    if !y.is_finite() {
        return Err(Error::numeric("selective_scan", "non-finite output"));
    }
    let cache = ScanCache {
        u: u.clone(),
        z_delta,
        delta,
        b,
        c,
        a,
        hs,
        decay,
    };
    Ok((y, cache))
}

/// The time-invariant system a selective scan reduces to when `(Δ, B, C)`
/// are constant: `Ā = exp(Δ a)`, `B̄ = Δ·B` (Euler input term).
pub fn frozen_equivalent(a: &[f64], b: &[f64], delta: f64) -> DiscreteSSM {
    DiscreteSSM {
        a_bar: a.iter().map(|&a| (delta * a).exp()).collect(),
        b_bar: b.iter().map(|&b| delta * b).collect(),
    }
}
