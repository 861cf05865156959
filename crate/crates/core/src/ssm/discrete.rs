use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Continuous-time diagonal state-space system
/// `h'(t) = A h(t) + B x(t)`, `y(t) = C h(t) + D x(t)` with step `Δ = exp(log_delta)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ContinuousSSM {
    pub a: Vec<f64>,
    pub b: Vec<f64>,
    pub c: Vec<f64>,
    pub d: f64,
    pub log_delta: f64,
}

impl ContinuousSSM {
    /// Validates shapes and stability (every `a` strictly negative).
    pub fn new(a: Vec<f64>, b: Vec<f64>, c: Vec<f64>, d: f64, log_delta: f64) -> Result<Self> {
        let n = a.len();
        if n == 0 {
            return Err(Error::Usage("state dimension must be positive".into()));
        }
        if b.len() != n || c.len() != n {
            return Err(Error::dimension(
                "ContinuousSSM B/C",
                n,
                format!("{}/{}", b.len(), c.len()),
            ));
        }
        if let Some(i) = a.iter().position(|&v| !(v < 0.0)) {
            return Err(Error::Usage(format!("A[{i}] = {} is not strictly negative", a[i])));
        }
        if !log_delta.is_finite() || !d.is_finite() || b.iter().chain(&c).any(|v| !v.is_finite()) {
            return Err(Error::numeric("ContinuousSSM::new", "non-finite parameter"));
        }
        Ok(Self { a, b, c, d, log_delta })
    }

    pub fn state_dim(&self) -> usize {
        self.a.len()
    }

    pub fn delta(&self) -> f64 {
        self.log_delta.exp()
    }
}

/// Discrete diagonal transition `h_t = Ā∘h_{t−1} + B̄·x_t`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiscreteSSM {
    pub a_bar: Vec<f64>,
    pub b_bar: Vec<f64>,
}

/// Zero-order hold for one diagonal entry: `Ā = e^{Δa}`,
/// `B̄ = ((e^{Δa} − 1)/a)·b`, with the limit `B̄ = Δ·b` at `a = 0`.
pub fn zoh_entry(a: f64, b: f64, delta: f64) -> (f64, f64) {
    let a_bar = (delta * a).exp();
    let b_bar = if a == 0.0 {
        delta * b
    } else {
        (delta * a).exp_m1() / a * b
    };
    (a_bar, b_bar)
}

pub fn discretize_zoh(cssm: &ContinuousSSM) -> DiscreteSSM {
    let delta = cssm.delta();
    let (a_bar, b_bar) = cssm
        .a
        .iter()
        .zip(&cssm.b)
        .map(|(&a, &b)| zoh_entry(a, b, delta))
        .unzip();
    DiscreteSSM { a_bar, b_bar }
}

fn check_discrete(d: &DiscreteSSM, c: &[f64], h_len: Option<usize>) -> Result<()> {
    let n = d.a_bar.len();
    if d.b_bar.len() != n {
        return Err(Error::dimension("DiscreteSSM B̄", n, d.b_bar.len()));
    }
    if c.len() != n {
        return Err(Error::dimension("SSM C", n, c.len()));
    }
    if let Some(h) = h_len {
        if h != n {
            return Err(Error::dimension("SSM state", n, h));
        }
    }
    Ok(())
}

/// One recurrence step: `h' = Ā∘h + B̄·x`, `y = ⟨C, h'⟩ + D·x`.
pub fn ssm_step(h: &[f64], x_t: f64, d: &DiscreteSSM, c: &[f64], skip: f64) -> Result<(Vec<f64>, f64)> {
    check_discrete(d, c, Some(h.len()))?;
    let h_next: Vec<f64> = h
        .iter()
        .zip(d.a_bar.iter().zip(&d.b_bar))
        .map(|(h, (a, b))| a * h + b * x_t)
        .collect();
    let y = h_next.iter().zip(c).map(|(h, c)| h * c).sum::<f64>() + skip * x_t;
    Ok((h_next, y))
}

/// Runs the recurrence from `h_0 = 0` over a scalar sequence.
pub fn ssm_scan(d: &DiscreteSSM, c: &[f64], skip: f64, sequence: &[f64]) -> Result<Vec<f64>> {
    check_discrete(d, c, None)?;
    let mut h = vec![0.0; d.a_bar.len()];
    let mut out = Vec::with_capacity(sequence.len());
    for &x in sequence {
        let mut y = skip * x;
        for n in 0..h.len() {
            h[n] = d.a_bar[n] * h[n] + d.b_bar[n] * x;
            y += c[n] * h[n];
        }
        out.push(y);
    }
    Ok(out)
}
