//! Grünwald–Letnikov discretization of `T D^α y + y = K u(t − L)`.

use super::{FoTransferFunction, TimeSeries};
use crate::error::{invalid, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GlOptions {
    /// Samples of history kept in the convolution; beyond this the
    /// short-memory principle applies (fixed trailing window).
    pub memory: usize,
}

impl Default for GlOptions {
    fn default() -> Self {
        Self { memory: 60_000 }
    }
}

/// Binomial weights `w_k = (−1)^k C(α, k)`.
fn weights(alpha: f64, n: usize) -> Vec<f64> {
    let mut w = Vec::with_capacity(n + 1);
    w.push(1.0);
    for k in 1..=n {
        let prev = w[k - 1];
        w.push(prev * (1.0 - (alpha + 1.0) / k as f64));
    }
    w
}

/// Step response of `g` to an input of height `step_amp` applied at `t = 0`,
/// sampled every `h` seconds up to `t_end`.
pub fn gl_step_response(
    g: &FoTransferFunction,
    step_amp: f64,
    h: f64,
    t_end: f64,
    opts: &GlOptions,
) -> Result<TimeSeries> {
    g.validate()?;
    if !(h > 0.0 && h.is_finite()) {
        return invalid(format!("step size must be positive, got {h}"));
    }
    if !(t_end >= 10.0 * h) {
        return invalid(format!("t_end {t_end} shorter than ten steps"));
    }
    if opts.memory == 0 {
        return invalid("GL memory must be at least one sample");
    }
    let n = (t_end / h).round() as usize;
    let lag = (g.delay / h).round() as usize;
    let mem = opts.memory.min(n);
    let w = weights(g.order, mem);
    let c = g.time_const * h.powf(-g.order);
    let drive = g.gain * step_amp;

    // Undelayed response z; y(t) = z(t − L).
    let mut z = vec![0.0; n + 1];
    for i in 1..=n {
        let span = i.min(mem);
        let hist: f64 = (1..=span).map(|k| w[k] * z[i - k]).sum();
        z[i] = (drive - c * hist) / (c + 1.0);
    }
    let values = (0..=n)
        .map(|i| if i >= lag { z[i - lag] } else { 0.0 })
        .collect();
    let times = (0..=n).map(|i| i as f64 * h).collect();
    Ok(TimeSeries { times, values })
}
