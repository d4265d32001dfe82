use serde::{Deserialize, Serialize};

use super::FrequencyResponse;
use crate::error::{Error, Result};

/// Classical stability margins of an open loop `L(jω)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MarginReport {
    pub phase_margin_deg: f64,
    /// `f64::INFINITY` when the phase never reaches −180°.
    pub gain_margin_db: f64,
    pub gain_crossover_w: f64,
    pub phase_crossover_w: Option<f64>,
}

fn unwrap_deg(values: &[num_complex::Complex64]) -> Vec<f64> {
    let mut out = Vec::with_capacity(values.len());
    let mut prev = values[0].arg().to_degrees();
    out.push(prev);
    for v in &values[1..] {
        let mut p = v.arg().to_degrees();
        while p - prev > 180.0 {
            p -= 360.0;
        }
        while p - prev < -180.0 {
            p += 360.0;
        }
        out.push(p);
        prev = p;
    }
    out
}

fn wrap_deg(mut d: f64) -> f64 {
    while d > 180.0 {
        d -= 360.0;
    }
    while d <= -180.0 {
        d += 360.0;
    }
    d
}

/// Gain/phase margins from a sampled open loop. Interpolation is linear in
/// dB and degrees against `log ω`.
pub fn margins(open_loop: &FrequencyResponse) -> Result<MarginReport> {
    let w = open_loop.omegas();
    let vals = open_loop.values();
    if w.len() < 2 {
        return Err(Error::NoCrossover);
    }
    let db: Vec<f64> = vals.iter().map(|v| 20.0 * v.norm().log10()).collect();
    let ph = unwrap_deg(vals);
    let lw: Vec<f64> = w.iter().map(|w| w.ln()).collect();

    let cross = (0..w.len() - 1)
        .find(|&i| db[i] >= 0.0 && db[i + 1] < 0.0)
        .or_else(|| (0..w.len() - 1).find(|&i| db[i] < 0.0 && db[i + 1] >= 0.0))
        .ok_or(Error::NoCrossover)?;
    let f = db[cross] / (db[cross] - db[cross + 1]);
    let wc = (lw[cross] + f * (lw[cross + 1] - lw[cross])).exp();
    let phase_c = ph[cross] + f * (ph[cross + 1] - ph[cross]);

    let mut gm = f64::INFINITY;
    let mut wp = None;
    for i in 0..w.len() - 1 {
        let (g0, g1) = (ph[i] + 180.0, ph[i + 1] + 180.0);
        let target = 360.0 * (g0.max(g1) / 360.0).floor();
        if g0 == g1 || target < g0.min(g1) {
            continue;
        }
        let f = (target - g0) / (g1 - g0);
        wp = Some((lw[i] + f * (lw[i + 1] - lw[i])).exp());
        gm = -(db[i] + f * (db[i + 1] - db[i]));
        break;
    }

    Ok(MarginReport {
        phase_margin_deg: wrap_deg(180.0 + phase_c),
        gain_margin_db: gm,
        gain_crossover_w: wc,
        phase_crossover_w: wp,
    })
}
