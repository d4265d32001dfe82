//! Tabulated unit step responses `1 − E_α(−τ^α)` over normalized time.
//!
//! Fitting evaluates the model millions of times; a table in `ln τ` with
//! cubic interpolation is far cheaper than the inversion integral and
//! shared across fits of the same order.

use std::collections::HashMap;
use std::sync::{Arc, Mutex, OnceLock};

use crate::foc::mittag_leffler::unit_step;

const LN_LO: f64 = -20.723_265_836_946_41; // ln 1e-9
const LN_HI: f64 = 20.723_265_836_946_41; // ln 1e9
const PER_DECADE: f64 = 64.0;

#[derive(Debug)]
pub(crate) struct MasterCurve {
    alpha: f64,
    du: f64,
    values: Vec<f64>,
}

impl MasterCurve {
    fn build(alpha: f64) -> Self {
        let du = std::f64::consts::LN_10 / PER_DECADE;
        let n = ((LN_HI - LN_LO) / du).round() as usize;
        let values = (0..=n)
            .map(|k| unit_step(alpha, (LN_LO + k as f64 * du).exp()))
            .collect();
        Self { alpha, du, values }
    }

    /// Step response at normalized time `tau`.
    pub(crate) fn eval(&self, tau: f64) -> f64 {
        if tau <= 0.0 {
            return 0.0;
        }
        let u = tau.ln();
        let last = self.values.len() - 1;
        if u <= LN_LO {
            // f ∝ τ^α near the origin
            return self.values[0] * (self.alpha * (u - LN_LO)).exp();
        }
        if u >= LN_HI {
            // 1 − f ∝ τ^{−α} in the tail
            return 1.0 - (1.0 - self.values[last]) * (-self.alpha * (u - LN_HI)).exp();
        }
        let x = (u - LN_LO) / self.du;
        let i = (x.floor() as usize).min(last - 1);
        let f = x - i as f64;
        let p1 = self.values[i];
        let p2 = self.values[i + 1];
        let p0 = if i > 0 { self.values[i - 1] } else { 2.0 * p1 - p2 };
        let p3 = if i + 2 <= last { self.values[i + 2] } else { 2.0 * p2 - p1 };
        // Catmull–Rom
        let a = -0.5 * p0 + 1.5 * p1 - 1.5 * p2 + 0.5 * p3;
        let b = p0 - 2.5 * p1 + 2.0 * p2 - 0.5 * p3;
        let c = -0.5 * p0 + 0.5 * p2;
        ((a * f + b) * f + c) * f + p1
    }
}

type Cache = Mutex<HashMap<i64, Arc<MasterCurve>>>;

/// Shared curve for order `alpha`, built on first use.
pub(crate) fn curve(alpha: f64) -> Arc<MasterCurve> {
    static CACHE: OnceLock<Cache> = OnceLock::new();
    let key = (alpha * 1e9).round() as i64;
    let cache = CACHE.get_or_init(Default::default);
    if let Some(c) = cache.lock().unwrap().get(&key) {
        return c.clone();
    }
    let built = Arc::new(MasterCurve::build(key as f64 * 1e-9));
    cache.lock().unwrap().entry(key).or_insert(built).clone()
}
