//! Fractional-order transfer-function algebra.
//!
//! Every plant element is a fractional-order-plus-dead-time (FOPDT) model
//! `G(s) = K / (T s^α + 1) · e^{-Ls}`. This module evaluates its frequency
//! response, builds band-limited rational approximations (Oustaloup ladders),
//! realizes them as well-conditioned state-space blocks, and provides two
//! independent time-domain references: Grünwald–Letnikov convolution and the
//! Mittag-Leffler closed form.

mod gl;
mod itae;
mod margins;
pub mod mittag_leffler;
mod poly;
mod rational;
mod statespace;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};

pub use gl::{gl_step_response, GlOptions};
pub use itae::itae;
pub use margins::{margins, MarginReport};
pub use rational::{
    oustaloup_approx, pade, rationalize, OustaloupLadder, RationalTf, RationalizeOptions,
};
pub use statespace::{realize, DiscreteStateSpace, StateSpace};

/// Default Oustaloup band used for rationalization, rad/s.
pub const DEFAULT_BAND: (f64, f64) = (1e-5, 1e3);
/// Default Oustaloup order (the ladder has `2N + 1` pole/zero pairs).
pub const DEFAULT_CELLS: usize = 5;
/// Default frequency-grid density.
pub const POINTS_PER_DECADE: usize = 60;

/// `K / (T s^α + 1) · e^{-Ls}`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FoTransferFunction {
    /// Output units per unit of input at DC.
    pub gain: f64,
    /// `T`, in s^α.
    pub time_const: f64,
    /// Fractional order α of the denominator.
    pub order: f64,
    /// Dead time `L` in seconds.
    pub delay: f64,
}

impl FoTransferFunction {
    pub fn new(gain: f64, time_const: f64, order: f64, delay: f64) -> Result<Self> {
        let g = Self {
            gain,
            time_const,
            order,
            delay,
        };
        g.validate()?;
        Ok(g)
    }

    /// Delay-free element; the common case for the diagonal models.
    pub fn fopdt(gain: f64, time_const: f64, order: f64) -> Result<Self> {
        Self::new(gain, time_const, order, 0.0)
    }

    pub fn validate(&self) -> Result<()> {
        if !self.gain.is_finite() {
            return invalid(format!("gain must be finite, got {}", self.gain));
        }
        if !(self.time_const > 0.0 && self.time_const.is_finite()) {
            return invalid(format!("time constant must be > 0, got {}", self.time_const));
        }
        if !(self.order > 0.0 && self.order <= 1.5) {
            return invalid(format!("order must lie in (0, 1.5], got {}", self.order));
        }
        if !(self.delay >= 0.0 && self.delay.is_finite()) {
            return invalid(format!("delay must be >= 0, got {}", self.delay));
        }
        Ok(())
    }

    /// Characteristic time `T^{1/α}` in seconds.
    pub fn time_scale(&self) -> f64 {
        self.time_const.powf(1.0 / self.order)
    }

    /// Same dynamics with the gain multiplied by `factor`.
    pub fn scaled(&self, factor: f64) -> Self {
        Self {
            gain: self.gain * factor,
            ..*self
        }
    }

    /// `G(jω)` using `(jω)^α = ω^α e^{jαπ/2}`.
    pub fn eval(&self, omega: f64) -> Complex64 {
        let jw_alpha = Complex64::from_polar(omega.powf(self.order), self.order * std::f64::consts::FRAC_PI_2);
        let delay = Complex64::from_polar(1.0, -omega * self.delay);
        self.gain * delay / (self.time_const * jw_alpha + 1.0)
    }

    /// Continuous (unwrapped) phase of `G(jω)` in radians.
    pub fn phase(&self, omega: f64) -> f64 {
        let half = self.order * std::f64::consts::FRAC_PI_2;
        let m = self.time_const * omega.powf(self.order);
        let den = (m * half.sin()).atan2(1.0 + m * half.cos());
        let sign = if self.gain < 0.0 { -std::f64::consts::PI } else { 0.0 };
        sign - den - omega * self.delay
    }
}

/// Sampled complex frequency response on a strictly increasing grid.
#[derive(Debug, Clone, PartialEq)]
pub struct FrequencyResponse {
    omegas: Vec<f64>,
    values: Vec<Complex64>,
}

impl FrequencyResponse {
    pub fn new(omegas: Vec<f64>, values: Vec<Complex64>) -> Result<Self> {
        if omegas.is_empty() {
            return invalid("empty frequency grid");
        }
        if omegas.len() != values.len() {
            return invalid(format!(
                "grid has {} points but {} values",
                omegas.len(),
                values.len()
            ));
        }
        check_grid(&omegas)?;
        Ok(Self { omegas, values })
    }

    /// Samples an arbitrary response function on `omegas`.
    pub fn from_fn(omegas: &[f64], f: impl Fn(f64) -> Complex64) -> Result<Self> {
        check_grid(omegas)?;
        let values = omegas.iter().map(|&w| f(w)).collect();
        Ok(Self {
            omegas: omegas.to_vec(),
            values,
        })
    }

    pub fn omegas(&self) -> &[f64] {
        &self.omegas
    }

    pub fn values(&self) -> &[Complex64] {
        &self.values
    }

    pub fn len(&self) -> usize {
        self.omegas.len()
    }

    pub fn is_empty(&self) -> bool {
        self.omegas.is_empty()
    }

    /// Pointwise product, e.g. controller × plant.
    pub fn mul(&self, other: &FrequencyResponse) -> Result<Self> {
        if self.omegas != other.omegas {
            return invalid("frequency grids differ");
        }
        let values = self
            .values
            .iter()
            .zip(&other.values)
            .map(|(a, b)| a * b)
            .collect();
        Ok(Self {
            omegas: self.omegas.clone(),
            values,
        })
    }
}

fn check_grid(omegas: &[f64]) -> Result<()> {
    if omegas.is_empty() {
        return invalid("empty frequency grid");
    }
    if omegas[0] <= 0.0 || !omegas[0].is_finite() {
        return invalid("frequencies must be positive");
    }
    if omegas.windows(2).any(|w| !(w[1] > w[0])) {
        return invalid("frequencies must be strictly increasing");
    }
    Ok(())
}

/// `freq_response(g, omegas)`.
pub fn freq_response(g: &FoTransferFunction, omegas: &[f64]) -> Result<FrequencyResponse> {
    FrequencyResponse::from_fn(omegas, |w| g.eval(w))
}

/// Log-spaced grid from `lo` to `hi` inclusive with `per_decade` points per decade.
pub fn log_grid(lo: f64, hi: f64, per_decade: usize) -> Result<Vec<f64>> {
    if !(lo > 0.0 && hi > lo) || per_decade == 0 {
        return invalid(format!("bad grid [{lo}, {hi}] at {per_decade}/decade"));
    }
    let decades = (hi / lo).log10();
    let n = (decades * per_decade as f64).ceil().max(1.0) as usize;
    let step = decades / n as f64;
    Ok((0..=n)
        .map(|k| lo * 10f64.powf(step * k as f64))
        .collect())
}

/// Uniformly sampled signal starting at `t = 0`.
#[derive(Debug, Clone, PartialEq)]
pub struct TimeSeries {
    pub times: Vec<f64>,
    pub values: Vec<f64>,
}

impl TimeSeries {
    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn last(&self) -> Option<f64> {
        self.values.last().copied()
    }

    /// Value at the sample nearest to `t`.
    pub fn at(&self, t: f64) -> f64 {
        if self.times.len() < 2 {
            return self.values[0];
        }
        let h = self.times[1] - self.times[0];
        let k = ((t / h).round() as usize).min(self.values.len() - 1);
        self.values[k]
    }
}
