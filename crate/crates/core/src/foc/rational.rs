//! Rational approximations of fractional operators.

use num_complex::Complex64;

use super::{poly, FoTransferFunction, FrequencyResponse, DEFAULT_BAND, DEFAULT_CELLS};
use crate::error::{invalid, Result};

/// `num(s) / den(s)`, coefficients in descending powers of `s`.
#[derive(Debug, Clone, PartialEq)]
pub struct RationalTf {
    num: Vec<f64>,
    den: Vec<f64>,
}

impl RationalTf {
    pub fn new(num: Vec<f64>, den: Vec<f64>) -> Result<Self> {
        if num.is_empty() || den.is_empty() {
            return invalid("empty polynomial");
        }
        let num = poly::trim(&num);
        let den = poly::trim(&den);
        if den[0] == 0.0 {
            return invalid("denominator is identically zero");
        }
        if num.len() > den.len() {
            return invalid(format!(
                "improper transfer function: degree {} over degree {}",
                num.len() - 1,
                den.len() - 1
            ));
        }
        if num.iter().chain(&den).any(|c| !c.is_finite()) {
            return invalid("non-finite coefficient");
        }
        Ok(Self { num, den })
    }

    pub fn num(&self) -> &[f64] {
        &self.num
    }

    pub fn den(&self) -> &[f64] {
        &self.den
    }

    pub fn order(&self) -> usize {
        self.den.len() - 1
    }

    pub fn eval(&self, omega: f64) -> Complex64 {
        let s = Complex64::new(0.0, omega);
        poly::eval(&self.num, s) / poly::eval(&self.den, s)
    }

    pub fn dc_gain(&self) -> f64 {
        self.num[self.num.len() - 1] / self.den[self.den.len() - 1]
    }

    pub fn freq_response(&self, omegas: &[f64]) -> Result<FrequencyResponse> {
        FrequencyResponse::from_fn(omegas, |w| self.eval(w))
    }
}

/// Recursive pole/zero distribution approximating `s^β` on `[w_b, w_h]`:
/// `w_h^β ∏_{k=-N}^{N} (s + ω'_k) / (s + ω_k)`.
#[derive(Debug, Clone, PartialEq)]
pub struct OustaloupLadder {
    pub gain: f64,
    /// Negated zeros, ascending.
    pub zeros: Vec<f64>,
    /// Negated poles, ascending.
    pub poles: Vec<f64>,
}

impl OustaloupLadder {
    pub fn new(beta: f64, band: (f64, f64), cells: usize) -> Result<Self> {
        check_band(band, cells)?;
        let (wb, wh) = band;
        let ratio = wh / wb;
        let pairs = 2 * cells + 1;
        let mut zeros = Vec::with_capacity(pairs);
        let mut poles = Vec::with_capacity(pairs);
        for k in 0..pairs {
            let base = k as f64;
            zeros.push(wb * ratio.powf((base + 0.5 * (1.0 - beta)) / pairs as f64));
            poles.push(wb * ratio.powf((base + 0.5 * (1.0 + beta)) / pairs as f64));
        }
        Ok(Self {
            gain: wh.powf(beta),
            zeros,
            poles,
        })
    }

    pub fn eval(&self, omega: f64) -> Complex64 {
        let s = Complex64::new(0.0, omega);
        self.zeros
            .iter()
            .zip(&self.poles)
            .fold(Complex64::new(self.gain, 0.0), |acc, (z, p)| acc * (s + z) / (s + p))
    }

    pub fn num(&self) -> Vec<f64> {
        poly::scale(&poly::from_negated_roots(&self.zeros), self.gain)
    }

    pub fn den(&self) -> Vec<f64> {
        poly::from_negated_roots(&self.poles)
    }
}

fn check_band(band: (f64, f64), cells: usize) -> Result<()> {
    let (wb, wh) = band;
    if !(wb > 0.0 && wh > wb && wh.is_finite()) {
        return invalid(format!("band [{wb}, {wh}] must satisfy 0 < w_b < w_h"));
    }
    if !(1..=20).contains(&cells) {
        return invalid(format!("cell count {cells} outside 1..=20"));
    }
    Ok(())
}

/// Band-limited rational approximation of `s^α`.
///
/// The integer part `m = round(α)` is kept exact and only the remainder
/// `α − m ∈ [−½, ½]` goes through the ladder, which keeps the phase ripple
/// well inside the band for orders close to one. Positive integer powers get
/// a roll-off pole at `100·w_h` each so the result stays proper.
pub fn oustaloup_approx(alpha: f64, band: (f64, f64), cells: usize) -> Result<RationalTf> {
    if !(alpha.abs() <= 1.5) {
        return invalid(format!("|alpha| must be <= 1.5, got {alpha}"));
    }
    let m = alpha.round();
    let ladder = OustaloupLadder::new(alpha - m, band, cells)?;
    let mut num = ladder.num();
    let mut den = ladder.den();
    let rolloff = [1.0 / (100.0 * band.1), 1.0];
    for _ in 0..(m.max(0.0) as usize) {
        num = poly::mul(&num, &[1.0, 0.0]);
        den = poly::mul(&den, &rolloff);
    }
    for _ in 0..((-m).max(0.0) as usize) {
        den = poly::mul(&den, &[1.0, 0.0]);
    }
    RationalTf::new(num, den)
}

/// Padé approximation of `e^{-Ls}` as `(num, den)`.
pub fn pade(delay: f64, order: usize) -> (Vec<f64>, Vec<f64>) {
    if order == 0 || delay == 0.0 {
        return (vec![1.0], vec![1.0]);
    }
    let n = order;
    // c_k = (2n-k)! n! / ((2n)! k! (n-k)!), built incrementally.
    let mut c = vec![1.0; n + 1];
    for k in 1..=n {
        c[k] = c[k - 1] * ((n - k + 1) as f64) / (((2 * n - k + 1) * k) as f64);
    }
    let mut num = vec![0.0; n + 1];
    let mut den = vec![0.0; n + 1];
    for k in 0..=n {
        let term = c[k] * delay.powi(k as i32);
        den[n - k] = term;
        num[n - k] = if k % 2 == 0 { term } else { -term };
    }
    (num, den)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RationalizeOptions {
    pub band: (f64, f64),
    pub cells: usize,
    /// Padé order used for dead time; 0 drops the delay.
    pub pade_order: usize,
}

impl Default for RationalizeOptions {
    fn default() -> Self {
        Self {
            band: DEFAULT_BAND,
            cells: DEFAULT_CELLS,
            pade_order: 2,
        }
    }
}

/// Rational stand-in for an FOPDT element.
///
/// `s^α` is replaced by `s · O_{α−1}(s)`, with `O` the Oustaloup ladder of the
/// (negative) order `α − 1`. The explicit zero at the origin keeps the DC
/// gain of the result equal to `K`; orders of exactly one pass through.
pub fn rationalize(g: &FoTransferFunction, opts: &RationalizeOptions) -> Result<RationalTf> {
    g.validate()?;
    check_band(opts.band, opts.cells)?;
    let (mut num, mut den) = if is_integer_order(g.order) {
        (vec![g.gain], vec![g.time_const, 1.0])
    } else {
        let ladder = OustaloupLadder::new(g.order - 1.0, opts.band, opts.cells)?;
        let n = ladder.num();
        let d = ladder.den();
        let h_num = poly::mul(&n, &[1.0, 0.0]);
        let den = poly::add(&poly::scale(&h_num, g.time_const), &d);
        (poly::scale(&d, g.gain), den)
    };
    if g.delay > 0.0 && opts.pade_order > 0 {
        let (pn, pd) = pade(g.delay, opts.pade_order);
        num = poly::mul(&num, &pn);
        den = poly::mul(&den, &pd);
    }
    RationalTf::new(num, den)
}

pub(crate) fn is_integer_order(alpha: f64) -> bool {
    (alpha - 1.0).abs() < 1e-12
}
