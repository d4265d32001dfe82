//! Step-response identification of FOPDT models.
//!
//! Each input-output pair is fitted on its own. The step model
//! `y(t) = y₀ + K·a·f_α((t − L)/τ)`, with `f_α` the normalized step
//! response of `1/(s^α + 1)` and `τ = T^{1/α}`, is linear in `(y₀, K)`, so
//! those two are solved exactly for every candidate `(α, τ, L)`. The order is
//! scanned on a grid and then polished by golden section; `τ` by a
//! log-spaced scan plus golden section; `L` by whole-sample shifts.

mod experiment;
pub(crate) mod master;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::foc::FoTransferFunction;
use crate::optim::golden;

pub use experiment::{
    design_experiment, identify_plant, record_step, validate_mimo, ExcitationSchedule,
    IdentifiedPlant, Segment, SegmentKind, StepDataset,
};

/// `100·(1 − ‖y − ŷ‖ / ‖y − ȳ‖)`.
pub fn fit_percent(y: &[f64], y_hat: &[f64]) -> Result<f64> {
    if y.is_empty() || y.len() != y_hat.len() {
        return Err(Error::InvalidArgument(format!(
            "series lengths {} and {} must match and be nonzero",
            y.len(),
            y_hat.len()
        )));
    }
    let mean = y.iter().sum::<f64>() / y.len() as f64;
    let spread: f64 = y.iter().map(|v| (v - mean).powi(2)).sum::<f64>().sqrt();
    if spread == 0.0 {
        return Err(Error::UndefinedFit("reference series is constant".into()));
    }
    let err: f64 = y
        .iter()
        .zip(y_hat)
        .map(|(a, b)| (a - b).powi(2))
        .sum::<f64>()
        .sqrt();
    Ok(100.0 * (1.0 - err / spread))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IdentifiedModel {
    pub model: FoTransferFunction,
    /// Pre-step level the model was fitted around, °C.
    pub baseline: f64,
    /// `NaN` for degenerate (flat) records.
    pub fit_percent: f64,
    pub residual_rms: f64,
    /// The response was flat; `model.gain` is zero.
    pub degenerate: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FitOptions {
    pub alpha_grid: Vec<f64>,
    /// Largest dead time tried, in samples.
    pub max_delay_samples: usize,
    /// Polish α beyond the grid.
    pub refine_alpha: bool,
    /// Responses whose net change is at most this many °C count as flat.
    pub flat_tol: f64,
    /// Allowed drift over the last 10% of the record, relative to the net change.
    pub settle_band: f64,
}

impl Default for FitOptions {
    fn default() -> Self {
        Self {
            alpha_grid: (1..=30).map(|k| k as f64 * 0.05).collect(),
            max_delay_samples: 0,
            refine_alpha: true,
            flat_tol: 1e-9,
            settle_band: 0.02,
        }
    }
}

impl FitOptions {
    /// Settings for records carrying white noise of standard deviation `sigma`.
    pub fn for_noise(sigma: f64) -> Self {
        Self {
            flat_tol: (3.0 * sigma).max(1e-9),
            ..Self::default()
        }
    }
}

/// Uniform spacing of `times`, which must start at 0.
fn sample_period(times: &[f64]) -> Result<f64> {
    if times.len() < 20 {
        return Err(Error::InvalidArgument(format!(
            "need at least 20 samples, got {}",
            times.len()
        )));
    }
    if times[0] != 0.0 {
        return Err(Error::InvalidArgument("time axis must start at 0".into()));
    }
    if times.windows(2).any(|w| !(w[1] > w[0])) {
        return Err(Error::InvalidArgument("time axis must be strictly increasing".into()));
    }
    Ok(times[times.len() - 1] / (times.len() - 1) as f64)
}

/// Least-squares line through `(t, y)`: returns `(slope, residual σ, Σ(t − t̄)²)`.
fn trend(t: &[f64], y: &[f64]) -> (f64, f64, f64) {
    let n = t.len() as f64;
    let tm = t.iter().sum::<f64>() / n;
    let ym = y.iter().sum::<f64>() / n;
    let sxx: f64 = t.iter().map(|v| (v - tm).powi(2)).sum();
    let sxy: f64 = t.iter().zip(y).map(|(a, b)| (a - tm) * (b - ym)).sum();
    let slope = if sxx > 0.0 { sxy / sxx } else { 0.0 };
    let ss: f64 = t
        .iter()
        .zip(y)
        .map(|(a, b)| (b - ym - slope * (a - tm)).powi(2))
        .sum();
    let sigma = if t.len() > 2 { (ss / (n - 2.0)).sqrt() } else { 0.0 };
    (slope, sigma, sxx)
}

struct Candidate {
    sse: f64,
    alpha: f64,
    ln_tau: f64,
    delay: usize,
    gain: f64,
    offset: f64,
}

struct Problem<'a> {
    times: &'a [f64],
    y: &'a [f64],
    amp: f64,
    h: f64,
}

impl Problem<'_> {
    /// Best `(y₀, K)` for a fixed shape; returns `(sse, K, y₀)`.
    fn solve(&self, curve: &master::MasterCurve, ln_tau: f64, delay: usize) -> (f64, f64, f64) {
        let inv_tau = (-ln_tau).exp();
        let lag = delay as f64 * self.h;
        let n = self.y.len() as f64;
        let (mut sb, mut sbb, mut sy, mut sby, mut syy) = (0.0, 0.0, 0.0, 0.0, 0.0);
        for (&t, &y) in self.times.iter().zip(self.y) {
            let b = self.amp * curve.eval((t - lag) * inv_tau);
            sb += b;
            sbb += b * b;
            sy += y;
            sby += b * y;
            syy += y * y;
        }
        let det = n * sbb - sb * sb;
        if det.abs() <= 1e-300 {
            let y0 = sy / n;
            return (syy - n * y0 * y0, 0.0, y0);
        }
        let k = (n * sby - sb * sy) / det;
        let y0 = (sy - k * sb) / n;
        // ‖y − y₀ − k b‖² expanded
        let sse = syy - 2.0 * y0 * sy - 2.0 * k * sby + n * y0 * y0 + 2.0 * y0 * k * sb + k * k * sbb;
        (sse.max(0.0), k, y0)
    }

    fn best_tau(&self, alpha: f64, delay: usize) -> Candidate {
        let curve = master::curve(alpha);
        let t_end = self.times[self.times.len() - 1];
        let (lo, hi) = ((self.h / 10.0).ln(), (10.0 * t_end).ln());
        let scan = 48;
        let grid: Vec<f64> = (0..=scan)
            .map(|k| lo + (hi - lo) * k as f64 / scan as f64)
            .collect();
        let sse: Vec<f64> = grid.iter().map(|&u| self.solve(&curve, u, delay).0).collect();
        let best = (0..=scan).min_by(|&a, &b| sse[a].total_cmp(&sse[b])).unwrap();
        let a = grid[best.saturating_sub(1)];
        let b = grid[(best + 1).min(scan)];
        let ln_tau = golden(a, b, 1e-7, |u| self.solve(&curve, u, delay).0);
        let (sse, gain, offset) = self.solve(&curve, ln_tau, delay);
        Candidate {
            sse,
            alpha,
            ln_tau,
            delay,
            gain,
            offset,
        }
    }
}

/// Fits an FOPDT model to a step response recorded from `t = 0` with input height `input_amp`.
pub fn fit_fopdt(
    times: &[f64],
    input_amp: f64,
    response: &[f64],
    opts: &FitOptions,
) -> Result<IdentifiedModel> {
    if input_amp == 0.0 || !input_amp.is_finite() {
        return Err(Error::InvalidArgument("input amplitude must be nonzero".into()));
    }
    if times.len() != response.len() {
        return Err(Error::InvalidArgument("times and response lengths differ".into()));
    }
    if response.iter().any(|v| !v.is_finite()) {
        return Err(Error::InvalidArgument("response has non-finite samples".into()));
    }
    if opts.alpha_grid.is_empty() || opts.alpha_grid.iter().any(|&a| !(a > 0.0 && a <= 1.5)) {
        return Err(Error::InvalidArgument("alpha grid must be nonempty within (0, 1.5]".into()));
    }
    let h = sample_period(times)?;
    let n = response.len();
    let tail = (n / 10).max(3);
    let (tt, ty) = (&times[n - tail..], &response[n - tail..]);
    let y_end = ty.iter().sum::<f64>() / tail as f64;
    let delta = y_end - response[0];

    if delta.abs() <= opts.flat_tol {
        let baseline = response.iter().sum::<f64>() / n as f64;
        let rms = (response.iter().map(|v| (v - baseline).powi(2)).sum::<f64>() / n as f64).sqrt();
        return Ok(IdentifiedModel {
            model: FoTransferFunction {
                gain: 0.0,
                time_const: 1.0,
                order: 1.0,
                delay: 0.0,
            },
            baseline,
            fit_percent: f64::NAN,
            residual_rms: rms,
            degenerate: true,
        });
    }

    let (slope, sigma, sxx) = trend(tt, ty);
    let window = tt[tail - 1] - tt[0];
    let drift = slope * window;
    let drift_se = if sxx > 0.0 { sigma * window / sxx.sqrt() } else { 0.0 };
    if drift.abs() > opts.settle_band * delta.abs() + 3.0 * drift_se {
        return Err(Error::NotSettled(format!(
            "drift {drift:.4} over the last 10% exceeds {:.0}% of the net change {delta:.4}",
            opts.settle_band * 100.0
        )));
    }

    let problem = Problem {
        times,
        y: response,
        amp: input_amp,
        h,
    };
    let mut best: Option<Candidate> = None;
    for delay in 0..=opts.max_delay_samples.min(n / 2) {
        for &alpha in &opts.alpha_grid {
            let c = problem.best_tau(alpha, delay);
            if best.as_ref().is_none_or(|b| c.sse < b.sse) {
                best = Some(c);
            }
        }
    }
    let mut best = best.expect("grid is nonempty");

    if opts.refine_alpha {
        let step = grid_step(&opts.alpha_grid, best.alpha);
        let lo = (best.alpha - step).max(0.01);
        let hi = (best.alpha + step).min(1.5);
        let delay = best.delay;
        let alpha = golden(lo, hi, 1e-5, |a| problem.best_tau(a, delay).sse);
        let c = problem.best_tau(alpha, delay);
        if c.sse < best.sse {
            best = c;
        }
    }

    let tau = best.ln_tau.exp();
    let model = FoTransferFunction {
        gain: best.gain,
        time_const: tau.powf(best.alpha),
        order: best.alpha,
        delay: best.delay as f64 * h,
    };
    let curve = master::curve(best.alpha);
    let y_hat: Vec<f64> = times
        .iter()
        .map(|&t| best.offset + best.gain * input_amp * curve.eval((t - model.delay) / tau))
        .collect();
    Ok(IdentifiedModel {
        model,
        baseline: best.offset,
        fit_percent: fit_percent(response, &y_hat)?,
        residual_rms: (best.sse / n as f64).sqrt(),
        degenerate: false,
    })
}

/// Spacing of the grid around `alpha`, used as the refinement bracket.
fn grid_step(grid: &[f64], alpha: f64) -> f64 {
    let mut sorted = grid.to_vec();
    sorted.sort_by(f64::total_cmp);
    let gaps: Vec<f64> = sorted.windows(2).map(|w| w[1] - w[0]).collect();
    let i = sorted.partition_point(|&a| a < alpha);
    let left = i.checked_sub(1).and_then(|k| gaps.get(k)).copied();
    let right = gaps.get(i).copied();
    left.into_iter().chain(right).fold(0.0, f64::max).max(0.01)
}

/// Models fitted at several excitation amplitudes for one channel.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlantFamily {
    pub members: Vec<FoTransferFunction>,
    pub amplitudes: Vec<f64>,
}

/// Elementwise parameter bounds over a family.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ParamEnvelope {
    pub gain: (f64, f64),
    pub time_const: (f64, f64),
    pub order: (f64, f64),
}

impl PlantFamily {
    pub fn new(members: Vec<FoTransferFunction>, amplitudes: Vec<f64>) -> Result<Self> {
        if members.is_empty() {
            return Err(Error::InvalidArgument("family needs at least one member".into()));
        }
        if members.len() != amplitudes.len() {
            return Err(Error::InvalidArgument("one amplitude per member required".into()));
        }
        for m in &members {
            m.validate()?;
        }
        Ok(Self {
            members,
            amplitudes,
        })
    }

    pub fn envelope(&self) -> ParamEnvelope {
        let span = |f: fn(&FoTransferFunction) -> f64| {
            self.members
                .iter()
                .map(f)
                .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| (lo.min(v), hi.max(v)))
        };
        ParamEnvelope {
            gain: span(|g| g.gain),
            time_const: span(|g| g.time_const),
            order: span(|g| g.order),
        }
    }
}

/// Fits one member per amplitude from `(amplitude, times, response)` records.
pub fn build_family(records: &[(f64, &[f64], &[f64])], opts: &FitOptions) -> Result<PlantFamily> {
    if records.len() < 2 {
        return Err(Error::InvalidArgument("a family needs at least two amplitudes".into()));
    }
    let mut members = Vec::with_capacity(records.len());
    for &(amp, times, response) in records {
        let fit = fit_fopdt(times, amp, response, opts)?;
        if fit.degenerate {
            return Err(Error::UndefinedFit(format!("flat response at amplitude {amp}")));
        }
        members.push(fit.model);
    }
    PlantFamily::new(members, records.iter().map(|r| r.0).collect())
}
