//! ITAE-optimal PI tuning under frequency-domain specifications.
//!
//! Gains are expressed in the plant's own input units, so a loop on a plant
//! driven in normalized units has normalized gains. Frequency quantities are
//! computed from the exact fractional-order response; the ITAE is simulated
//! on the rationalized closed loop.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::foc::{itae, realize, FoTransferFunction, MarginReport, RationalizeOptions, StateSpace};
use crate::optim::{halton_2d, nelder_mead};
use crate::plant::PlantMatrix;

/// `C(s) = K + I/s`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PiGains {
    pub prop_k: f64,
    pub integ_i: f64,
}

impl PiGains {
    pub fn new(prop_k: f64, integ_i: f64) -> Result<Self> {
        let g = Self { prop_k, integ_i };
        g.validate()?;
        Ok(g)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.prop_k > 0.0 && self.prop_k.is_finite() && self.integ_i > 0.0 && self.integ_i.is_finite()) {
            return invalid(format!(
                "PI gains must be positive and finite, got K={} I={}",
                self.prop_k, self.integ_i
            ));
        }
        Ok(())
    }

    /// Integral time `T_i = K / I`.
    pub fn integral_time(&self) -> f64 {
        self.prop_k / self.integ_i
    }

    pub fn scaled(&self, factor: f64) -> Self {
        Self {
            prop_k: self.prop_k * factor,
            integ_i: self.integ_i * factor,
        }
    }

    pub fn eval(&self, omega: f64) -> Complex64 {
        Complex64::new(self.prop_k, -self.integ_i / omega)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TuningSpec {
    pub pm_range_deg: [f64; 2],
    /// Only the lower end is enforced; an infinite margin passes.
    pub gm_range_db: [f64; 2],
    /// Crossover target in rad/s; `None` leaves it free.
    pub w_c: Option<f64>,
    /// Allowed `|d arg L / d log10 ω|` at crossover, degrees per decade.
    pub flat_phase_tol: f64,
    pub hf_noise_bound_db: f64,
    pub w_b: f64,
    pub dist_rej_bound_db: f64,
    pub w_a: f64,
    pub itae_horizon: f64,
    pub itae_step: f64,
    pub seed: u64,
    pub starts: usize,
    pub max_iter: usize,
}

impl Default for TuningSpec {
    fn default() -> Self {
        Self {
            pm_range_deg: [60.0, 65.0],
            gm_range_db: [10.0, 15.0],
            w_c: None,
            flat_phase_tol: 5.0,
            hf_noise_bound_db: -20.0,
            w_b: 10.0,
            dist_rej_bound_db: -20.0,
            w_a: 1e-3,
            itae_horizon: 600.0,
            itae_step: 1.0,
            seed: 7,
            starts: 8,
            max_iter: 400,
        }
    }
}

impl TuningSpec {
    pub fn validate(&self) -> Result<()> {
        let [lo, hi] = self.pm_range_deg;
        if !(lo > 0.0 && hi < 90.0 && lo <= hi) {
            return invalid(format!("phase-margin range [{lo}, {hi}] must lie inside (0, 90)"));
        }
        let [glo, ghi] = self.gm_range_db;
        if !(glo.is_finite() && ghi.is_finite() && glo <= ghi) {
            return invalid(format!("gain-margin range [{glo}, {ghi}] is not a finite interval"));
        }
        if let Some(w) = self.w_c {
            if !(w > 0.0 && w.is_finite()) {
                return invalid(format!("crossover target must be positive, got {w}"));
            }
        }
        let finite = [self.flat_phase_tol, self.hf_noise_bound_db, self.dist_rej_bound_db];
        if finite.iter().any(|v| !v.is_finite()) || self.flat_phase_tol <= 0.0 {
            return invalid("specification bounds must be finite");
        }
        for (name, w) in [("w_a", self.w_a), ("w_b", self.w_b)] {
            if !(w > 0.0 && w.is_finite()) {
                return invalid(format!("{name} must be positive, got {w}"));
            }
        }
        if !(self.itae_horizon > 0.0 && self.itae_horizon.is_finite()) {
            return invalid("ITAE horizon must be positive");
        }
        if !(self.itae_step != 0.0 && self.itae_step.is_finite()) {
            return invalid("ITAE step must be nonzero");
        }
        if self.starts == 0 || self.max_iter == 0 {
            return invalid("need at least one start and one iteration");
        }
        Ok(())
    }
}

/// One multistart initial point as evaluated before descent.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StartPoint {
    pub gains: PiGains,
    pub itae_value: f64,
    pub feasible: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TuneResult {
    pub gains: PiGains,
    pub achieved: MarginReport,
    /// `d arg L / d log10 ω` at crossover, degrees per decade.
    pub flat_phase_slope: f64,
    /// `|T(j w_b)|` in dB.
    pub t_peak_hf_db: f64,
    /// `|S(j w_a)|` in dB.
    pub s_db_at_wa: f64,
    pub itae_value: f64,
    pub closed_loop_stable: bool,
    pub feasible: bool,
    /// Simplex iterations summed over all starts; 0 for verification.
    pub iterations: usize,
    /// Human-readable list of violated specifications.
    pub violations: Vec<String>,
    pub starts: Vec<StartPoint>,
}

/// Constraints are met when every violation is below this (degrees, dB or
/// percent of crossover).
pub const FEASIBILITY_TOL: f64 = 1e-3;
const PENALTY_WEIGHT: f64 = 1e4;
const SHRINK: f64 = 0.02;
const ITAE_STEPS: usize = 4000;
const SEARCH_LO: f64 = 1e-9;
const SEARCH_HI: f64 = 1e9;

fn check_plant(g: &FoTransferFunction) -> Result<()> {
    g.validate()?;
    if !(g.gain > 0.0) {
        return Err(Error::Unsupported(format!(
            "PI tuning needs a positive plant gain, got {}",
            g.gain
        )));
    }
    Ok(())
}

struct Loop<'a> {
    g: &'a FoTransferFunction,
    c: PiGains,
}

impl Loop<'_> {
    fn eval(&self, w: f64) -> Complex64 {
        self.c.eval(w) * self.g.eval(w)
    }

    fn phase(&self, w: f64) -> f64 {
        -(self.c.integ_i / (self.c.prop_k * w)).atan() + self.g.phase(w)
    }

    fn log_scan(&self, pred: impl Fn(f64) -> bool, from_top: bool) -> Option<(f64, f64)> {
        let per_decade = 20;
        let n = ((SEARCH_HI / SEARCH_LO).log10() * per_decade as f64).round() as usize;
        let w = |k: usize| SEARCH_LO * 10f64.powf(k as f64 / per_decade as f64);
        let idx: Box<dyn Iterator<Item = usize>> = if from_top {
            Box::new((0..n).rev())
        } else {
            Box::new(0..n)
        };
        for k in idx {
            if pred(w(k)) != pred(w(k + 1)) {
                let (mut a, mut b) = (w(k).ln(), w(k + 1).ln());
                let left = pred(a.exp());
                for _ in 0..200 {
                    let m = 0.5 * (a + b);
                    if pred(m.exp()) == left {
                        a = m;
                    } else {
                        b = m;
                    }
                    if b - a < 1e-14 {
                        break;
                    }
                }
                return Some((a.exp(), b.exp()));
            }
        }
        None
    }

    /// Highest frequency where `|L|` falls through 0 dB.
    fn crossover(&self) -> Result<f64> {
        self.log_scan(|w| self.eval(w).norm() >= 1.0, true)
            .map(|(a, b)| (a * b).sqrt())
            .ok_or(Error::NoCrossover)
    }

    fn margins(&self) -> Result<MarginReport> {
        let wc = self.crossover()?;
        let pi = std::f64::consts::PI;
        let phase_margin_deg = (pi + self.phase(wc)).to_degrees();
        let (gain_margin_db, phase_crossover_w) = match self.log_scan(|w| self.phase(w) <= -pi, false) {
            Some((a, b)) => {
                let wp = (a * b).sqrt();
                (-20.0 * self.eval(wp).norm().log10(), Some(wp))
            }
            None => (f64::INFINITY, None),
        };
        Ok(MarginReport {
            phase_margin_deg,
            gain_margin_db,
            gain_crossover_w: wc,
            phase_crossover_w,
        })
    }

    fn flat_slope(&self, wc: f64) -> f64 {
        let (lo, hi) = (0.98 * wc, 1.02 * wc);
        (self.phase(hi) - self.phase(lo)).to_degrees() / (hi / lo).log10()
    }
}

/// Plant, PI and integrator closed around unity feedback; the output is the
/// tracking error for a reference input.
fn error_system(plant: &StateSpace, c: PiGains) -> StateSpace {
    let n = plant.states();
    let (k, i) = (c.prop_k, c.integ_i);
    let den = 1.0 + k * plant.d;
    // u = a_x·x + a_z·z + a_r·r
    let a_x = &plant.c * (-k / den);
    let a_z = i / den;
    let a_r = k / den;
    let mut a = DMatrix::zeros(n + 1, n + 1);
    a.view_mut((0, 0), (n, n))
        .copy_from(&(&plant.a + &plant.b * a_x.transpose()));
    a.view_mut((0, n), (n, 1)).copy_from(&(&plant.b * a_z));
    let c_err = -(&plant.c + &a_x * plant.d);
    for j in 0..n {
        a[(n, j)] = c_err[j];
    }
    a[(n, n)] = -plant.d * a_z;
    let mut b = DVector::zeros(n + 1);
    b.rows_mut(0, n).copy_from(&(&plant.b * a_r));
    let d = 1.0 - plant.d * a_r;
    b[n] = d;
    let mut cv = DVector::zeros(n + 1);
    cv.rows_mut(0, n).copy_from(&c_err);
    cv[n] = -plant.d * a_z;
    StateSpace { a, b, c: cv, d }
}

struct Evaluation {
    margins: Option<MarginReport>,
    slope: f64,
    t_db: f64,
    s_db: f64,
    itae: f64,
    stable: bool,
    /// `(name, amount)` against the given bounds.
    violations: Vec<(&'static str, f64)>,
}

struct Evaluator<'a> {
    g: &'a FoTransferFunction,
    plant: StateSpace,
    spec: &'a TuningSpec,
}

impl<'a> Evaluator<'a> {
    fn new(g: &'a FoTransferFunction, spec: &'a TuningSpec) -> Result<Self> {
        check_plant(g)?;
        spec.validate()?;
        Ok(Self {
            g,
            plant: realize(g, &RationalizeOptions::default())?,
            spec,
        })
    }

    fn itae(&self, c: PiGains) -> Result<(f64, bool)> {
        let sys = error_system(&self.plant, c);
        let max_re = sys
            .a
            .complex_eigenvalues()
            .iter()
            .map(|l| l.re)
            .fold(f64::NEG_INFINITY, f64::max);
        if !(max_re < 0.0) {
            return Ok((f64::INFINITY, false));
        }
        let h = self.spec.itae_horizon / ITAE_STEPS as f64;
        let resp = sys.step_response(self.spec.itae_step, h, self.spec.itae_horizon)?;
        Ok((itae(&resp.values, &resp.times)?, true))
    }

    /// `margin` shrinks every bound inward so that penalized optima land
    /// strictly inside the feasible set.
    fn evaluate(&self, c: PiGains, margin: f64) -> Result<Evaluation> {
        let spec = self.spec;
        let lp = Loop { g: self.g, c };
        let margins = lp.margins().ok();
        let mut violations = Vec::new();
        let mut slope = f64::NAN;
        match margins {
            Some(m) => {
                let [lo, hi] = spec.pm_range_deg;
                let pm_margin = margin.min((hi - lo) / 4.0);
                let pm = m.phase_margin_deg;
                violations.push(("phase margin", (lo + pm_margin - pm).max(pm - hi + pm_margin).max(0.0)));
                violations.push(("gain margin", (spec.gm_range_db[0] + margin - m.gain_margin_db).max(0.0)));
                if let Some(target) = spec.w_c {
                    violations.push(("crossover", 100.0 * (m.gain_crossover_w / target).ln().abs()));
                }
                slope = lp.flat_slope(m.gain_crossover_w);
                violations.push(("flat phase", (slope.abs() - spec.flat_phase_tol + margin).max(0.0)));
            }
            None => violations.push(("crossover", 1e3)),
        }
        let sens = |w: f64| {
            let l = lp.eval(w);
            (20.0 * (1.0 / (1.0 + l)).norm().log10(), 20.0 * (l / (1.0 + l)).norm().log10())
        };
        let t_db = sens(spec.w_b).1;
        let s_db = sens(spec.w_a).0;
        violations.push(("noise rejection", (t_db - spec.hf_noise_bound_db + margin).max(0.0)));
        violations.push(("disturbance rejection", (s_db - spec.dist_rej_bound_db + margin).max(0.0)));
        let (itae, stable) = self.itae(c)?;
        Ok(Evaluation {
            margins,
            slope,
            t_db,
            s_db,
            itae,
            stable,
            violations,
        })
    }

    fn objective(&self, c: PiGains) -> f64 {
        let e = match self.evaluate(c, SHRINK) {
            Ok(e) => e,
            Err(_) => return 1e12,
        };
        let penalty: f64 = e.violations.iter().map(|(_, v)| v * v).sum::<f64>() * PENALTY_WEIGHT;
        if !e.stable {
            return 1e8 + penalty;
        }
        let h = self.spec.itae_horizon;
        e.itae / (self.spec.itae_step.abs() * h * h / 2.0) + penalty
    }

    fn report(&self, c: PiGains) -> Result<TuneResult> {
        let e = self.evaluate(c, 0.0)?;
        let violations: Vec<String> = e
            .violations
            .iter()
            .filter(|(_, v)| *v > FEASIBILITY_TOL)
            .map(|(name, v)| format!("{name} off by {v:.4}"))
            .chain((!e.stable).then(|| "closed loop unstable".to_string()))
            .collect();
        let achieved = e.margins.unwrap_or(MarginReport {
            phase_margin_deg: f64::NAN,
            gain_margin_db: f64::NAN,
            gain_crossover_w: f64::NAN,
            phase_crossover_w: None,
        });
        Ok(TuneResult {
            gains: c,
            achieved,
            flat_phase_slope: e.slope,
            t_peak_hf_db: e.t_db,
            s_db_at_wa: e.s_db,
            itae_value: e.itae,
            closed_loop_stable: e.stable,
            feasible: violations.is_empty(),
            iterations: 0,
            violations,
            starts: Vec::new(),
        })
    }
}

/// Evaluates every specification for fixed gains.
pub fn verify_spec(plant: &FoTransferFunction, gains: PiGains, spec: &TuningSpec) -> Result<TuneResult> {
    gains.validate()?;
    Evaluator::new(plant, spec)?.report(gains)
}

/// Multistart simplex search in `(ln K, ln I)` for the ITAE-optimal gains
/// under quadratic exterior penalties. Start boxes scale with `1/K_plant` so
/// the search is invariant to the plant gain.
pub fn tune_pi(plant: &FoTransferFunction, spec: &TuningSpec) -> Result<TuneResult> {
    let ev = Evaluator::new(plant, spec)?;
    let scale = plant.gain.ln();
    let (k_lo, k_hi) = (0.1f64.ln() - scale, 1e3f64.ln() - scale);
    let (i_lo, i_hi) = (0.01f64.ln() - scale, 1e2f64.ln() - scale);
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let shift = [rng.gen::<f64>(), rng.gen::<f64>()];
    let gains_at = |x: &[f64]| PiGains {
        prop_k: x[0].exp(),
        integ_i: x[1].exp(),
    };
    let mut f = |x: &[f64]| {
        if x.iter().any(|v| !v.is_finite() || v.abs() > 60.0) {
            return 1e12;
        }
        ev.objective(gains_at(x))
    };

    let mut starts = Vec::with_capacity(spec.starts);
    let mut best: Option<(f64, bool, Vec<f64>)> = None;
    let mut iterations = 0;
    let consider = |x: Vec<f64>, value: f64, feasible: bool, itae: f64, best: &mut Option<(f64, bool, Vec<f64>)>| {
        // feasible candidates win on ITAE, otherwise on penalized objective
        let key = if feasible { itae } else { value };
        let better = match best {
            None => true,
            Some((bk, bf, _)) => (feasible && !*bf) || (feasible == *bf && key < *bk),
        };
        if better {
            *best = Some((key, feasible, x));
        }
    };
    for u in halton_2d(spec.starts, shift) {
        let x0 = vec![k_lo + u[0] * (k_hi - k_lo), i_lo + u[1] * (i_hi - i_lo)];
        let start = ev.report(gains_at(&x0))?;
        starts.push(StartPoint {
            gains: start.gains,
            itae_value: start.itae_value,
            feasible: start.feasible,
        });
        let v0 = f(&x0);
        consider(x0.clone(), v0, start.feasible, start.itae_value, &mut best);
        let r = nelder_mead(&mut f, &x0, 0.5, spec.max_iter, 1e-6);
        iterations += r.iterations;
        let end = ev.report(gains_at(&r.x))?;
        consider(r.x, r.value, end.feasible, end.itae_value, &mut best);
    }
    let (_, _, x) = best.expect("at least one start");
    let mut out = ev.report(gains_at(&x))?;
    out.iterations = iterations;
    out.starts = starts;
    Ok(out)
}

/// Tunes every diagonal element independently; failures stay per channel.
pub fn tune_diagonal(diagonal: &[FoTransferFunction], spec: &TuningSpec) -> Vec<Result<TuneResult>> {
    diagonal.iter().map(|g| tune_pi(g, spec)).collect()
}

pub fn tune_all(plant: &PlantMatrix, spec: &TuningSpec) -> Vec<Result<TuneResult>> {
    tune_diagonal(&plant.diagonal(), spec)
}
