//! Fixed-step simulation of the full plant.

use nalgebra::DVector;

use super::{PlantMatrix, AMBIENT, TEMP_MAX, TEMP_MIN};
use crate::error::{Error, Result};
use crate::foc::{realize, DiscreteStateSpace, RationalizeOptions};
use crate::CHANNELS;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SimOptions {
    pub rationalize: RationalizeOptions,
    pub ambient: f64,
    /// Largest accepted |drive|, normalized units.
    pub drive_limit: f64,
}

/// Ladder used for simulation: denser and reaching lower than the analysis
/// default, so that slow half-order tails stay within 0.03% of the exact
/// step response over hour-long records.
pub const SIM_RATIONALIZE: RationalizeOptions = RationalizeOptions {
    band: (1e-6, 1e2),
    cells: 7,
    pade_order: 2,
};

impl Default for SimOptions {
    fn default() -> Self {
        Self {
            rationalize: SIM_RATIONALIZE,
            ambient: AMBIENT,
            drive_limit: 80.0,
        }
    }
}

#[derive(Debug, Clone)]
struct Element {
    out: usize,
    inp: usize,
    sys: DiscreteStateSpace,
}

/// Every nonzero element of a [`PlantMatrix`], discretized at one step size.
#[derive(Debug, Clone)]
pub struct DiscretePlant {
    h: f64,
    opts: SimOptions,
    elements: Vec<Element>,
}

/// Internal states of all elements plus the clock.
#[derive(Debug, Clone, PartialEq)]
pub struct PlantState {
    states: Vec<DVector<f64>>,
    pub ambient: f64,
    pub sim_time: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepOutput {
    /// True surface temperatures at the end of the step, °C.
    pub temps: [f64; CHANNELS],
    /// Channels whose temperature hit the physical clamp.
    pub clamped: [bool; CHANNELS],
}

impl StepOutput {
    pub fn any_clamped(&self) -> bool {
        self.clamped.iter().any(|&c| c)
    }
}

impl DiscretePlant {
    pub fn new(plant: &PlantMatrix, h: f64, opts: SimOptions) -> Result<Self> {
        if !(0.01..=2.0).contains(&h) {
            return Err(Error::InvalidArgument(format!("step {h} s outside [0.01, 2]")));
        }
        if !(opts.drive_limit > 0.0) {
            return Err(Error::InvalidArgument("drive_limit must be > 0".into()));
        }
        let mut elements = Vec::new();
        for i in 0..CHANNELS {
            for j in 0..CHANNELS {
                let g = plant.element(i, j);
                if g.gain == 0.0 {
                    continue;
                }
                let sys = realize(g, &opts.rationalize)?.discretize(h)?;
                elements.push(Element { out: i, inp: j, sys });
            }
        }
        Ok(Self { h, opts, elements })
    }

    pub fn step_size(&self) -> f64 {
        self.h
    }

    pub fn options(&self) -> &SimOptions {
        &self.opts
    }

    /// Zero state at `t = 0`.
    pub fn initial_state(&self) -> PlantState {
        PlantState {
            states: self
                .elements
                .iter()
                .map(|e| DVector::zeros(e.sys.states()))
                .collect(),
            ambient: self.opts.ambient,
            sim_time: 0.0,
        }
    }

    /// Advances one step with `drive` held constant over it.
    pub fn step(&self, state: &mut PlantState, drive: &[f64; CHANNELS]) -> Result<StepOutput> {
        for (j, u) in drive.iter().enumerate() {
            if !u.is_finite() {
                return Err(Error::InvalidArgument(format!("drive {j} is not finite")));
            }
            if u.abs() > self.opts.drive_limit {
                return Err(Error::InvalidArgument(format!(
                    "drive {j} = {u} exceeds limit {}",
                    self.opts.drive_limit
                )));
            }
        }
        let mut rise = [0.0; CHANNELS];
        for (e, x) in self.elements.iter().zip(state.states.iter_mut()) {
            let u = drive[e.inp];
            let mut next = e.sys.gamma.clone() * u;
            next.gemv(1.0, &e.sys.phi, x, 1.0);
            *x = next;
            rise[e.out] += e.sys.c.dot(x) + e.sys.d * u;
        }
        state.sim_time += self.h;
        let mut temps = [0.0; CHANNELS];
        let mut clamped = [false; CHANNELS];
        for i in 0..CHANNELS {
            let raw = state.ambient + rise[i];
            temps[i] = raw.clamp(TEMP_MIN, TEMP_MAX);
            clamped[i] = temps[i] != raw;
        }
        Ok(StepOutput { temps, clamped })
    }

    /// Runs `steps` steps with a drive supplied per step; returns temperatures after each.
    pub fn run(
        &self,
        state: &mut PlantState,
        steps: usize,
        mut drive: impl FnMut(usize) -> [f64; CHANNELS],
    ) -> Result<Vec<[f64; CHANNELS]>> {
        (0..steps)
            .map(|k| self.step(state, &drive(k)).map(|o| o.temps))
            .collect()
    }
}
