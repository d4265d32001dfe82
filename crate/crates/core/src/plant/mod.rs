//! The 16×16 MIMO thermal plant.
//!
//! Output `i` (the camera point over Peltier `i`) responds to every input `j`
//! through its own FOPDT element `G_ij`; temperatures are the ambient plus the
//! superposition of all element outputs. Only the diagonal of the bench model
//! is known, so couplings are synthesized from grid distance.

pub mod bench;
mod fault;
mod sensor;
mod sim;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::foc::FoTransferFunction;
use crate::{CHANNELS, GRID_SIDE};

pub use fault::{AllChannels, FaultKind, FaultSet, FaultSpec, FaultTarget};
pub use sensor::{anchor_pixel, render_image, Camera, SensorModel, ThermalFrame, IMAGE_HEIGHT, IMAGE_WIDTH};
pub use sim::{DiscretePlant, PlantState, SimOptions, StepOutput, SIM_RATIONALIZE};

/// Physical temperature range of the Peltier surface, °C.
pub const TEMP_MIN: f64 = 15.0;
pub const TEMP_MAX: f64 = 100.0;
/// Default ambient temperature, °C.
pub const AMBIENT: f64 = 20.0;

/// Row-major grid position of a channel.
pub fn grid_position(index: usize) -> (usize, usize) {
    (index / GRID_SIDE, index % GRID_SIDE)
}

pub fn grid_index(row: usize, col: usize) -> usize {
    row * GRID_SIDE + col
}

/// Chebyshev distance between two channels on the grid.
pub fn grid_distance(a: usize, b: usize) -> usize {
    let (ra, ca) = grid_position(a);
    let (rb, cb) = grid_position(b);
    ra.abs_diff(rb).max(ca.abs_diff(cb))
}

/// Distance-based synthesis of the off-diagonal elements.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CouplingConfig {
    /// Gain attenuation per unit of grid distance.
    pub kappa: f64,
    /// Relative time-constant stretch per unit of distance.
    pub tau_growth: f64,
    /// Dead time added per unit of distance, seconds.
    pub lag_per_dist: f64,
}

impl Default for CouplingConfig {
    fn default() -> Self {
        Self {
            kappa: 0.02,
            tau_growth: 0.5,
            lag_per_dist: 2.0,
        }
    }
}

impl CouplingConfig {
    pub fn decoupled() -> Self {
        Self {
            kappa: 0.0,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(0.0..=0.1).contains(&self.kappa) {
            return Err(Error::InvalidConfig(format!(
                "kappa {} outside [0, 0.1]",
                self.kappa
            )));
        }
        if !(self.tau_growth >= 0.0 && self.tau_growth.is_finite()) {
            return Err(Error::InvalidConfig("tau_growth must be >= 0".into()));
        }
        if !(self.lag_per_dist >= 0.0 && self.lag_per_dist.is_finite()) {
            return Err(Error::InvalidConfig("lag_per_dist must be >= 0".into()));
        }
        Ok(())
    }

    /// Element `G_ij` for output `i` driven by input `j`: the input's own
    /// dynamics attenuated by `kappa^d`, slowed by `1 + tau_growth·d` and
    /// delayed by `lag_per_dist·d`.
    pub fn element(
        &self,
        diag: &[FoTransferFunction; CHANNELS],
        i: usize,
        j: usize,
    ) -> FoTransferFunction {
        if i == j {
            return diag[i];
        }
        let d = grid_distance(i, j) as f64;
        let src = diag[j];
        FoTransferFunction {
            gain: self.kappa.powf(d) * src.gain,
            time_const: src.time_const * (1.0 + self.tau_growth * d),
            order: src.order,
            delay: self.lag_per_dist * d,
        }
    }
}

/// `Y(s) = G(s) U(s)` with `G` 16×16.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlantMatrix {
    /// Row-major: `elements[i * 16 + j] = G_ij`.
    elements: Vec<FoTransferFunction>,
}

impl PlantMatrix {
    pub fn new(elements: Vec<FoTransferFunction>) -> Result<Self> {
        if elements.len() != CHANNELS * CHANNELS {
            return Err(Error::InvalidArgument(format!(
                "plant needs {} elements, got {}",
                CHANNELS * CHANNELS,
                elements.len()
            )));
        }
        for (k, g) in elements.iter().enumerate() {
            g.validate()
                .map_err(|e| Error::InvalidArgument(format!("element ({}, {}): {e}", k / CHANNELS, k % CHANNELS)))?;
        }
        for i in 0..CHANNELS {
            let g = elements[i * CHANNELS + i];
            if g.gain <= 0.0 {
                return Err(Error::InvalidArgument(format!(
                    "diagonal gain of channel {i} must be positive, got {}",
                    g.gain
                )));
            }
        }
        Ok(Self { elements })
    }

    /// Plant with only the given diagonal elements.
    pub fn diagonal_only(diag: &[FoTransferFunction; CHANNELS]) -> Result<Self> {
        synthesize_plant(diag, &CouplingConfig::decoupled())
    }

    pub fn element(&self, i: usize, j: usize) -> &FoTransferFunction {
        &self.elements[i * CHANNELS + j]
    }

    pub fn elements(&self) -> &[FoTransferFunction] {
        &self.elements
    }

    pub fn diagonal(&self) -> [FoTransferFunction; CHANNELS] {
        std::array::from_fn(|i| *self.element(i, i))
    }

    /// DC gain matrix, row-major.
    pub fn dc_gains(&self) -> Vec<f64> {
        self.elements.iter().map(|g| g.gain).collect()
    }

    /// Rows whose off-diagonal DC gains sum to at least the diagonal gain.
    pub fn dominance_violations(&self) -> Vec<(usize, f64, f64)> {
        (0..CHANNELS)
            .filter_map(|i| {
                let diag = self.element(i, i).gain.abs();
                let off: f64 = (0..CHANNELS)
                    .filter(|&j| j != i)
                    .map(|j| self.element(i, j).gain.abs())
                    .sum();
                (off >= diag).then_some((i, off, diag))
            })
            .collect()
    }
}

/// Builds the full plant from the 16 diagonal models and a coupling rule.
pub fn synthesize_plant(
    diag: &[FoTransferFunction; CHANNELS],
    coupling: &CouplingConfig,
) -> Result<PlantMatrix> {
    coupling.validate()?;
    let mut elements = Vec::with_capacity(CHANNELS * CHANNELS);
    for i in 0..CHANNELS {
        for j in 0..CHANNELS {
            elements.push(coupling.element(diag, i, j));
        }
    }
    let plant = PlantMatrix::new(elements)?;
    let violations = plant.dominance_violations();
    if !violations.is_empty() {
        let rows: Vec<String> = violations
            .iter()
            .map(|(row, off, d)| format!("row {row}: off-diagonal DC gain sum {off:.4} >= diagonal {d:.4}"))
            .collect();
        return Err(Error::InvalidConfig(format!(
            "plant is not diagonally dominant ({})",
            rows.join("; ")
        )));
    }
    Ok(plant)
}

/// PWM actuator: signed counts, clamped, then scaled to normalized drive.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ActuatorModel {
    pub pwm_min: f64,
    pub pwm_max: f64,
    /// Normalized drive units per PWM count.
    pub drive_scale: f64,
}

impl Default for ActuatorModel {
    fn default() -> Self {
        Self {
            pwm_min: -4000.0,
            pwm_max: 4000.0,
            drive_scale: 1.0 / 50.0,
        }
    }
}

impl ActuatorModel {
    pub fn validate(&self) -> Result<()> {
        if !(self.pwm_min < 0.0 && self.pwm_max > 0.0) {
            return Err(Error::InvalidConfig("PWM range must straddle zero".into()));
        }
        if !(self.drive_scale > 0.0 && self.drive_scale.is_finite()) {
            return Err(Error::InvalidConfig("drive_scale must be positive".into()));
        }
        Ok(())
    }

    pub fn clamp(&self, counts: f64) -> f64 {
        counts.clamp(self.pwm_min, self.pwm_max)
    }

    pub fn drive(&self, counts: f64) -> f64 {
        self.clamp(counts) * self.drive_scale
    }

    /// Largest normalized drive magnitude the actuator can produce.
    pub fn drive_limit(&self) -> f64 {
        self.pwm_min.abs().max(self.pwm_max) * self.drive_scale
    }
}
