//! Thermal camera: noisy, quantized point readings and the interpolated image.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::{grid_position, TEMP_MAX, TEMP_MIN};
use crate::error::{Error, Result};
use crate::{CHANNELS, GRID_SIDE};

pub const IMAGE_WIDTH: usize = 80;
pub const IMAGE_HEIGHT: usize = 60;

/// Anchor lattice: 4×4 points spaced 16 px over a centered 48×48 region.
const ANCHOR_PITCH: usize = 16;
const ANCHOR_X0: usize = (IMAGE_WIDTH - 3 * ANCHOR_PITCH) / 2;
const ANCHOR_Y0: usize = (IMAGE_HEIGHT - 3 * ANCHOR_PITCH) / 2;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SensorModel {
    /// Standard deviation of white measurement noise, °C.
    pub noise_sigma: f64,
    /// Reading resolution, °C; 0 disables quantization.
    pub quantization: f64,
    /// Bound on the systematic offset outside FFC frames, °C.
    pub accuracy_band: f64,
    /// Amplitude of the slow sinusoidal offset, °C.
    pub drift_amplitude: f64,
    pub drift_period: f64,
    /// Seconds between scheduled flat-field corrections; 0 disables them.
    pub ffc_period: f64,
    /// Added to every point during an FFC frame, °C.
    pub ffc_offset: f64,
    pub frame_rate: f64,
    pub rng_seed: u64,
    /// Attach the interpolated 80×60 image to each frame.
    pub render_image: bool,
}

impl Default for SensorModel {
    fn default() -> Self {
        Self {
            noise_sigma: 0.2,
            quantization: 0.1,
            accuracy_band: 0.5,
            drift_amplitude: 0.1,
            drift_period: 1800.0,
            ffc_period: 300.0,
            ffc_offset: 0.5,
            frame_rate: 9.0,
            rng_seed: 0,
            render_image: false,
        }
    }
}

impl SensorModel {
    /// Noise- and offset-free sensor; readings equal the true temperatures up to quantization.
    pub fn ideal() -> Self {
        Self {
            noise_sigma: 0.0,
            drift_amplitude: 0.0,
            ffc_period: 0.0,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidConfig(m.to_string()));
        if !(self.noise_sigma >= 0.0 && self.noise_sigma.is_finite()) {
            return bad("noise_sigma must be >= 0");
        }
        if !(self.quantization >= 0.0 && self.quantization.is_finite()) {
            return bad("quantization must be >= 0");
        }
        if !(self.accuracy_band > 0.0) {
            return bad("accuracy_band must be > 0");
        }
        if !(self.drift_amplitude.abs() <= self.accuracy_band) {
            return bad("drift_amplitude must not exceed accuracy_band");
        }
        if !(self.drift_period > 0.0) {
            return bad("drift_period must be > 0");
        }
        if !(self.ffc_period >= 0.0 && self.ffc_period.is_finite()) {
            return bad("ffc_period must be >= 0");
        }
        if !self.ffc_offset.is_finite() {
            return bad("ffc_offset must be finite");
        }
        if !(self.frame_rate > 0.0 && self.frame_rate.is_finite()) {
            return bad("frame_rate must be > 0");
        }
        Ok(())
    }

    /// Slow systematic offset at time `t`, bounded by `drift_amplitude`.
    pub fn systematic_offset(&self, t: f64) -> f64 {
        self.drift_amplitude * (std::f64::consts::TAU * t / self.drift_period).sin()
    }

    pub fn quantize(&self, v: f64) -> f64 {
        if self.quantization > 0.0 {
            (v / self.quantization).round() * self.quantization
        } else {
            v
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ThermalFrame {
    pub timestamp: f64,
    pub points: [f64; CHANNELS],
    /// Row-major `IMAGE_HEIGHT × IMAGE_WIDTH`, °C.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub image: Option<Vec<f64>>,
    pub ffc_event: bool,
}

/// Stateful camera: owns the noise generator and the FFC schedule.
#[derive(Debug, Clone)]
pub struct Camera {
    model: SensorModel,
    ambient: f64,
    rng: ChaCha8Rng,
    noise: Normal<f64>,
    next_periodic: f64,
    /// One-shot FFC times still pending, sorted descending so `pop` yields the earliest.
    one_shots: Vec<f64>,
}

impl Camera {
    pub fn new(model: SensorModel, ambient: f64) -> Result<Self> {
        model.validate()?;
        let noise = Normal::new(0.0, model.noise_sigma)
            .map_err(|e| Error::InvalidConfig(format!("noise: {e}")))?;
        Ok(Self {
            model,
            ambient,
            rng: ChaCha8Rng::seed_from_u64(model.rng_seed),
            noise,
            next_periodic: if model.ffc_period > 0.0 { model.ffc_period } else { f64::INFINITY },
            one_shots: Vec::new(),
        })
    }

    /// Adds unscheduled FFC events at the given times.
    pub fn with_one_shots(mut self, times: &[f64]) -> Self {
        self.one_shots.extend_from_slice(times);
        self.one_shots.sort_by(|a, b| b.total_cmp(a));
        self
    }

    pub fn model(&self) -> &SensorModel {
        &self.model
    }

    /// True when an FFC event falls due at or before `t`; consumes it.
    fn take_ffc(&mut self, t: f64) -> bool {
        let eps = 1e-9;
        let mut fired = false;
        while self.next_periodic <= t + eps {
            fired = true;
            self.next_periodic += self.model.ffc_period;
        }
        while self.one_shots.last().is_some_and(|&e| e <= t + eps) {
            fired = true;
            self.one_shots.pop();
        }
        fired
    }

    pub fn read(&mut self, true_temps: &[f64; CHANNELS], t: f64) -> ThermalFrame {
        let ffc_event = self.take_ffc(t);
        let offset = self.model.systematic_offset(t) + if ffc_event { self.model.ffc_offset } else { 0.0 };
        let mut points = [0.0; CHANNELS];
        for (p, &y) in points.iter_mut().zip(true_temps) {
            let n = self.noise.sample(&mut self.rng);
            *p = self.model.quantize(y + n + offset).clamp(TEMP_MIN, TEMP_MAX);
        }
        let image = self.model.render_image.then(|| render_image(&points, self.ambient));
        ThermalFrame {
            timestamp: t,
            points,
            image,
            ffc_event,
        }
    }
}

/// Interpolates the 16 point readings into an 80×60 image.
///
/// Inside the anchor lattice the image is bilinear; outside it the edge value
/// fades linearly to `ambient` at the image border.
pub fn render_image(points: &[f64; CHANNELS], ambient: f64) -> Vec<f64> {
    let grid = |r: usize, c: usize| points[r * GRID_SIDE + c];
    let span = (GRID_SIDE - 1) * ANCHOR_PITCH;
    let (x_end, y_end) = (ANCHOR_X0 + span, ANCHOR_Y0 + span);
    let falloff = |p: usize, lo: usize, hi: usize, size: usize| -> f64 {
        if p < lo {
            p as f64 / lo as f64
        } else if p > hi {
            (size - 1 - p) as f64 / (size - 1 - hi) as f64
        } else {
            1.0
        }
    };
    let mut img = Vec::with_capacity(IMAGE_WIDTH * IMAGE_HEIGHT);
    for y in 0..IMAGE_HEIGHT {
        let gy = (y.clamp(ANCHOR_Y0, y_end) - ANCHOR_Y0) as f64 / ANCHOR_PITCH as f64;
        let r0 = (gy.floor() as usize).min(GRID_SIDE - 2);
        let fy = gy - r0 as f64;
        let wy = falloff(y, ANCHOR_Y0, y_end, IMAGE_HEIGHT);
        for x in 0..IMAGE_WIDTH {
            let gx = (x.clamp(ANCHOR_X0, x_end) - ANCHOR_X0) as f64 / ANCHOR_PITCH as f64;
            let c0 = (gx.floor() as usize).min(GRID_SIDE - 2);
            let fx = gx - c0 as f64;
            let top = grid(r0, c0) * (1.0 - fx) + grid(r0, c0 + 1) * fx;
            let bot = grid(r0 + 1, c0) * (1.0 - fx) + grid(r0 + 1, c0 + 1) * fx;
            let v = top * (1.0 - fy) + bot * fy;
            let w = wy * falloff(x, ANCHOR_X0, x_end, IMAGE_WIDTH);
            img.push(ambient + w * (v - ambient));
        }
    }
    img
}

/// Pixel `(x, y)` of channel `index`'s anchor.
pub fn anchor_pixel(index: usize) -> (usize, usize) {
    let (r, c) = grid_position(index);
    (ANCHOR_X0 + c * ANCHOR_PITCH, ANCHOR_Y0 + r * ANCHOR_PITCH)
}
