//! Decentralized discrete PI loop around the simulated plant and camera.
//!
//! Controllers work in actuator counts: gains are counts per °C, and the
//! plant sees `counts · drive_scale`. Gains tuned on the normalized plant
//! convert with [`gains_to_counts`].

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::plant::{
    ActuatorModel, Camera, CouplingConfig, DiscretePlant, FaultKind, FaultSet, FaultSpec, PlantMatrix, PlantState,
    SensorModel, SimOptions, ThermalFrame, AMBIENT, TEMP_MAX, TEMP_MIN,
};
use crate::tuner::PiGains;
use crate::CHANNELS;

/// Normalized-unit gains expressed in counts per °C.
pub fn gains_to_counts(normalized: PiGains, actuator: &ActuatorModel) -> PiGains {
    normalized.scaled(1.0 / actuator.drive_scale)
}

/// `max − min` over the 16 point readings.
pub fn uniformity_metric(frame: &ThermalFrame) -> f64 {
    let max = frame.points.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let min = frame.points.iter().copied().fold(f64::INFINITY, f64::min);
    max - min
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DiscretePiState {
    pub gains: PiGains,
    /// Accumulated `∫e dt`, °C·s.
    pub integrator: f64,
    pub last_error: f64,
    /// Counts.
    pub last_output: f64,
    pub ts: f64,
    pub out_min: f64,
    pub out_max: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PiOutput {
    pub counts: f64,
    pub saturated: bool,
    /// Measurement was unusable and the previous output was held.
    pub held: bool,
}

impl DiscretePiState {
    pub fn new(gains: PiGains, ts: f64, actuator: &ActuatorModel) -> Result<Self> {
        gains.validate()?;
        if !(ts > 0.0 && ts.is_finite()) {
            return Err(Error::InvalidArgument(format!("controller period must be > 0, got {ts}")));
        }
        Ok(Self {
            gains,
            integrator: 0.0,
            last_error: 0.0,
            last_output: 0.0,
            ts,
            out_min: actuator.pwm_min,
            out_max: actuator.pwm_max,
        })
    }

    /// One update: trapezoidal integral, clamp, and conditional anti-windup
    /// (the integral is not advanced while it would deepen saturation).
    pub fn pi_step(&mut self, setpoint: f64, measurement: f64) -> PiOutput {
        if !(measurement.is_finite() && setpoint.is_finite()) {
            return PiOutput {
                counts: self.last_output,
                saturated: false,
                held: true,
            };
        }
        let e = setpoint - measurement;
        let PiGains { prop_k, integ_i } = self.gains;
        let candidate = self.integrator + 0.5 * self.ts * (e + self.last_error);
        let raw = prop_k * e + integ_i * candidate;
        let winding = (raw > self.out_max && e > 0.0) || (raw < self.out_min && e < 0.0);
        let raw = if winding {
            prop_k * e + integ_i * self.integrator
        } else {
            self.integrator = candidate;
            raw
        };
        let counts = raw.clamp(self.out_min, self.out_max);
        self.last_error = e;
        self.last_output = counts;
        PiOutput {
            counts,
            saturated: counts != raw,
            held: false,
        }
    }

    pub fn reset(&mut self) {
        self.integrator = 0.0;
        self.last_error = 0.0;
        self.last_output = 0.0;
    }
}

/// Piecewise-constant setpoint: `(start time, value)` pairs, first at `t = 0`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SetpointSchedule(pub Vec<(f64, f64)>);

impl SetpointSchedule {
    pub fn constant(value: f64) -> Self {
        Self(vec![(0.0, value)])
    }

    pub fn at(&self, t: f64) -> f64 {
        self.0
            .iter()
            .take_while(|(s, _)| *s <= t + 1e-9)
            .last()
            .map_or(self.0[0].1, |p| p.1)
    }

    fn validate(&self, channel: usize) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidConfig(format!("setpoint schedule {}: {m}", channel + 1)));
        match self.0.first() {
            Some((t, _)) if *t == 0.0 => {}
            _ => return bad("must start at t = 0".into()),
        }
        if self.0.windows(2).any(|w| !(w[1].0 > w[0].0)) {
            return bad("times must increase".into());
        }
        if let Some((_, v)) = self.0.iter().find(|(_, v)| !(TEMP_MIN..=TEMP_MAX).contains(v)) {
            return bad(format!("{v} °C outside [{TEMP_MIN}, {TEMP_MAX}]"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    pub duration: f64,
    /// One schedule per channel.
    pub setpoints: Vec<SetpointSchedule>,
    #[serde(default)]
    pub faults: Vec<FaultSpec>,
    /// Unscheduled flat-field corrections, s.
    #[serde(default)]
    pub ffc_events: Vec<f64>,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_ts")]
    pub ts_control: f64,
    /// Plant integration step, s.
    #[serde(default = "default_plant_step")]
    pub plant_step: f64,
    #[serde(default = "default_ambient")]
    pub ambient: f64,
    #[serde(default)]
    pub sensor: SensorModel,
    #[serde(default)]
    pub actuator: ActuatorModel,
    #[serde(default)]
    pub coupling: CouplingConfig,
}

fn default_ts() -> f64 {
    0.5
}

fn default_plant_step() -> f64 {
    1.0 / 18.0
}

fn default_ambient() -> f64 {
    AMBIENT
}

impl Scenario {
    /// Every channel held at `setpoint` for `duration` seconds.
    pub fn uniform(duration: f64, setpoint: f64) -> Self {
        Self {
            duration,
            setpoints: vec![SetpointSchedule::constant(setpoint); CHANNELS],
            faults: Vec::new(),
            ffc_events: Vec::new(),
            seed: 0,
            ts_control: default_ts(),
            plant_step: default_plant_step(),
            ambient: AMBIENT,
            sensor: SensorModel::default(),
            actuator: ActuatorModel::default(),
            coupling: CouplingConfig::default(),
        }
    }

    /// Plant steps per camera frame and per control period. Controllers use
    /// the latest frame, which may be up to one frame period old.
    pub fn timing(&self) -> Result<(usize, usize)> {
        let h = self.plant_step;
        if !(h > 0.0 && h.is_finite()) {
            return Err(Error::InvalidConfig(format!("plant step must be > 0, got {h}")));
        }
        let ratio = |period: f64, name: &str| -> Result<usize> {
            let r = period / h;
            if !(r.round() >= 1.0 && (r - r.round()).abs() < 1e-6) {
                return Err(Error::InvalidConfig(format!(
                    "{name} {period} s is not a whole number of plant steps ({h} s)"
                )));
            }
            Ok(r.round() as usize)
        };
        let frame = ratio(1.0 / self.sensor.frame_rate, "frame period")?;
        let control = ratio(self.ts_control, "control period")?;
        if frame > control {
            return Err(Error::InvalidConfig(format!(
                "control period {} s is shorter than the frame period {} s",
                self.ts_control,
                1.0 / self.sensor.frame_rate
            )));
        }
        Ok((frame, control))
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.duration > 0.0 && self.duration.is_finite()) {
            return Err(Error::InvalidConfig(format!("duration must be > 0, got {}", self.duration)));
        }
        if self.setpoints.len() != CHANNELS {
            return Err(Error::InvalidConfig(format!(
                "need {CHANNELS} setpoint schedules, got {}",
                self.setpoints.len()
            )));
        }
        for (i, s) in self.setpoints.iter().enumerate() {
            s.validate(i)?;
        }
        self.sensor.validate().map_err(into_config)?;
        self.actuator.validate().map_err(into_config)?;
        self.coupling.validate().map_err(into_config)?;
        FaultSet::new(self.faults.clone()).map_err(into_config)?;
        self.timing()?;
        Ok(())
    }

    fn camera(&self) -> Result<Camera> {
        let model = SensorModel {
            rng_seed: self.seed,
            ..self.sensor
        };
        Ok(Camera::new(model, self.ambient)?.with_one_shots(&self.ffc_events))
    }
}

fn into_config(e: Error) -> Error {
    match e {
        Error::InvalidArgument(m) => Error::InvalidConfig(m),
        other => other,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EventKind {
    Saturation,
    Ffc,
    FaultOnset,
    FaultCleared,
    MeasurementInvalid,
    GainsChanged,
    SetpointChanged,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunEvent {
    pub t: f64,
    pub kind: EventKind,
    pub detail: String,
}

/// One control period.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LogRow {
    pub t: f64,
    pub setpoint: [f64; CHANNELS],
    pub measured: [f64; CHANNELS],
    pub truth: [f64; CHANNELS],
    /// Counts.
    pub drive: [f64; CHANNELS],
}

impl LogRow {
    pub fn uniformity(&self) -> f64 {
        let max = self.measured.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let min = self.measured.iter().copied().fold(f64::INFINITY, f64::min);
        max - min
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct RunLog {
    pub rows: Vec<LogRow>,
    pub events: Vec<RunEvent>,
}

impl RunLog {
    pub fn times(&self) -> Vec<f64> {
        self.rows.iter().map(|r| r.t).collect()
    }

    pub fn uniformity(&self) -> Vec<f64> {
        self.rows.iter().map(LogRow::uniformity).collect()
    }

    /// Measured series of one channel.
    pub fn measured(&self, channel: usize) -> Vec<f64> {
        self.rows.iter().map(|r| r.measured[channel]).collect()
    }

    pub fn truth(&self, channel: usize) -> Vec<f64> {
        self.rows.iter().map(|r| r.truth[channel]).collect()
    }

    pub fn drive(&self, channel: usize) -> Vec<f64> {
        self.rows.iter().map(|r| r.drive[channel]).collect()
    }

    pub fn events_of(&self, kind: EventKind) -> impl Iterator<Item = &RunEvent> {
        self.events.iter().filter(move |e| e.kind == kind)
    }
}

/// What one control period produced.
#[derive(Debug, Clone, PartialEq)]
pub struct Tick {
    pub row: LogRow,
    pub frames: Vec<ThermalFrame>,
    pub events: Vec<RunEvent>,
}

/// Steppable co-simulation. Each [`tick`](Self::tick) covers one control
/// period; gain and setpoint changes made between ticks take effect at the
/// next control instant.
pub struct LoopEngine {
    sim: DiscretePlant,
    state: PlantState,
    camera: Camera,
    faults: FaultSet,
    fault_active: Vec<bool>,
    controllers: [DiscretePiState; CHANNELS],
    saturated: [bool; CHANNELS],
    setpoints: Vec<SetpointSchedule>,
    overrides: [Option<f64>; CHANNELS],
    actuator: ActuatorModel,
    frame_steps: usize,
    control_steps: usize,
    step: u64,
    h: f64,
    truth: [f64; CHANNELS],
    measured: [f64; CHANNELS],
    pending: Vec<RunEvent>,
}

impl LoopEngine {
    pub fn new(plant: &PlantMatrix, controllers: [DiscretePiState; CHANNELS], scenario: &Scenario) -> Result<Self> {
        scenario.validate()?;
        let (frame_steps, control_steps) = scenario.timing()?;
        for (i, c) in controllers.iter().enumerate() {
            if (c.ts - scenario.ts_control).abs() > 1e-9 {
                return Err(Error::InvalidConfig(format!(
                    "controller {} period {} s differs from ts_control {} s",
                    i + 1,
                    c.ts,
                    scenario.ts_control
                )));
            }
        }
        let opts = SimOptions {
            ambient: scenario.ambient,
            drive_limit: scenario.actuator.drive_limit(),
            ..SimOptions::default()
        };
        let sim = DiscretePlant::new(plant, scenario.plant_step, opts).map_err(into_config)?;
        let state = sim.initial_state();
        Ok(Self {
            state,
            sim,
            camera: scenario.camera()?,
            faults: FaultSet::new(scenario.faults.clone())?,
            fault_active: vec![false; scenario.faults.len()],
            controllers,
            saturated: [false; CHANNELS],
            setpoints: scenario.setpoints.clone(),
            overrides: [None; CHANNELS],
            actuator: scenario.actuator,
            frame_steps,
            control_steps,
            step: 0,
            h: scenario.plant_step,
            truth: [scenario.ambient; CHANNELS],
            measured: [scenario.ambient; CHANNELS],
            pending: Vec::new(),
        })
    }

    pub fn time(&self) -> f64 {
        self.step as f64 * self.h
    }

    pub fn controllers(&self) -> &[DiscretePiState; CHANNELS] {
        &self.controllers
    }

    pub fn setpoint(&self, channel: usize) -> f64 {
        self.overrides[channel].unwrap_or_else(|| self.setpoints[channel].at(self.time()))
    }

    fn check_channel(channel: usize) -> Result<()> {
        if channel >= CHANNELS {
            return Err(Error::InvalidArgument(format!("channel {channel} out of range")));
        }
        Ok(())
    }

    /// Replaces one controller's gains, keeping its integrator.
    pub fn set_gains(&mut self, channel: usize, gains: PiGains) -> Result<()> {
        Self::check_channel(channel)?;
        gains.validate()?;
        self.controllers[channel].gains = gains;
        self.pending.push(RunEvent {
            t: self.time(),
            kind: EventKind::GainsChanged,
            detail: format!("channel {} K={} I={}", channel + 1, gains.prop_k, gains.integ_i),
        });
        Ok(())
    }

    /// Holds a channel at `value` from now on, overriding its schedule.
    pub fn set_setpoint(&mut self, channel: usize, value: f64) -> Result<()> {
        Self::check_channel(channel)?;
        if !(TEMP_MIN..=TEMP_MAX).contains(&value) {
            return Err(Error::InvalidArgument(format!(
                "setpoint {value} °C outside [{TEMP_MIN}, {TEMP_MAX}]"
            )));
        }
        self.overrides[channel] = Some(value);
        self.pending.push(RunEvent {
            t: self.time(),
            kind: EventKind::SetpointChanged,
            detail: format!("channel {} -> {value}", channel + 1),
        });
        Ok(())
    }

    /// Schedules an extra fault; one with an onset in the past starts now.
    pub fn add_fault(&mut self, mut fault: FaultSpec) -> Result<()> {
        fault.onset = fault.onset.max(self.time());
        self.faults.push(fault)?;
        self.fault_active.push(false);
        Ok(())
    }

    fn read_frame(&mut self, t: f64, events: &mut Vec<RunEvent>) -> ThermalFrame {
        let mut frame = self.camera.read(&self.truth, t);
        self.faults.apply_to_points(t, &mut frame.points);
        if frame.ffc_event {
            events.push(RunEvent {
                t,
                kind: EventKind::Ffc,
                detail: "flat-field correction".into(),
            });
        }
        self.measured = frame.points;
        frame
    }

    fn track_faults(&mut self, t: f64, events: &mut Vec<RunEvent>) {
        for (f, was) in self.faults.faults().iter().zip(self.fault_active.iter_mut()) {
            let now = f.active(t);
            if now != *was {
                let target = match f.target {
                    crate::plant::FaultTarget::Channel(c) => format!("channel {}", c + 1),
                    crate::plant::FaultTarget::All(_) => "all channels".into(),
                };
                let what = match f.kind {
                    FaultKind::GainDegradation => format!("{f} by {}", f.magnitude, f = f.kind),
                    _ => f.kind.to_string(),
                };
                events.push(RunEvent {
                    t,
                    kind: if now { EventKind::FaultOnset } else { EventKind::FaultCleared },
                    detail: format!("{what} on {target}"),
                });
                *was = now;
            }
        }
    }

    /// Advances one control period.
    pub fn tick(&mut self) -> Result<Tick> {
        let mut events = std::mem::take(&mut self.pending);
        let mut frames = Vec::with_capacity(self.control_steps / self.frame_steps);
        let mut counts = [0.0; CHANNELS];
        let mut row = None;
        for sub in 0..self.control_steps {
            let t = self.time();
            self.track_faults(t, &mut events);
            if self.step.is_multiple_of(self.frame_steps as u64) {
                let frame = self.read_frame(t, &mut events);
                frames.push(frame);
            }
            if sub == 0 {
                let mut setpoint = [0.0; CHANNELS];
                for i in 0..CHANNELS {
                    setpoint[i] = self.setpoint(i);
                    let out = self.controllers[i].pi_step(setpoint[i], self.measured[i]);
                    if out.held {
                        events.push(RunEvent {
                            t,
                            kind: EventKind::MeasurementInvalid,
                            detail: format!("channel {} holds {}", i + 1, out.counts),
                        });
                    }
                    if out.saturated && !self.saturated[i] {
                        events.push(RunEvent {
                            t,
                            kind: EventKind::Saturation,
                            detail: format!("channel {} at {}", i + 1, out.counts),
                        });
                    }
                    self.saturated[i] = out.saturated;
                    counts[i] = self.actuator.clamp(out.counts);
                }
                row = Some(LogRow {
                    t,
                    setpoint,
                    measured: self.measured,
                    truth: self.truth,
                    drive: counts,
                });
            }
            let mut drive = counts.map(|c| self.actuator.drive(c));
            self.faults.apply_to_drive(t, &mut drive);
            self.truth = self.sim.step(&mut self.state, &drive)?.temps;
            self.step += 1;
        }
        Ok(Tick {
            row: row.expect("control period has at least one step"),
            frames,
            events,
        })
    }
}

/// Runs `scenario` to completion, logging once per control period.
pub fn run_scenario(
    plant: &PlantMatrix,
    controllers: [DiscretePiState; CHANNELS],
    scenario: &Scenario,
) -> Result<RunLog> {
    let mut engine = LoopEngine::new(plant, controllers, scenario)?;
    let periods = (scenario.duration / scenario.ts_control).round() as usize;
    let mut log = RunLog {
        rows: Vec::with_capacity(periods),
        events: Vec::new(),
    };
    for _ in 0..periods {
        let tick = engine.tick()?;
        log.rows.push(tick.row);
        log.events.extend(tick.events);
    }
    Ok(log)
}

/// Controllers for the given normalized gains at the scenario's period.
pub fn controllers_from_normalized(
    gains: &[PiGains; CHANNELS],
    scenario: &Scenario,
) -> Result<[DiscretePiState; CHANNELS]> {
    let mut out = Vec::with_capacity(CHANNELS);
    for g in gains {
        out.push(DiscretePiState::new(
            gains_to_counts(*g, &scenario.actuator),
            scenario.ts_control,
            &scenario.actuator,
        )?);
    }
    Ok(out.try_into().expect("16 controllers"))
}
