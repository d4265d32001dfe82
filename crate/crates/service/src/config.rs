//! Session configuration file. Sections mirror the library types and unknown
//! keys are rejected.

use std::net::ToSocketAddrs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use serde::{Deserialize, Serialize};
use thermotwin::gap::GapOptions;
use thermotwin::looprt::{Scenario, SetpointSchedule};
use thermotwin::plant::{ActuatorModel, CouplingConfig, FaultSpec, SensorModel, AMBIENT};
use thermotwin::tuner::TuningSpec;
use thermotwin::CHANNELS;

/// Overrides `[session] listen` when set.
pub const LISTEN_ENV: &str = "THERMOTWIN_LISTEN";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Config {
    /// Session seed; every random source derives from it.
    pub seed: u64,
    pub ambient: f64,
    pub inputs: Inputs,
    pub coupling: CouplingConfig,
    pub actuator: ActuatorModel,
    pub sensor: SensorModel,
    pub experiment: ExperimentConfig,
    pub gap: GapOptions,
    pub tuning: TuningSpec,
    pub scenario: ScenarioConfig,
    pub session: SessionSection,
}

impl Default for Config {
    fn default() -> Self {
        Self {
            seed: 7,
            ambient: AMBIENT,
            inputs: Inputs::default(),
            coupling: CouplingConfig::default(),
            actuator: ActuatorModel::default(),
            sensor: SensorModel::default(),
            experiment: ExperimentConfig::default(),
            gap: GapOptions::default(),
            tuning: TuningSpec::default(),
            scenario: ScenarioConfig::default(),
            session: SessionSection::default(),
        }
    }
}

/// Upstream files. Relative paths are resolved against the config file.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Inputs {
    /// Model records of the diagonal; the bench table when absent.
    pub models: Option<PathBuf>,
    /// Normalized gain records; the published gains when absent.
    pub gains: Option<PathBuf>,
    /// Model records, one family member per row; the bench family when absent.
    pub family: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ExperimentConfig {
    /// Step amplitudes in normalized drive units. The first one yields the
    /// model records; two or more also yield a family for one channel.
    pub amplitudes: Vec<f64>,
    /// Segment length, s; five slowest time scales when absent.
    pub settle_time: Option<f64>,
    pub sample_period: f64,
    /// Record through the camera model instead of the true temperatures.
    pub camera: bool,
    /// Fit all 256 elements instead of the diagonal only.
    pub off_diagonal: bool,
    pub family_channel: usize,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            amplitudes: vec![40.0],
            settle_time: None,
            sample_period: 0.5,
            camera: true,
            off_diagonal: false,
            family_channel: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ScenarioConfig {
    pub duration: f64,
    /// Uniform setpoint, °C, used when `setpoints` is absent.
    pub setpoint: f64,
    pub setpoints: Option<Vec<SetpointSchedule>>,
    pub faults: Vec<FaultSpec>,
    pub ffc_events: Vec<f64>,
    pub ts_control: f64,
    pub plant_step: f64,
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        let base = Scenario::uniform(1200.0, AMBIENT + 13.0);
        Self {
            duration: base.duration,
            setpoint: AMBIENT + 13.0,
            setpoints: None,
            faults: Vec::new(),
            ffc_events: Vec::new(),
            ts_control: base.ts_control,
            plant_step: base.plant_step,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SessionSection {
    pub stream_rate: f64,
    pub include_image: bool,
    pub listen: String,
    /// Queued frames per subscriber before the oldest are dropped.
    pub outbox_capacity: usize,
}

impl Default for SessionSection {
    fn default() -> Self {
        Self {
            stream_rate: 9.0,
            include_image: false,
            listen: "127.0.0.1:7878".into(),
            outbox_capacity: 64,
        }
    }
}

/// Everything `serve` needs besides the plant and the gains.
#[derive(Debug, Clone, PartialEq)]
pub struct SessionConfig {
    pub scenario: Scenario,
    pub stream_rate: f64,
    pub include_image: bool,
    pub listen_endpoint: String,
    /// Simulated seconds per wall-clock second; infinity runs unpaced.
    pub time_scale: f64,
    pub outbox_capacity: usize,
}

impl SessionConfig {
    pub fn validate(&self) -> Result<()> {
        self.scenario.validate()?;
        let frame_rate = self.scenario.sensor.frame_rate;
        if !(self.stream_rate > 0.0 && self.stream_rate <= frame_rate) {
            bail!(
                "stream_rate {} Hz must be in (0, {frame_rate}] (the camera frame rate)",
                self.stream_rate
            );
        }
        if !(self.time_scale > 0.0) {
            bail!("time scale must be > 0, got {}", self.time_scale);
        }
        if self.outbox_capacity == 0 {
            bail!("outbox_capacity must be at least 1");
        }
        self.listen_endpoint
            .to_socket_addrs()
            .with_context(|| format!("listen endpoint '{}'", self.listen_endpoint))?;
        Ok(())
    }
}

impl Config {
    /// Reads a config file, resolving relative input paths against its directory.
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        let mut cfg: Config = toml::from_str(&text).with_context(|| format!("parsing {}", path.display()))?;
        let base = path.parent().unwrap_or(Path::new("."));
        for p in [&mut cfg.inputs.models, &mut cfg.inputs.gains, &mut cfg.inputs.family]
            .into_iter()
            .flatten()
        {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        self.tuning.validate()?;
        if self.experiment.family_channel >= CHANNELS {
            bail!("family_channel {} out of range", self.experiment.family_channel);
        }
        if !(self.experiment.sample_period > 0.0) {
            bail!("sample_period must be > 0");
        }
        self.scenario().validate()?;
        Ok(())
    }

    /// Scenario with the session seed and the shared plant, camera and actuator sections.
    pub fn scenario(&self) -> Scenario {
        let s = &self.scenario;
        Scenario {
            duration: s.duration,
            setpoints: s
                .setpoints
                .clone()
                .unwrap_or_else(|| vec![SetpointSchedule::constant(s.setpoint); CHANNELS]),
            faults: s.faults.clone(),
            ffc_events: s.ffc_events.clone(),
            seed: self.seed,
            ts_control: s.ts_control,
            plant_step: s.plant_step,
            ambient: self.ambient,
            sensor: SensorModel {
                render_image: self.session.include_image,
                ..self.sensor
            },
            actuator: self.actuator,
            coupling: self.coupling,
        }
    }

    pub fn session(&self, time_scale: f64) -> SessionConfig {
        SessionConfig {
            scenario: self.scenario(),
            stream_rate: self.session.stream_rate,
            include_image: self.session.include_image,
            listen_endpoint: std::env::var(LISTEN_ENV).unwrap_or_else(|_| self.session.listen.clone()),
            time_scale,
            outbox_capacity: self.session.outbox_capacity,
        }
    }
}
