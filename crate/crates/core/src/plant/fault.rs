//! Injectable actuator and sensor faults.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::CHANNELS;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FaultKind {
    /// Peltier wear: the input's effect on every output shrinks by `1 − magnitude`.
    GainDegradation,
    /// Power loss: the applied drive is forced to zero.
    SupplyInterruption,
    /// Camera offset of `magnitude` °C added to measured points.
    SensorOffset,
}

impl FromStr for FaultKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "gain_degradation" => Ok(Self::GainDegradation),
            "supply_interruption" => Ok(Self::SupplyInterruption),
            "sensor_offset" => Ok(Self::SensorOffset),
            other => Err(Error::InvalidArgument(format!("unknown fault kind '{other}'"))),
        }
    }
}

impl fmt::Display for FaultKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::GainDegradation => "gain_degradation",
            Self::SupplyInterruption => "supply_interruption",
            Self::SensorOffset => "sensor_offset",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum FaultTarget {
    Channel(usize),
    All(AllChannels),
}

/// Serializes as the string `"all"`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AllChannels {
    All,
}

impl FaultTarget {
    pub fn all() -> Self {
        Self::All(AllChannels::All)
    }

    pub fn covers(&self, channel: usize) -> bool {
        match *self {
            Self::Channel(c) => c == channel,
            Self::All(_) => true,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FaultSpec {
    pub kind: FaultKind,
    pub target: FaultTarget,
    /// Seconds from the start of the run.
    pub onset: f64,
    /// Gain loss fraction, ignored, or °C depending on `kind`.
    #[serde(default)]
    pub magnitude: f64,
    /// Seconds; `None` keeps the fault active forever.
    #[serde(default)]
    pub duration: Option<f64>,
}

impl FaultSpec {
    pub fn validate(&self) -> Result<()> {
        if !(self.onset >= 0.0 && self.onset.is_finite()) {
            return Err(Error::InvalidConfig(format!("fault onset must be >= 0, got {}", self.onset)));
        }
        if let Some(d) = self.duration {
            if !(d > 0.0) {
                return Err(Error::InvalidConfig(format!("fault duration must be > 0, got {d}")));
            }
        }
        if !self.magnitude.is_finite() {
            return Err(Error::InvalidConfig("fault magnitude must be finite".into()));
        }
        match (self.kind, self.target) {
            (_, FaultTarget::Channel(c)) if c >= CHANNELS => {
                Err(Error::InvalidConfig(format!("fault target {c} out of range")))
            }
            (FaultKind::SensorOffset, _) => Ok(()),
            (_, FaultTarget::All(_)) => Err(Error::InvalidConfig(format!(
                "{} needs a single channel target",
                self.kind
            ))),
            (FaultKind::GainDegradation, _) if !(0.0..=1.0).contains(&self.magnitude) => Err(
                Error::InvalidConfig(format!("gain loss {} outside [0, 1]", self.magnitude)),
            ),
            _ => Ok(()),
        }
    }

    pub fn active(&self, t: f64) -> bool {
        t >= self.onset && self.duration.is_none_or(|d| t < self.onset + d)
    }
}

/// Validated list of faults applied along the drive and measurement paths.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct FaultSet {
    faults: Vec<FaultSpec>,
}

impl FaultSet {
    pub fn new(faults: Vec<FaultSpec>) -> Result<Self> {
        for f in &faults {
            f.validate()?;
        }
        Ok(Self { faults })
    }

    /// Adds a fault after validating it.
    pub fn push(&mut self, fault: FaultSpec) -> Result<()> {
        fault.validate()?;
        self.faults.push(fault);
        Ok(())
    }

    pub fn faults(&self) -> &[FaultSpec] {
        &self.faults
    }

    pub fn is_empty(&self) -> bool {
        self.faults.is_empty()
    }

    /// Scales or zeroes the applied drive of affected channels.
    pub fn apply_to_drive(&self, t: f64, drive: &mut [f64; CHANNELS]) {
        for f in self.faults.iter().filter(|f| f.active(t)) {
            for (j, u) in drive.iter_mut().enumerate() {
                if !f.target.covers(j) {
                    continue;
                }
                match f.kind {
                    FaultKind::GainDegradation => *u *= 1.0 - f.magnitude,
                    FaultKind::SupplyInterruption => *u = 0.0,
                    FaultKind::SensorOffset => {}
                }
            }
        }
    }

    /// Adds active sensor offsets to measured points.
    pub fn apply_to_points(&self, t: f64, points: &mut [f64; CHANNELS]) {
        for f in self.faults.iter().filter(|f| f.active(t) && f.kind == FaultKind::SensorOffset) {
            for (i, p) in points.iter_mut().enumerate() {
                if f.target.covers(i) {
                    *p += f.magnitude;
                }
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn spec(kind: FaultKind, target: FaultTarget, magnitude: f64) -> FaultSpec {
        FaultSpec {
            kind,
            target,
            onset: 10.0,
            magnitude,
            duration: Some(5.0),
        }
    }

    #[test]
    fn parses_known_kinds_only() {
        assert_eq!("sensor_offset".parse::<FaultKind>().unwrap(), FaultKind::SensorOffset);
        assert!(matches!("melt".parse::<FaultKind>(), Err(Error::InvalidArgument(_))));
    }

    #[test]
    fn zero_degradation_is_identity() {
        let set = FaultSet::new(vec![spec(FaultKind::GainDegradation, FaultTarget::Channel(2), 0.0)]).unwrap();
        let mut u = [3.0; CHANNELS];
        set.apply_to_drive(12.0, &mut u);
        assert_eq!(u, [3.0; CHANNELS]);
    }

    #[test]
    fn interruption_window() {
        let set = FaultSet::new(vec![spec(FaultKind::SupplyInterruption, FaultTarget::Channel(3), 0.0)]).unwrap();
        for (t, expect) in [(9.9, 1.0), (10.0, 0.0), (14.9, 0.0), (15.0, 1.0)] {
            let mut u = [1.0; CHANNELS];
            set.apply_to_drive(t, &mut u);
            assert_eq!(u[3], expect, "t={t}");
            assert_eq!(u[2], 1.0);
        }
    }

    #[test]
    fn offset_on_all_points() {
        let set = FaultSet::new(vec![spec(FaultKind::SensorOffset, FaultTarget::all(), 0.5)]).unwrap();
        let mut p = [20.0; CHANNELS];
        set.apply_to_points(11.0, &mut p);
        assert_eq!(p, [20.5; CHANNELS]);
    }

    #[test]
    fn validation() {
        assert!(spec(FaultKind::GainDegradation, FaultTarget::Channel(0), 1.2).validate().is_err());
        assert!(spec(FaultKind::SupplyInterruption, FaultTarget::all(), 0.0).validate().is_err());
        assert!(spec(FaultKind::SupplyInterruption, FaultTarget::Channel(16), 0.0).validate().is_err());
        let mut f = spec(FaultKind::SensorOffset, FaultTarget::all(), 0.5);
        f.onset = -1.0;
        assert!(f.validate().is_err());
    }

    #[test]
    fn target_serializes_as_index_or_all() {
        let f = spec(FaultKind::SensorOffset, FaultTarget::all(), 0.5);
        let s = serde_json::to_string(&f).unwrap();
        assert!(s.contains("\"target\":\"all\""), "{s}");
        let back: FaultSpec = serde_json::from_str(&s).unwrap();
        assert_eq!(back, f);
        let g: FaultSpec = serde_json::from_str(
            r#"{"kind":"supply_interruption","target":3,"onset":0.0}"#,
        )
        .unwrap();
        assert_eq!(g.target, FaultTarget::Channel(3));
        assert_eq!(g.duration, None);
    }
}
