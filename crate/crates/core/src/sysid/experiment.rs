//! Stepped excitation experiments on the simulated plant.

use serde::{Deserialize, Serialize};

use super::{fit_fopdt, fit_percent, FitOptions, IdentifiedModel};
use crate::error::{Error, Result};
use crate::foc::FoTransferFunction;
use crate::plant::{Camera, DiscretePlant, PlantMatrix, SimOptions};
use crate::CHANNELS;

/// All 16 outputs recorded during one step excitation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepDataset {
    /// Stepped input; `None` when every input steps together.
    pub channel_in: Option<usize>,
    pub amplitude: f64,
    pub times: Vec<f64>,
    /// `responses[i]` is output `i` in °C.
    pub responses: Vec<Vec<f64>>,
}

impl StepDataset {
    pub fn validate(&self) -> Result<()> {
        if self.times.first() != Some(&0.0) {
            return Err(Error::InvalidArgument("times must start at 0".into()));
        }
        if self.times.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(Error::InvalidArgument("times must be strictly increasing".into()));
        }
        if self.responses.len() != CHANNELS
            || self.responses.iter().any(|r| r.len() != self.times.len())
        {
            return Err(Error::InvalidArgument(format!(
                "need {CHANNELS} responses of {} samples",
                self.times.len()
            )));
        }
        if let Some(c) = self.channel_in {
            if c >= CHANNELS {
                return Err(Error::InvalidArgument(format!("input channel {c} out of range")));
            }
        }
        Ok(())
    }

    /// Drive vector held during the record.
    pub fn drive(&self) -> [f64; CHANNELS] {
        match self.channel_in {
            Some(j) => {
                let mut u = [0.0; CHANNELS];
                u[j] = self.amplitude;
                u
            }
            None => [self.amplitude; CHANNELS],
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum SegmentKind {
    /// One input stepped, all others at zero.
    Excitation { channel: usize, amplitude: f64 },
    /// Every input stepped at once.
    Validation { amplitude: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Segment {
    pub kind: SegmentKind,
    pub start: f64,
    pub duration: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExcitationSchedule {
    pub segments: Vec<Segment>,
}

impl ExcitationSchedule {
    pub fn excitations(&self) -> impl Iterator<Item = &Segment> {
        self.segments
            .iter()
            .filter(|s| matches!(s.kind, SegmentKind::Excitation { .. }))
    }

    /// Input-output records yielded by the excitation segments.
    pub fn fitting_records(&self) -> usize {
        self.excitations().count() * CHANNELS
    }

    pub fn total_duration(&self) -> f64 {
        self.segments.iter().map(|s| s.duration).sum()
    }
}

/// Sequential single-input steps for every channel and amplitude, then one
/// all-input validation step at the first amplitude.
///
/// `expected_time_scale` is the slowest `T^{1/α}` anticipated; each segment
/// must last at least five of them.
pub fn design_experiment(
    amplitudes: &[f64],
    settle_time: f64,
    expected_time_scale: f64,
    drive_limit: f64,
) -> Result<ExcitationSchedule> {
    if amplitudes.is_empty() {
        return Err(Error::InvalidArgument("no amplitudes given".into()));
    }
    if let Some(a) = amplitudes
        .iter()
        .find(|a| !(a.is_finite() && **a != 0.0 && a.abs() <= drive_limit))
    {
        return Err(Error::InvalidArgument(format!(
            "amplitude {a} outside the actuator range ±{drive_limit}"
        )));
    }
    if !(settle_time >= 5.0 * expected_time_scale) {
        return Err(Error::InvalidArgument(format!(
            "settle time {settle_time} s shorter than 5 × {expected_time_scale:.1} s"
        )));
    }
    let mut segments = Vec::with_capacity(amplitudes.len() * CHANNELS + 1);
    let mut start = 0.0;
    for &amplitude in amplitudes {
        for channel in 0..CHANNELS {
            segments.push(Segment {
                kind: SegmentKind::Excitation { channel, amplitude },
                start,
                duration: settle_time,
            });
            start += settle_time;
        }
    }
    segments.push(Segment {
        kind: SegmentKind::Validation {
            amplitude: amplitudes[0],
        },
        start,
        duration: settle_time,
    });
    Ok(ExcitationSchedule { segments })
}

/// Runs one segment from rest and samples every plant step, starting with
/// the pre-step reading at `t = 0`. Without a camera the true temperatures
/// are recorded.
pub fn record_step(
    plant: &DiscretePlant,
    kind: SegmentKind,
    duration: f64,
    mut camera: Option<&mut Camera>,
) -> Result<StepDataset> {
    let (channel_in, amplitude) = match kind {
        SegmentKind::Excitation { channel, amplitude } => (Some(channel), amplitude),
        SegmentKind::Validation { amplitude } => (None, amplitude),
    };
    let h = plant.step_size();
    let steps = (duration / h).round() as usize;
    let mut data = StepDataset {
        channel_in,
        amplitude,
        times: Vec::with_capacity(steps + 1),
        responses: (0..CHANNELS).map(|_| Vec::with_capacity(steps + 1)).collect(),
    };
    data.validate_channel()?;
    let drive = data.drive();
    let mut state = plant.initial_state();
    let mut temps = [state.ambient; CHANNELS];
    for k in 0..=steps {
        if k > 0 {
            temps = plant.step(&mut state, &drive)?.temps;
        }
        let t = k as f64 * h;
        let seen = match camera.as_deref_mut() {
            Some(cam) => cam.read(&temps, t).points,
            None => temps,
        };
        data.times.push(t);
        for (r, v) in data.responses.iter_mut().zip(seen) {
            r.push(v);
        }
    }
    Ok(data)
}

impl StepDataset {
    fn validate_channel(&self) -> Result<()> {
        match self.channel_in {
            Some(c) if c >= CHANNELS => {
                Err(Error::InvalidArgument(format!("input channel {c} out of range")))
            }
            _ => Ok(()),
        }
    }
}

/// Full plant identified from one single-input record per channel.
#[derive(Debug, Clone, PartialEq)]
pub struct IdentifiedPlant {
    pub plant: PlantMatrix,
    /// Row-major per-element fits (`fits[i * 16 + j]` for `G_ij`).
    pub fits: Vec<IdentifiedModel>,
}

impl IdentifiedPlant {
    pub fn diagonal_fits(&self) -> [IdentifiedModel; CHANNELS] {
        std::array::from_fn(|i| self.fits[i * CHANNELS + i])
    }
}

/// Fits all 256 elements. Off-diagonal responses that are flat or fit below
/// `min_off_fit` percent become zero couplings.
pub fn identify_plant(
    datasets: &[StepDataset],
    diag_opts: &FitOptions,
    off_opts: &FitOptions,
    min_off_fit: f64,
) -> Result<IdentifiedPlant> {
    let mut by_input: [Option<&StepDataset>; CHANNELS] = [None; CHANNELS];
    for d in datasets {
        d.validate()?;
        match d.channel_in {
            Some(j) if by_input[j].is_none() => by_input[j] = Some(d),
            Some(j) => {
                return Err(Error::InvalidArgument(format!("two records for input {j}")));
            }
            None => {
                return Err(Error::InvalidArgument(
                    "simultaneous-step records cannot be used for fitting".into(),
                ))
            }
        }
    }
    let zero = FoTransferFunction {
        gain: 0.0,
        time_const: 1.0,
        order: 1.0,
        delay: 0.0,
    };
    let mut fits = Vec::with_capacity(CHANNELS * CHANNELS);
    for i in 0..CHANNELS {
        for (j, d) in by_input.iter().enumerate() {
            let d = d.ok_or_else(|| Error::InvalidArgument(format!("no record for input {j}")))?;
            let mut fit = if i == j {
                let f = fit_fopdt(&d.times, d.amplitude, &d.responses[i], diag_opts)?;
                if f.degenerate {
                    return Err(Error::UndefinedFit(format!("channel {i} shows no response")));
                }
                f
            } else {
                match fit_fopdt(&d.times, d.amplitude, &d.responses[i], off_opts) {
                    Ok(f) => f,
                    Err(Error::NotSettled(_)) => IdentifiedModel {
                        model: zero,
                        baseline: d.responses[i][0],
                        fit_percent: f64::NAN,
                        residual_rms: f64::NAN,
                        degenerate: true,
                    },
                    Err(e) => return Err(e),
                }
            };
            if i != j && !(fit.fit_percent >= min_off_fit) {
                fit.model = zero;
                fit.degenerate = true;
            }
            fits.push(fit);
        }
    }
    let plant = PlantMatrix::new(fits.iter().map(|f| f.model).collect())?;
    Ok(IdentifiedPlant { plant, fits })
}

/// Simulates `model` under the drive of a simultaneous-step record and
/// scores each output's fit.
pub fn validate_mimo(model: &PlantMatrix, run: &StepDataset, ambient: f64) -> Result<[f64; CHANNELS]> {
    run.validate()?;
    if run.channel_in.is_some() {
        return Err(Error::InvalidArgument(
            "validation needs a simultaneous all-channel step record".into(),
        ));
    }
    let h = run.times[1];
    let n = run.times.len();
    let last = run.times[n - 1];
    if ((last / (n - 1) as f64) - h).abs() > 1e-9 * h.max(1.0) {
        return Err(Error::InvalidArgument("validation record must be uniformly sampled".into()));
    }
    let opts = SimOptions {
        ambient,
        drive_limit: SimOptions::default().drive_limit.max(run.amplitude.abs()),
        ..SimOptions::default()
    };
    let sim = DiscretePlant::new(model, h, opts)?;
    let mut state = sim.initial_state();
    let drive = run.drive();
    let mut predicted = vec![vec![ambient]; CHANNELS];
    for _ in 1..n {
        let out = sim.step(&mut state, &drive)?;
        for (p, v) in predicted.iter_mut().zip(out.temps) {
            p.push(v);
        }
    }
    let mut fits = [0.0; CHANNELS];
    for i in 0..CHANNELS {
        fits[i] = fit_percent(&run.responses[i], &predicted[i])?;
    }
    Ok(fits)
}
