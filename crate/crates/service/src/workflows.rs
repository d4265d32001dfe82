//! The batch workflows behind the command-line subcommands. Each one reads
//! its upstream inputs, runs one library stage and returns plain data;
//! writing files is left to the caller.

use std::fs::File;
use std::io::BufReader;
use std::path::Path;

use anyhow::{bail, Context, Result};
use thermotwin::foc::log_grid;
use thermotwin::gap::{gap_matrix, select_nominal, GapMatrix};
use thermotwin::looprt::{controllers_from_normalized, run_scenario, RunLog};
use thermotwin::plant::{bench, synthesize_plant, Camera, DiscretePlant, PlantMatrix, SensorModel, SimOptions};
use thermotwin::records::{self, GainRecord, ModelRecord};
use thermotwin::sysid::{
    design_experiment, fit_fopdt, identify_plant, record_step, validate_mimo, FitOptions, StepDataset,
};
use thermotwin::tuner::{tune_diagonal, PiGains};
use thermotwin::{FoTransferFunction, CHANNELS};

use crate::config::Config;

fn open(path: &Path) -> Result<BufReader<File>> {
    Ok(BufReader::new(File::open(path).with_context(|| format!("opening {}", path.display()))?))
}

pub fn read_model_file(path: &Path) -> Result<Vec<ModelRecord>> {
    records::read_models(open(path)?).with_context(|| format!("reading {}", path.display()))
}

/// Diagonal models from `[inputs] models`, or the bench table.
pub fn diagonal_models(cfg: &Config) -> Result<[FoTransferFunction; CHANNELS]> {
    match &cfg.inputs.models {
        Some(p) => Ok(records::plant_from_records(&read_model_file(p)?)
            .with_context(|| format!("building a plant from {}", p.display()))?
            .diagonal()),
        None => Ok(bench::diagonal()),
    }
}

/// The coupled plant synthesized around the configured diagonal.
pub fn plant(cfg: &Config) -> Result<PlantMatrix> {
    Ok(synthesize_plant(&diagonal_models(cfg)?, &cfg.coupling)?)
}

/// Normalized gains from `[inputs] gains`, or the published counts-per-°C
/// gains converted with the actuator scale.
pub fn gains(cfg: &Config) -> Result<[PiGains; CHANNELS]> {
    match &cfg.inputs.gains {
        Some(p) => {
            let recs = records::read_gains(open(p)?).with_context(|| format!("reading {}", p.display()))?;
            Ok(records::gains_by_channel(&recs)?)
        }
        None => {
            let s = cfg.actuator.drive_scale;
            let mut out = [PiGains { prop_k: 0.0, integ_i: 0.0 }; CHANNELS];
            for (o, (k, i)) in out.iter_mut().zip(bench::PI_GAINS) {
                *o = PiGains::new(k * s, i * s)?;
            }
            Ok(out)
        }
    }
}

pub fn family(cfg: &Config) -> Result<Vec<FoTransferFunction>> {
    match &cfg.inputs.family {
        Some(p) => {
            let members: Vec<_> = read_model_file(p)?.into_iter().map(|r| r.model).collect();
            if members.is_empty() {
                bail!("{} holds no models", p.display());
            }
            Ok(members)
        }
        None => Ok(bench::family()),
    }
}

pub struct Identification {
    /// Every recorded segment, validation last.
    pub datasets: Vec<StepDataset>,
    pub models: Vec<ModelRecord>,
    /// One member per amplitude for the family channel, when several amplitudes ran.
    pub family: Vec<ModelRecord>,
    /// Per-channel fit of the identified plant on the all-input validation step.
    pub validation_fit: [f64; CHANNELS],
}

/// Runs the stepped experiment on the simulated plant and fits the models.
pub fn identify(cfg: &Config) -> Result<Identification> {
    let exp = &cfg.experiment;
    let diag = diagonal_models(cfg)?;
    let truth = synthesize_plant(&diag, &cfg.coupling)?;
    let slowest = diag.iter().map(|g| g.time_scale()).fold(0.0, f64::max);
    let settle = exp.settle_time.unwrap_or(5.0 * slowest);
    let drive_limit = cfg.actuator.drive_limit();
    let schedule = design_experiment(&exp.amplitudes, settle, slowest, drive_limit)?;
    let opts = SimOptions {
        ambient: cfg.ambient,
        drive_limit,
        ..SimOptions::default()
    };
    let sim = DiscretePlant::new(&truth, exp.sample_period, opts)?;

    let mut datasets = Vec::with_capacity(schedule.segments.len());
    for (k, seg) in schedule.segments.iter().enumerate() {
        let mut camera = if exp.camera {
            let model = SensorModel {
                rng_seed: cfg.seed.wrapping_mul(1_000_003).wrapping_add(k as u64),
                ..cfg.sensor
            };
            Some(Camera::new(model, cfg.ambient)?)
        } else {
            None
        };
        datasets.push(record_step(&sim, seg.kind, seg.duration, camera.as_mut())?);
    }

    let fit_opts = if exp.camera {
        FitOptions::for_noise(cfg.sensor.noise_sigma)
    } else {
        FitOptions::default()
    };
    let first = exp.amplitudes[0];
    let primary: Vec<StepDataset> = datasets
        .iter()
        .filter(|d| d.channel_in.is_some() && d.amplitude == first)
        .cloned()
        .collect();
    let (identified, models) = if exp.off_diagonal {
        let id = identify_plant(&primary, &fit_opts, &fit_opts, 50.0)?;
        let models = (0..CHANNELS)
            .flat_map(|i| (0..CHANNELS).map(move |j| (i, j)))
            .filter(|&(i, j)| i == j || id.plant.element(i, j).gain != 0.0)
            .map(|(i, j)| ModelRecord {
                channel: i,
                input: j,
                model: *id.plant.element(i, j),
                fit: id.fits[i * CHANNELS + j].fit_percent,
            })
            .collect();
        (id.plant, models)
    } else {
        let mut models = Vec::with_capacity(CHANNELS);
        for d in &primary {
            let ch = d.channel_in.expect("excitation record");
            let f = fit_fopdt(&d.times, d.amplitude, &d.responses[ch], &fit_opts)
                .with_context(|| format!("fitting channel {}", ch + 1))?;
            models.push(ModelRecord {
                channel: ch,
                input: ch,
                model: f.model,
                fit: f.fit_percent,
            });
        }
        (records::plant_from_records(&models)?, models)
    };

    let fam_ch = exp.family_channel;
    let mut family = Vec::new();
    if exp.amplitudes.len() > 1 {
        for d in datasets.iter().filter(|d| d.channel_in == Some(fam_ch)) {
            let f = fit_fopdt(&d.times, d.amplitude, &d.responses[fam_ch], &fit_opts)?;
            family.push(ModelRecord {
                channel: fam_ch,
                input: fam_ch,
                model: f.model,
                fit: f.fit_percent,
            });
        }
    }

    let validation = datasets.last().expect("schedule ends with validation");
    let validation_fit = validate_mimo(&identified, validation, cfg.ambient)?;
    Ok(Identification {
        datasets,
        models,
        family,
        validation_fit,
    })
}

pub struct GapResult {
    pub members: Vec<FoTransferFunction>,
    pub matrix: GapMatrix,
    pub nominal: usize,
}

pub fn gap(cfg: &Config) -> Result<GapResult> {
    let members = family(cfg)?;
    let matrix = gap_matrix(&members, &cfg.gap)?;
    let (nominal, _) = select_nominal(&members, &matrix)?;
    Ok(GapResult {
        members,
        matrix,
        nominal,
    })
}

/// Tunes every diagonal channel with the session seed; any failure aborts.
pub fn tune(cfg: &Config) -> Result<Vec<GainRecord>> {
    let diag = diagonal_models(cfg)?;
    let spec = thermotwin::tuner::TuningSpec {
        seed: cfg.seed,
        ..cfg.tuning
    };
    tune_diagonal(&diag, &spec)
        .into_iter()
        .enumerate()
        .map(|(ch, r)| {
            r.map(|r| GainRecord::from_result(ch, &r))
                .with_context(|| format!("tuning channel {}", ch + 1))
        })
        .collect()
}

pub fn simulate(cfg: &Config) -> Result<RunLog> {
    let scenario = cfg.scenario();
    let plant = plant(cfg)?;
    let controllers = controllers_from_normalized(&gains(cfg)?, &scenario)?;
    Ok(run_scenario(&plant, controllers, &scenario)?)
}

/// Open-loop Bode data per channel: plant and, with gains, the loop `C·G`.
pub struct BodeRow {
    pub channel: usize,
    pub omega: f64,
    pub plant_db: f64,
    pub plant_deg: f64,
    pub loop_db: f64,
    pub loop_deg: f64,
}

pub fn bode(diag: &[FoTransferFunction], gains: &[PiGains], per_decade: usize) -> Result<Vec<BodeRow>> {
    let grid = log_grid(1e-4, 1e1, per_decade)?;
    let mut rows = Vec::with_capacity(diag.len() * grid.len());
    for (ch, g) in diag.iter().enumerate() {
        for &w in &grid {
            let p = g.eval(w);
            let phase = g.phase(w);
            let (loop_db, loop_deg) = match gains.get(ch) {
                Some(c) => {
                    let cv = c.eval(w);
                    (20.0 * (p * cv).norm().log10(), (phase + cv.arg()).to_degrees())
                }
                None => (f64::NAN, f64::NAN),
            };
            rows.push(BodeRow {
                channel: ch,
                omega: w,
                plant_db: 20.0 * p.norm().log10(),
                plant_deg: phase.to_degrees(),
                loop_db,
                loop_deg,
            });
        }
    }
    Ok(rows)
}
