//! Stepped identification on the simulated coupled plant: one excitation per
//! channel read through the noisy camera, then an FOPDT fit of each diagonal
//! element.

use thermotwin::plant::{bench, synthesize_plant, Camera, CouplingConfig, DiscretePlant, SensorModel, SimOptions, AMBIENT};
use thermotwin::sysid::{design_experiment, fit_fopdt, record_step, FitOptions};

fn main() -> thermotwin::Result<()> {
    let truth = bench::diagonal();
    let plant = synthesize_plant(&truth, &CouplingConfig::default())?;
    let slowest = truth.iter().map(|g| g.time_scale()).fold(0.0, f64::max);
    let opts = SimOptions::default();
    let schedule = design_experiment(&[40.0], 5.0 * slowest, slowest, opts.drive_limit)?;
    let sim = DiscretePlant::new(&plant, 0.5, opts)?;
    let sensor = SensorModel::default();

    println!("ch   K_true  K_fit   T_true  T_fit  a_true a_fit   FIT%");
    for (k, seg) in schedule.excitations().enumerate() {
        let mut camera = Camera::new(SensorModel { rng_seed: k as u64, ..sensor }, AMBIENT)?;
        let data = record_step(&sim, seg.kind, seg.duration, Some(&mut camera))?;
        let ch = data.channel_in.expect("excitation segment");
        let fit = fit_fopdt(&data.times, data.amplitude, &data.responses[ch], &FitOptions::for_noise(sensor.noise_sigma))?;
        let (g, m) = (truth[ch], fit.model);
        println!(
            "{:2} {:8.4} {:6.4} {:8.3} {:6.3} {:6.2} {:5.2} {:6.1}",
            ch + 1,
            g.gain,
            m.gain,
            g.time_const,
            m.time_const,
            g.order,
            m.order,
            fit.fit_percent
        );
    }
    Ok(())
}
