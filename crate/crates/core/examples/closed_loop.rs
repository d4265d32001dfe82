//! Tunes all channels, then raises every setpoint by 13 °C on the coupled
//! benchmark plant with a flat-field correction at 1061 s.

use thermotwin::looprt::{controllers_from_normalized, run_scenario, Scenario};
use thermotwin::plant::{bench, synthesize_plant, AMBIENT};
use thermotwin::tuner::{tune_all, TuningSpec};
use thermotwin::CHANNELS;

fn main() -> thermotwin::Result<()> {
    let mut scenario = Scenario::uniform(1200.0, AMBIENT + 13.0);
    scenario.ffc_events = vec![1061.0];
    scenario.seed = 3;
    let plant = synthesize_plant(&bench::diagonal(), &scenario.coupling)?;
    let tuned = tune_all(&plant, &TuningSpec::default());
    let gains = std::array::from_fn(|i| tuned[i].as_ref().expect("tunable channel").gains);
    let log = run_scenario(&plant, controllers_from_normalized(&gains, &scenario)?, &scenario)?;

    println!("ch  settle_s  mean_600_1200  max|u|");
    for ch in 0..CHANNELS {
        let y = log.measured(ch);
        let sp = log.rows[0].setpoint[ch];
        // last time the 10 s moving mean sits outside ±0.5 °C before 1000 s
        let window = 20;
        let mut settle = 0.0;
        for k in window..log.rows.len() {
            let t = log.rows[k].t;
            if t > 1000.0 {
                break;
            }
            let mean = y[k - window..k].iter().sum::<f64>() / window as f64;
            if (mean - sp).abs() > 0.5 {
                settle = t;
            }
        }
        let tail: Vec<f64> = log.rows.iter().zip(&y).filter(|(r, _)| r.t >= 600.0).map(|(_, v)| *v).collect();
        let mean = tail.iter().sum::<f64>() / tail.len() as f64;
        let umax = log.drive(ch).iter().fold(0.0f64, |m, u| m.max(u.abs()));
        println!("{:2} {:9.1} {:14.3} {:7.0}", ch + 1, settle, mean, umax);
    }
    let spread: Vec<f64> = log.rows.iter().filter(|r| r.t >= 600.0 && r.t < 1000.0).map(|r| r.uniformity()).collect();
    println!(
        "uniformity 600-1000 s: mean {:.2} max {:.2} °C; {} events",
        spread.iter().sum::<f64>() / spread.len() as f64,
        spread.iter().fold(0.0f64, |a, &b| a.max(b)),
        log.events.len()
    );
    Ok(())
}
