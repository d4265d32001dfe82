use proptest::prelude::*;
use thermotwin::foc::{gl_step_response, GlOptions};
use thermotwin::plant::{
    bench, synthesize_plant, Camera, CouplingConfig, DiscretePlant, PlantMatrix, SensorModel, SimOptions, AMBIENT,
};
use thermotwin::sysid::{identify_plant, record_step, validate_mimo, FitOptions, SegmentKind};
use thermotwin::CHANNELS;

fn coupled() -> PlantMatrix {
    synthesize_plant(&bench::diagonal(), &CouplingConfig::default()).unwrap()
}

#[test]
fn decoupled_channels_follow_grunwald_letnikov() {
    let plant = PlantMatrix::diagonal_only(&bench::diagonal()).unwrap();
    let sim = DiscretePlant::new(&plant, 0.5, SimOptions::default()).unwrap();
    let amp = 10.0;
    let horizon = 600.0;
    let mut state = sim.initial_state();
    let temps = sim.run(&mut state, (horizon / 0.5) as usize, |_| [amp; CHANNELS]).unwrap();
    for (ch, g) in bench::diagonal().iter().enumerate() {
        let h = (g.time_scale() / 200.0).min(0.05);
        let gl = gl_step_response(g, amp, h, horizon, &GlOptions { memory: usize::MAX }).unwrap();
        let final_value = amp * g.gain;
        let worst = temps
            .iter()
            .enumerate()
            .map(|(k, y)| (y[ch] - AMBIENT - gl.at((k + 1) as f64 * 0.5)).abs())
            .fold(0.0, f64::max);
        assert!(worst < 0.02 * final_value, "channel {}: {worst} vs {final_value}", ch + 1);
    }
}

#[test]
fn sensor_noise_has_configured_spread() {
    let model = SensorModel {
        ffc_period: 0.0,
        rng_seed: 17,
        ..SensorModel::default()
    };
    let mut cam = Camera::new(model, AMBIENT).unwrap();
    let truth = [30.0; CHANNELS];
    let mut resid = Vec::new();
    for k in 0..4000 {
        let t = k as f64 / 9.0;
        let f = cam.read(&truth, t);
        let off = model.systematic_offset(t);
        resid.extend(f.points.iter().map(|p| p - 30.0 - off));
    }
    let n = resid.len() as f64;
    let mean = resid.iter().sum::<f64>() / n;
    let sd = (resid.iter().map(|r| (r - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt();
    assert!((0.18..=0.22).contains(&sd), "{sd}");
    assert!(mean.abs() < 0.01, "{mean}");
}

#[test]
fn camera_is_deterministic_per_seed() {
    let truth = [25.0; CHANNELS];
    let frames = |seed| {
        let mut cam = Camera::new(SensorModel { rng_seed: seed, ..SensorModel::default() }, AMBIENT).unwrap();
        (0..50).map(|k| cam.read(&truth, k as f64 / 9.0)).collect::<Vec<_>>()
    };
    assert_eq!(frames(1), frames(1));
    assert_ne!(frames(1), frames(2));
}

#[test]
fn identification_pipeline_on_decoupled_plant() {
    let truth = PlantMatrix::diagonal_only(&bench::diagonal()).unwrap();
    let sim = DiscretePlant::new(&truth, 0.5, SimOptions::default()).unwrap();
    let duration = 5.0 * bench::diagonal().iter().map(|g| g.time_scale()).fold(0.0, f64::max);
    let records: Vec<_> = (0..CHANNELS)
        .map(|ch| {
            record_step(&sim, SegmentKind::Excitation { channel: ch, amplitude: 5.0 }, duration, None).unwrap()
        })
        .collect();
    let opts = FitOptions::default();
    let identified = identify_plant(&records, &opts, &opts, 50.0).unwrap();
    for (ch, g) in bench::diagonal().iter().enumerate() {
        let m = identified.plant.element(ch, ch);
        assert!((m.gain / g.gain - 1.0).abs() < 0.02, "channel {} K {}", ch + 1, m.gain);
        assert!((m.time_const / g.time_const - 1.0).abs() < 0.02, "channel {} T {}", ch + 1, m.time_const);
        assert!((m.order - g.order).abs() < 0.05);
        for j in (0..CHANNELS).filter(|&j| j != ch) {
            assert_eq!(identified.plant.element(ch, j).gain, 0.0);
        }
    }

    let validation = record_step(&sim, SegmentKind::Validation { amplitude: 5.0 }, duration, None).unwrap();
    let exact = validate_mimo(&truth, &validation, AMBIENT).unwrap();
    assert!(exact.iter().all(|&f| (f - 100.0).abs() < 1e-9), "{exact:?}");
    let fitted = validate_mimo(&identified.plant, &validation, AMBIENT).unwrap();
    assert!(fitted.iter().all(|&f| f > 90.0), "{fitted:?}");
    let doubled = PlantMatrix::diagonal_only(&bench::diagonal().map(|g| g.scaled(2.0))).unwrap();
    let worse = validate_mimo(&doubled, &validation, AMBIENT).unwrap();
    assert!(worse.iter().zip(&fitted).all(|(w, f)| w < f));
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn coupled_plant_superposes(
        // the physical clamp at 15 °C is nonlinear, so stay above it
        a in prop::array::uniform16(-0.5f64..5.0),
        b in prop::array::uniform16(-0.5f64..5.0),
    ) {
        let sim = DiscretePlant::new(&coupled(), 0.5, SimOptions::default()).unwrap();
        let run = |u: [f64; CHANNELS]| {
            let mut s = sim.initial_state();
            sim.run(&mut s, 60, |_| u).unwrap()
        };
        let sum: [f64; CHANNELS] = std::array::from_fn(|i| a[i] + b[i]);
        let (ya, yb, ys) = (run(a), run(b), run(sum));
        for k in 0..ys.len() {
            for i in 0..CHANNELS {
                let lhs = ys[k][i] - AMBIENT;
                let rhs = (ya[k][i] - AMBIENT) + (yb[k][i] - AMBIENT);
                prop_assert!((lhs - rhs).abs() < 1e-9);
            }
        }
    }
}
