use num_complex::Complex64;
use proptest::prelude::*;
use thermotwin::foc::{freq_response, log_grid, margins, FrequencyResponse};
use thermotwin::plant::{bench, ActuatorModel};
use thermotwin::tuner::{tune_diagonal, tune_pi, verify_spec, PiGains, TuneResult, TuningSpec};
use thermotwin::{Error, FoTransferFunction};

/// Margins from a dense sampled response with linear interpolation, sharing
/// nothing with the tuner's analytic evaluation.
fn sampled_margins(g: &FoTransferFunction, c: PiGains) -> thermotwin::foc::MarginReport {
    let grid = log_grid(1e-6, 1e3, 400).unwrap();
    let plant = freq_response(g, &grid).unwrap();
    let pi = FrequencyResponse::from_fn(&grid, |w| Complex64::new(c.prop_k, -c.integ_i / w)).unwrap();
    margins(&plant.mul(&pi).unwrap()).unwrap()
}

fn sensitivity(g: &FoTransferFunction, c: PiGains, w: f64) -> Complex64 {
    1.0 / (1.0 + Complex64::new(c.prop_k, -c.integ_i / w) * g.eval(w))
}

fn check_against_oracle(g: &FoTransferFunction, r: &TuneResult, spec: &TuningSpec) {
    let m = sampled_margins(g, r.gains);
    assert!((m.phase_margin_deg - r.achieved.phase_margin_deg).abs() < 0.05, "{m:?} vs {:?}", r.achieved);
    assert!((m.gain_crossover_w / r.achieved.gain_crossover_w - 1.0).abs() < 1e-3);
    if r.feasible {
        let [lo, hi] = spec.pm_range_deg;
        assert!(m.phase_margin_deg > lo - 0.05 && m.phase_margin_deg < hi + 0.05);
        assert!(m.gain_margin_db >= spec.gm_range_db[0]);
        let s = 20.0 * sensitivity(g, r.gains, spec.w_a).norm().log10();
        let t = 20.0 * (1.0 - sensitivity(g, r.gains, spec.w_b)).norm().log10();
        assert!(s <= spec.dist_rej_bound_db + 1e-3, "{s}");
        assert!(t <= spec.hf_noise_bound_db + 1e-3, "{t}");
    }
}

fn fast_spec() -> TuningSpec {
    TuningSpec {
        starts: 3,
        max_iter: 150,
        ..TuningSpec::default()
    }
}

#[test]
fn nominal_model_meets_default_spec() {
    let g = bench::nominal();
    let spec = TuningSpec::default();
    let r = tune_pi(&g, &spec).unwrap();
    assert!(r.feasible, "{:?}", r.violations);
    assert!(r.closed_loop_stable);
    assert!(r.itae_value.is_finite() && r.itae_value > 0.0);
    let pm = r.achieved.phase_margin_deg;
    assert!((60.0..=65.0).contains(&pm), "{pm}");
    check_against_oracle(&g, &r, &spec);
    // multistart never loses to a feasible starting point
    for s in r.starts.iter().filter(|s| s.feasible) {
        assert!(r.itae_value <= s.itae_value, "{} > {}", r.itae_value, s.itae_value);
    }
    assert_eq!(r.starts.len(), spec.starts);
}

#[test]
fn first_order_plant_hits_pm_target() {
    let g = FoTransferFunction::fopdt(1.0, 1.0, 1.0).unwrap();
    let spec = TuningSpec {
        pm_range_deg: [60.0, 60.0],
        ..fast_spec()
    };
    let r = tune_pi(&g, &spec).unwrap();
    let m = sampled_margins(&g, r.gains);
    assert!((m.phase_margin_deg - 60.0).abs() < 1.0, "{}", m.phase_margin_deg);
}

#[test]
fn verification_reproduces_tuning() {
    let g = bench::nominal();
    let spec = fast_spec();
    let r = tune_pi(&g, &spec).unwrap();
    let v = verify_spec(&g, r.gains, &spec).unwrap();
    assert_eq!(v.achieved, r.achieved);
    assert_eq!(v.itae_value, r.itae_value);
    assert_eq!(v.flat_phase_slope, r.flat_phase_slope);
    assert_eq!(v.t_peak_hf_db, r.t_peak_hf_db);
    assert_eq!(v.s_db_at_wa, r.s_db_at_wa);
    assert_eq!(v.feasible, r.feasible);
}

#[test]
fn tuning_is_deterministic() {
    let g = bench::diagonal()[2];
    let a = tune_pi(&g, &fast_spec()).unwrap();
    let b = tune_pi(&g, &fast_spec()).unwrap();
    assert_eq!(a, b);
    let other = tune_pi(&g, &TuningSpec { seed: 99, ..fast_spec() }).unwrap();
    assert_ne!(a.starts, other.starts);
}

#[test]
fn gains_scale_inversely_with_plant_gain() {
    let g = bench::diagonal()[6];
    let spec = fast_spec();
    let a = tune_pi(&g, &spec).unwrap();
    let b = tune_pi(&g.scaled(3.0), &spec).unwrap();
    assert!((b.gains.prop_k * 3.0 / a.gains.prop_k - 1.0).abs() < 0.01);
    assert!((b.gains.integ_i * 3.0 / a.gains.integ_i - 1.0).abs() < 0.01);
}

#[test]
fn benchmark_channels_agree_with_sampled_oracle() {
    let spec = fast_spec();
    let diag = bench::diagonal();
    for ch in [0, 5, 10, 15] {
        let r = tune_pi(&diag[ch], &spec).unwrap();
        assert!(r.feasible, "channel {}: {:?}", ch + 1, r.violations);
        check_against_oracle(&diag[ch], &r, &spec);
    }
}

#[test]
fn vanishing_gains_look_like_an_integrator() {
    let g = bench::nominal();
    let r = verify_spec(&g, PiGains::new(1e-9, 1e-9).unwrap(), &TuningSpec::default()).unwrap();
    assert!(r.achieved.phase_margin_deg > 65.0);
    assert!(!r.feasible);
}

#[test]
fn published_gains_stabilize_their_channels() {
    let diag = bench::diagonal();
    let scale = ActuatorModel::default().drive_scale;
    for (ch, (&(k, i), g)) in bench::PI_GAINS.iter().zip(&diag).enumerate() {
        for c in [PiGains::new(k, i).unwrap(), PiGains::new(k, i).unwrap().scaled(scale)] {
            let r = verify_spec(g, c, &TuningSpec::default()).unwrap();
            assert!(r.closed_loop_stable, "channel {}", ch + 1);
            // integral action: no steady-state error
            assert!(sensitivity(g, c, 1e-9).norm() < 1e-3, "channel {}", ch + 1);
        }
    }
    let nominal = verify_spec(&bench::nominal(), PiGains::new(65.73, 1.17).unwrap(), &TuningSpec::default());
    assert!(nominal.unwrap().closed_loop_stable);
}

#[test]
fn identical_channels_give_identical_results_and_errors_stay_local() {
    let g = bench::diagonal()[0];
    let spec = TuningSpec {
        starts: 2,
        max_iter: 60,
        ..TuningSpec::default()
    };
    let same = tune_diagonal(&[g; 3], &spec);
    let first = same[0].as_ref().unwrap();
    assert!(same.iter().all(|r| r.as_ref().unwrap() == first));

    let mut mixed = [g; 3];
    mixed[1] = FoTransferFunction::fopdt(0.0, 1.0, 1.0).unwrap();
    let out = tune_diagonal(&mixed, &spec);
    assert!(matches!(out[1], Err(Error::Unsupported(_))));
    assert!(out[0].is_ok() && out[2].is_ok());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn verification_is_gain_covariant(
        k in 0.1f64..3.0,
        ci in 0.01f64..2.0,
        cp in 0.05f64..3.0,
        scale in 0.2f64..5.0,
    ) {
        let g = FoTransferFunction::fopdt(k, 15.0, 0.7).unwrap();
        let c = PiGains::new(cp, ci).unwrap();
        let spec = TuningSpec::default();
        let a = verify_spec(&g, c, &spec).unwrap();
        let b = verify_spec(&g.scaled(scale), c.scaled(1.0 / scale), &spec).unwrap();
        prop_assert!((a.achieved.phase_margin_deg - b.achieved.phase_margin_deg).abs() < 1e-6);
        prop_assert!((a.achieved.gain_crossover_w / b.achieved.gain_crossover_w - 1.0).abs() < 1e-9);
        prop_assert_eq!(a.closed_loop_stable, b.closed_loop_stable);
        if a.closed_loop_stable {
            prop_assert!((a.itae_value / b.itae_value - 1.0).abs() < 1e-6);
        }
    }
}
