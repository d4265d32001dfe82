//! Steps the closed loop period by period, schedules a 120 s supply
//! interruption on one channel and prints how that channel and its neighbour react.

use thermotwin::looprt::{controllers_from_normalized, LoopEngine, Scenario};
use thermotwin::plant::{bench, synthesize_plant, FaultKind, FaultSpec, FaultTarget, AMBIENT};
use thermotwin::tuner::PiGains;

fn main() -> thermotwin::Result<()> {
    let scenario = Scenario::uniform(900.0, AMBIENT + 13.0);
    let plant = synthesize_plant(&bench::diagonal(), &scenario.coupling)?;
    let scale = scenario.actuator.drive_scale;
    let gains = std::array::from_fn(|i| {
        let (k, ti) = bench::PI_GAINS[i];
        PiGains { prop_k: k * scale, integ_i: ti * scale }
    });
    let mut engine = LoopEngine::new(&plant, controllers_from_normalized(&gains, &scenario)?, &scenario)?;

    engine.add_fault(FaultSpec {
        kind: FaultKind::SupplyInterruption,
        target: FaultTarget::Channel(4),
        onset: 400.0,
        magnitude: 0.0,
        duration: Some(120.0),
    })?;

    println!("     t   ch5 meas  ch5 drive  ch6 meas");
    while engine.time() < scenario.duration {
        let tick = engine.tick()?;
        for e in &tick.events {
            println!("  event {:?} at {:.1}: {}", e.kind, e.t, e.detail);
        }
        let r = tick.row;
        if (r.t % 30.0).abs() < 1e-9 {
            println!("{:6.0} {:10.2} {:10.0} {:9.2}", r.t, r.measured[4], r.drive[4], r.measured[5]);
        }
    }
    Ok(())
}
