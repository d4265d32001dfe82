use proptest::prelude::*;
use thermotwin::plant::{FaultKind, FaultTarget};
use thermotwin_service::protocol::WireMessage;

fn temps() -> impl Strategy<Value = [f64; 16]> {
    prop::array::uniform16(-50.0f64..150.0)
}

fn target() -> impl Strategy<Value = FaultTarget> {
    prop_oneof![(0usize..16).prop_map(FaultTarget::Channel), Just(FaultTarget::all())]
}

fn kind() -> impl Strategy<Value = FaultKind> {
    prop_oneof![
        Just(FaultKind::GainDegradation),
        Just(FaultKind::SupplyInterruption),
        Just(FaultKind::SensorOffset)
    ]
}

pub fn command() -> impl Strategy<Value = WireMessage> {
    prop_oneof![
        (any::<u64>(), 0usize..64, -1e3f64..1e3).prop_map(|(seq, index, value)| WireMessage::Setpoint { seq, index, value }),
        (any::<u64>(), 0usize..64, 0.0f64..1e3, 0.0f64..1e2).prop_map(|(seq, index, prop_k, integ_i)| {
            WireMessage::Gains { seq, index, prop_k, integ_i }
        }),
        (any::<u64>(), kind(), target(), -5.0f64..5.0, prop::option::of(0.1f64..1e3)).prop_map(
            |(seq, kind, target, magnitude, duration)| WireMessage::Fault {
                seq,
                kind,
                target,
                magnitude,
                duration,
            }
        ),
        any::<u64>().prop_map(|seq| WireMessage::Pause { seq }),
        any::<u64>().prop_map(|seq| WireMessage::Resume { seq }),
        any::<u64>().prop_map(|seq| WireMessage::Reset { seq }),
        any::<u64>().prop_map(|seq| WireMessage::SnapshotRequest { seq }),
    ]
}

pub fn server_message() -> impl Strategy<Value = WireMessage> {
    prop_oneof![
        (0.0f64..1e5, temps(), any::<bool>(), prop::option::of(prop::collection::vec(-50.0f64..150.0, 4800)))
            .prop_map(|(t, points, ffc, image)| WireMessage::Frame { t, points, ffc, image }),
        any::<u64>().prop_map(|seq| WireMessage::Ack { seq }),
        (prop::option::of(any::<u64>()), ".{0,40}").prop_map(|(seq, reason)| WireMessage::Error { seq, reason }),
        (any::<u64>(), 0.0f64..1e5, any::<bool>(), temps(), temps(), temps(), any::<u64>()).prop_map(
            |(seq, t, paused, setpoints, measured, drives, dropped)| WireMessage::Snapshot {
                seq,
                t,
                paused,
                setpoints,
                measured,
                drives,
                gains: vec![[83.33, 1.5]; 16],
                dropped,
            }
        ),
    ]
}
