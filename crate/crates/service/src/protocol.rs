//! Newline-delimited JSON messages shared by the TCP and WebSocket transports.
//!
//! Gains on the wire are in PWM counts per °C, the units of the live
//! controllers. Every command carries a `seq` and is answered by exactly one
//! `ack` or `error` with the same `seq`.

use serde::{Deserialize, Serialize};
use thermotwin::plant::{FaultKind, FaultTarget};
use thermotwin::CHANNELS;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum WireMessage {
    Frame {
        t: f64,
        points: [f64; CHANNELS],
        ffc: bool,
        /// Row-major 80×60, °C.
        #[serde(default, skip_serializing_if = "Option::is_none")]
        image: Option<Vec<f64>>,
    },
    Ack {
        seq: u64,
    },
    Error {
        /// Absent when the offending line carried no readable `seq`.
        #[serde(default, skip_serializing_if = "Option::is_none")]
        seq: Option<u64>,
        reason: String,
    },
    Setpoint {
        seq: u64,
        index: usize,
        value: f64,
    },
    Gains {
        seq: u64,
        index: usize,
        prop_k: f64,
        integ_i: f64,
    },
    /// Starts now and lasts `duration` seconds, or forever.
    Fault {
        seq: u64,
        kind: FaultKind,
        target: FaultTarget,
        #[serde(default)]
        magnitude: f64,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        duration: Option<f64>,
    },
    Pause {
        seq: u64,
    },
    Resume {
        seq: u64,
    },
    Reset {
        seq: u64,
    },
    SnapshotRequest {
        seq: u64,
    },
    Snapshot {
        seq: u64,
        t: f64,
        paused: bool,
        setpoints: [f64; CHANNELS],
        measured: [f64; CHANNELS],
        drives: [f64; CHANNELS],
        /// `[prop_k, integ_i]` per channel, counts per °C.
        gains: Vec<[f64; 2]>,
        /// Frames dropped so far for the requesting subscriber.
        dropped: u64,
    },
}

impl WireMessage {
    /// Sequence number of a client command, `None` for server messages.
    pub fn command_seq(&self) -> Option<u64> {
        match *self {
            Self::Setpoint { seq, .. }
            | Self::Gains { seq, .. }
            | Self::Fault { seq, .. }
            | Self::Pause { seq }
            | Self::Resume { seq }
            | Self::Reset { seq }
            | Self::SnapshotRequest { seq } => Some(seq),
            Self::Frame { .. } | Self::Ack { .. } | Self::Error { .. } | Self::Snapshot { .. } => None,
        }
    }

    pub fn to_line(&self) -> String {
        serde_json::to_string(self).expect("wire messages always serialize")
    }
}

/// A parsed client command together with its sequence number.
#[derive(Debug, Clone, PartialEq)]
pub struct Command {
    pub seq: u64,
    pub message: WireMessage,
}

/// Parses one client line. On failure returns the error reply to send.
pub fn parse_command(line: &str) -> Result<Command, WireMessage> {
    let value: serde_json::Value = serde_json::from_str(line).map_err(|e| WireMessage::Error {
        seq: None,
        reason: format!("malformed JSON: {e}"),
    })?;
    let seq = value.get("seq").and_then(|s| s.as_u64());
    let message: WireMessage = serde_json::from_value(value).map_err(|e| WireMessage::Error {
        seq,
        reason: e.to_string(),
    })?;
    match message.command_seq() {
        Some(seq) => Ok(Command { seq, message }),
        None => Err(WireMessage::Error {
            seq,
            reason: "not a client command".into(),
        }),
    }
}
