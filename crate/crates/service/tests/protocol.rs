mod common;

use common::strategies::{command, server_message};
use proptest::prelude::*;
use thermotwin_service::protocol::{parse_command, WireMessage};

proptest! {
    #[test]
    fn commands_round_trip(msg in command()) {
        let line = msg.to_line();
        let back: WireMessage = serde_json::from_str(&line).unwrap();
        prop_assert_eq!(&back, &msg);
        let cmd = parse_command(&line).unwrap();
        prop_assert_eq!(Some(cmd.seq), msg.command_seq());
        prop_assert_eq!(cmd.message, msg);
    }

    #[test]
    fn server_messages_round_trip(msg in server_message()) {
        let line = msg.to_line();
        prop_assert!(!line.contains('\n'));
        let back: WireMessage = serde_json::from_str(&line).unwrap();
        prop_assert_eq!(&back, &msg);
        // the server never accepts its own messages as commands
        prop_assert!(parse_command(&line).is_err());
    }
}

#[test]
fn every_type_tag_is_snake_case() {
    let tags = [
        (WireMessage::Ack { seq: 1 }, "ack"),
        (WireMessage::SnapshotRequest { seq: 1 }, "snapshot_request"),
        (WireMessage::Pause { seq: 1 }, "pause"),
        (WireMessage::Resume { seq: 1 }, "resume"),
        (WireMessage::Reset { seq: 1 }, "reset"),
    ];
    for (msg, tag) in tags {
        let v: serde_json::Value = serde_json::from_str(&msg.to_line()).unwrap();
        assert_eq!(v["type"], tag);
    }
}
