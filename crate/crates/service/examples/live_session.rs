//! Starts a session in-process at 20× speed, subscribes over TCP, raises one
//! setpoint, retunes another channel and asks for a snapshot.

use std::io::{BufRead, BufReader, Write};
use std::net::TcpStream;

use thermotwin_service::config::Config;
use thermotwin_service::protocol::WireMessage;
use thermotwin_service::server::serve;
use thermotwin_service::workflows;

fn main() -> anyhow::Result<()> {
    let mut cfg = Config::default();
    cfg.scenario.duration = 300.0;
    cfg.scenario.setpoint = cfg.ambient;
    let mut session = cfg.session(20.0);
    session.listen_endpoint = "127.0.0.1:0".into();
    let handle = serve(&workflows::plant(&cfg)?, &workflows::gains(&cfg)?, session)?;
    println!("listening on {}", handle.local_addr());

    let stream = TcpStream::connect(handle.local_addr())?;
    let mut writer = stream.try_clone()?;
    let commands = [
        WireMessage::Setpoint { seq: 1, index: 0, value: 30.0 },
        WireMessage::Gains { seq: 2, index: 1, prop_k: 80.0, integ_i: 1.2 },
        WireMessage::Setpoint { seq: 3, index: 99, value: 30.0 },
    ];
    for c in &commands {
        writeln!(writer, "{}", c.to_line())?;
    }

    let mut asked = false;
    let mut next_print = 0.0;
    for line in BufReader::new(stream).lines() {
        match serde_json::from_str::<WireMessage>(&line?)? {
            WireMessage::Frame { t, points, .. } => {
                if t >= next_print {
                    next_print += 20.0;
                    println!("t={t:6.1}  ch1 {:5.2}  ch2 {:5.2}", points[0], points[1]);
                }
                if t > 200.0 && !asked {
                    writeln!(writer, "{}", WireMessage::SnapshotRequest { seq: 4 }.to_line())?;
                    asked = true;
                }
            }
            WireMessage::Snapshot { t, measured, gains, dropped, .. } => {
                println!("snapshot at {t:.1}: ch1 {:.2} gains {:?}, dropped {dropped}", measured[0], gains[1]);
            }
            other => println!("reply: {}", other.to_line()),
        }
    }
    let log = handle.wait()?;
    println!("{} control periods logged, {} events", log.rows.len(), log.events.len());
    Ok(())
}
