//! Watches a running `thermotwin serve` session and prints a one-line summary
//! per second of frames.
//!
//! `cargo run --example watch -- 127.0.0.1:7878` reads newline-delimited
//! JSON; add `ws` as a second argument to subscribe over WebSocket instead.

use std::io::{BufRead, BufReader};
use std::net::TcpStream;

use thermotwin_service::protocol::WireMessage;

fn summarize(msg: WireMessage, last: &mut f64) {
    if let WireMessage::Frame { t, points, ffc, .. } = msg {
        if t - *last >= 1.0 || ffc {
            let max = points.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let min = points.iter().copied().fold(f64::INFINITY, f64::min);
            println!("t={t:8.2}  min {min:6.2}  max {max:6.2}{}", if ffc { "  ffc" } else { "" });
            *last = t;
        }
    }
}

fn main() -> anyhow::Result<()> {
    let mut args = std::env::args().skip(1);
    let addr = args.next().unwrap_or_else(|| "127.0.0.1:7878".into());
    let mut last = f64::NEG_INFINITY;
    if args.next().as_deref() == Some("ws") {
        let (mut ws, _) = tungstenite::connect(format!("ws://{addr}"))?;
        loop {
            match ws.read() {
                Ok(tungstenite::Message::Text(text)) => summarize(serde_json::from_str(&text)?, &mut last),
                Ok(tungstenite::Message::Close(_)) | Err(_) => break,
                Ok(_) => {}
            }
        }
    } else {
        for line in BufReader::new(TcpStream::connect(&addr)?).lines() {
            summarize(serde_json::from_str(&line?)?, &mut last);
        }
    }
    Ok(())
}
