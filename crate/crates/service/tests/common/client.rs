use std::collections::HashMap;
use std::io::{BufRead, BufReader, Write};
use std::net::{SocketAddr, TcpStream};
use std::time::Duration;

use thermotwin_service::protocol::WireMessage;

/// Line-protocol subscriber used by the session tests.
pub struct Client {
    pub writer: TcpStream,
    reader: BufReader<TcpStream>,
}

impl Client {
    pub fn connect(addr: SocketAddr) -> Self {
        let s = TcpStream::connect(addr).unwrap();
        s.set_read_timeout(Some(Duration::from_secs(10))).unwrap();
        Self {
            writer: s.try_clone().unwrap(),
            reader: BufReader::new(s),
        }
    }

    pub fn send(&mut self, msg: &WireMessage) {
        self.send_raw(&msg.to_line());
    }

    pub fn send_raw(&mut self, line: &str) {
        self.writer.write_all(line.as_bytes()).unwrap();
        self.writer.write_all(b"\n").unwrap();
    }

    pub fn next(&mut self) -> Option<WireMessage> {
        let mut line = String::new();
        match self.reader.read_line(&mut line) {
            Ok(0) | Err(_) => None,
            Ok(_) => Some(serde_json::from_str(&line).unwrap()),
        }
    }

    pub fn next_frame(&mut self) -> Option<(f64, [f64; 16])> {
        loop {
            match self.next()? {
                WireMessage::Frame { t, points, .. } => return Some((t, points)),
                _ => continue,
            }
        }
    }

    /// Replies for `seqs`, skipping frames, until each has one.
    pub fn replies(&mut self, seqs: &[u64]) -> HashMap<u64, Vec<WireMessage>> {
        let mut got: HashMap<u64, Vec<WireMessage>> = HashMap::new();
        while seqs.iter().any(|s| !got.contains_key(s)) {
            match self.next().expect("connection open") {
                m @ WireMessage::Ack { seq } => got.entry(seq).or_default().push(m),
                m @ WireMessage::Error { seq: Some(seq), .. } => got.entry(seq).or_default().push(m),
                _ => {}
            }
        }
        got
    }
}
