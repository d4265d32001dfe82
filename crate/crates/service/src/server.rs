//! Live session: one simulation thread, a command queue and per-subscriber
//! outboxes. Raw TCP clients speak newline-delimited JSON; clients whose
//! first bytes are `GET ` are upgraded to WebSocket and get the same
//! messages as text frames.

use std::collections::VecDeque;
use std::io::{BufRead, BufReader, ErrorKind, Write};
use std::net::{SocketAddr, TcpListener, TcpStream};
use std::sync::atomic::{AtomicBool, AtomicU64, Ordering};
use std::sync::{Arc, Condvar, Mutex};
use std::thread::{self, JoinHandle};
use std::time::{Duration, Instant};

use anyhow::{anyhow, Context, Result};
use crossbeam_channel::{Receiver, RecvTimeoutError, Sender};
use thermotwin::looprt::{controllers_from_normalized, LoopEngine, RunLog};
use thermotwin::plant::{FaultSpec, PlantMatrix};
use thermotwin::tuner::PiGains;
use thermotwin::CHANNELS;
use tungstenite::Message;

use crate::config::SessionConfig;
use crate::protocol::{parse_command, Command, WireMessage};

const POLL: Duration = Duration::from_millis(20);

struct Outbox {
    queue: Mutex<VecDeque<(bool, String)>>,
    ready: Condvar,
    capacity: usize,
    dropped: AtomicU64,
    closed: AtomicBool,
}

impl Outbox {
    fn new(capacity: usize) -> Self {
        Self {
            queue: Mutex::new(VecDeque::new()),
            ready: Condvar::new(),
            capacity,
            dropped: AtomicU64::new(0),
            closed: AtomicBool::new(false),
        }
    }

    /// Queues a frame, evicting the oldest queued frame when full.
    fn push_frame(&self, line: &str) {
        let mut q = self.queue.lock().unwrap();
        if q.iter().filter(|(frame, _)| *frame).count() >= self.capacity {
            if let Some(pos) = q.iter().position(|(frame, _)| *frame) {
                q.remove(pos);
                self.dropped.fetch_add(1, Ordering::Relaxed);
            }
        }
        q.push_back((true, line.to_string()));
        self.ready.notify_one();
    }

    /// Replies are never dropped.
    fn push_reply(&self, msg: &WireMessage) {
        self.queue.lock().unwrap().push_back((false, msg.to_line()));
        self.ready.notify_one();
    }

    fn pop_wait(&self, timeout: Duration) -> Option<String> {
        let q = self.queue.lock().unwrap();
        let (mut q, _) = self.ready.wait_timeout_while(q, timeout, |q| q.is_empty()).unwrap();
        q.pop_front().map(|(_, s)| s)
    }

    fn drain(&self) -> Vec<String> {
        self.queue.lock().unwrap().drain(..).map(|(_, s)| s).collect()
    }
}

struct Shared {
    subscribers: Mutex<Vec<(u64, Arc<Outbox>)>>,
    stop: AtomicBool,
    next_id: AtomicU64,
    capacity: usize,
}

impl Shared {
    fn outbox(&self, id: u64) -> Option<Arc<Outbox>> {
        self.subscribers
            .lock()
            .unwrap()
            .iter()
            .find(|(i, _)| *i == id)
            .map(|(_, o)| o.clone())
    }

    fn broadcast(&self, line: &str) {
        for (_, o) in self.subscribers.lock().unwrap().iter() {
            o.push_frame(line);
        }
    }

    fn register(&self) -> (u64, Arc<Outbox>) {
        let id = self.next_id.fetch_add(1, Ordering::Relaxed);
        let o = Arc::new(Outbox::new(self.capacity));
        self.subscribers.lock().unwrap().push((id, o.clone()));
        (id, o)
    }

    fn unregister(&self, id: u64) {
        let mut subs = self.subscribers.lock().unwrap();
        if let Some(pos) = subs.iter().position(|(i, _)| *i == id) {
            subs[pos].1.closed.store(true, Ordering::Relaxed);
            subs[pos].1.ready.notify_all();
            subs.remove(pos);
        }
    }
}

/// A running session. Dropping it without [`wait`](Self::wait) detaches the threads.
pub struct ServerHandle {
    addr: SocketAddr,
    shared: Arc<Shared>,
    sim: Option<JoinHandle<Result<RunLog>>>,
    acceptor: Option<JoinHandle<()>>,
}

impl ServerHandle {
    pub fn local_addr(&self) -> SocketAddr {
        self.addr
    }

    pub fn subscriber_count(&self) -> usize {
        self.shared.subscribers.lock().unwrap().len()
    }

    /// Frames dropped so far, per connected subscriber in connection order.
    pub fn dropped_frames(&self) -> Vec<u64> {
        self.shared
            .subscribers
            .lock()
            .unwrap()
            .iter()
            .map(|(_, o)| o.dropped.load(Ordering::Relaxed))
            .collect()
    }

    pub fn stop(&self) {
        self.shared.stop.store(true, Ordering::Relaxed);
    }

    /// Blocks until the scenario ends or [`stop`](Self::stop) is called and
    /// returns the log of the timeline since the last reset.
    pub fn wait(mut self) -> Result<RunLog> {
        let log = self
            .sim
            .take()
            .expect("joined once")
            .join()
            .map_err(|_| anyhow!("simulation thread panicked"))?;
        self.stop();
        if let Some(a) = self.acceptor.take() {
            let _ = a.join();
        }
        log
    }
}

/// Binds the endpoint and starts streaming `session.scenario` on `plant`
/// under PI control with normalized `gains`.
pub fn serve(plant: &PlantMatrix, gains: &[PiGains; CHANNELS], session: SessionConfig) -> Result<ServerHandle> {
    session.validate()?;
    let make_engine = {
        let plant = plant.clone();
        let gains = *gains;
        let scenario = session.scenario.clone();
        move || -> Result<LoopEngine> {
            Ok(LoopEngine::new(
                &plant,
                controllers_from_normalized(&gains, &scenario)?,
                &scenario,
            )?)
        }
    };
    let engine = make_engine()?;
    let listener = TcpListener::bind(&session.listen_endpoint)
        .with_context(|| format!("binding {}", session.listen_endpoint))?;
    let addr = listener.local_addr()?;
    listener.set_nonblocking(true)?;

    let shared = Arc::new(Shared {
        subscribers: Mutex::new(Vec::new()),
        stop: AtomicBool::new(false),
        next_id: AtomicU64::new(0),
        capacity: session.outbox_capacity,
    });
    let (tx, rx) = crossbeam_channel::unbounded();

    let acceptor = {
        let shared = shared.clone();
        thread::spawn(move || accept_loop(listener, shared, tx))
    };
    let sim = {
        let shared = shared.clone();
        thread::spawn(move || {
            let out = SimLoop {
                engine,
                make_engine: Box::new(make_engine),
                session,
                shared: shared.clone(),
                commands: rx,
            }
            .run();
            shared.stop.store(true, Ordering::Relaxed);
            out
        })
    };
    Ok(ServerHandle {
        addr,
        shared,
        sim: Some(sim),
        acceptor: Some(acceptor),
    })
}

struct SimLoop {
    engine: LoopEngine,
    make_engine: Box<dyn Fn() -> Result<LoopEngine> + Send>,
    session: SessionConfig,
    shared: Arc<Shared>,
    commands: Receiver<(u64, Command)>,
}

/// Maps simulated time to wall-clock deadlines.
struct Pacer {
    wall0: Instant,
    sim0: f64,
    scale: f64,
}

impl Pacer {
    fn new(sim0: f64, scale: f64) -> Self {
        Self {
            wall0: Instant::now(),
            sim0,
            scale,
        }
    }

    fn wait_for(&self, t: f64, stop: &AtomicBool) {
        if !self.scale.is_finite() {
            return;
        }
        let due = self.wall0 + Duration::from_secs_f64(((t - self.sim0) / self.scale).max(0.0));
        loop {
            let now = Instant::now();
            if now >= due || stop.load(Ordering::Relaxed) {
                return;
            }
            thread::sleep((due - now).min(Duration::from_millis(50)));
        }
    }
}

struct Timeline {
    log: RunLog,
    periods: usize,
    last_slot: i64,
    paused: bool,
    pacer: Pacer,
}

impl SimLoop {
    fn run(mut self) -> Result<RunLog> {
        let ts = self.session.scenario.ts_control;
        let total = (self.session.scenario.duration / ts).round() as usize;
        let mut tl = self.fresh_timeline();
        while tl.periods < total && !self.shared.stop.load(Ordering::Relaxed) {
            // commands are applied only here, between control periods
            while let Ok((client, cmd)) = self.commands.try_recv() {
                self.apply(client, cmd, &mut tl)?;
            }
            if tl.paused {
                match self.commands.recv_timeout(Duration::from_millis(50)) {
                    Ok((client, cmd)) => self.apply(client, cmd, &mut tl)?,
                    Err(RecvTimeoutError::Timeout) => {}
                    Err(RecvTimeoutError::Disconnected) => break,
                }
                continue;
            }
            let tick = self.engine.tick()?;
            tl.log.rows.push(tick.row);
            tl.log.events.extend(tick.events);
            tl.periods += 1;
            for frame in tick.frames {
                let slot = (frame.timestamp * self.session.stream_rate + 1e-6).floor() as i64;
                if slot <= tl.last_slot {
                    continue;
                }
                tl.last_slot = slot;
                tl.pacer.wait_for(frame.timestamp, &self.shared.stop);
                let msg = WireMessage::Frame {
                    t: frame.timestamp,
                    points: frame.points,
                    ffc: frame.ffc_event,
                    image: frame.image,
                };
                self.shared.broadcast(&msg.to_line());
            }
        }
        Ok(tl.log)
    }

    fn fresh_timeline(&self) -> Timeline {
        Timeline {
            log: RunLog::default(),
            periods: 0,
            last_slot: -1,
            paused: false,
            pacer: Pacer::new(self.engine.time(), self.session.time_scale),
        }
    }

    fn apply(&mut self, client: u64, cmd: Command, tl: &mut Timeline) -> Result<()> {
        let seq = cmd.seq;
        let result: thermotwin::Result<Option<WireMessage>> = match cmd.message {
            WireMessage::Setpoint { index, value, .. } => self.engine.set_setpoint(index, value).map(|_| None),
            WireMessage::Gains {
                index, prop_k, integ_i, ..
            } => PiGains::new(prop_k, integ_i)
                .and_then(|g| self.engine.set_gains(index, g))
                .map(|_| None),
            WireMessage::Fault {
                kind,
                target,
                magnitude,
                duration,
                ..
            } => self
                .engine
                .add_fault(FaultSpec {
                    kind,
                    target,
                    onset: self.engine.time(),
                    magnitude,
                    duration,
                })
                .map(|_| None),
            WireMessage::Pause { .. } => {
                tl.paused = true;
                Ok(None)
            }
            WireMessage::Resume { .. } => {
                if tl.paused {
                    tl.paused = false;
                    tl.pacer = Pacer::new(self.engine.time(), self.session.time_scale);
                }
                Ok(None)
            }
            WireMessage::Reset { .. } => {
                self.engine = (self.make_engine)()?;
                *tl = self.fresh_timeline();
                Ok(None)
            }
            WireMessage::SnapshotRequest { .. } => {
                let last = tl.log.rows.last();
                let ambient = self.session.scenario.ambient;
                Ok(Some(WireMessage::Snapshot {
                    seq,
                    t: self.engine.time(),
                    paused: tl.paused,
                    setpoints: std::array::from_fn(|i| self.engine.setpoint(i)),
                    measured: last.map_or([ambient; CHANNELS], |r| r.measured),
                    drives: last.map_or([0.0; CHANNELS], |r| r.drive),
                    gains: self
                        .engine
                        .controllers()
                        .iter()
                        .map(|c| [c.gains.prop_k, c.gains.integ_i])
                        .collect(),
                    dropped: self
                        .shared
                        .outbox(client)
                        .map_or(0, |o| o.dropped.load(Ordering::Relaxed)),
                }))
            }
            _ => unreachable!("parse_command only yields client commands"),
        };
        if let Some(out) = self.shared.outbox(client) {
            match result {
                Ok(extra) => {
                    out.push_reply(&WireMessage::Ack { seq });
                    if let Some(m) = extra {
                        out.push_reply(&m);
                    }
                }
                Err(e) => out.push_reply(&WireMessage::Error {
                    seq: Some(seq),
                    reason: e.to_string(),
                }),
            }
        }
        Ok(())
    }
}

fn accept_loop(listener: TcpListener, shared: Arc<Shared>, tx: Sender<(u64, Command)>) {
    while !shared.stop.load(Ordering::Relaxed) {
        match listener.accept() {
            Ok((stream, _)) => {
                let shared = shared.clone();
                let tx = tx.clone();
                thread::spawn(move || {
                    let _ = handle_client(stream, shared, tx);
                });
            }
            Err(e) if e.kind() == ErrorKind::WouldBlock => thread::sleep(POLL),
            Err(_) => thread::sleep(POLL),
        }
    }
}

/// Whether the client opened with an HTTP upgrade request. A silent client
/// is treated as a raw subscriber after a short wait.
fn is_websocket(stream: &TcpStream) -> std::io::Result<bool> {
    stream.set_read_timeout(Some(Duration::from_millis(200)))?;
    let deadline = Instant::now() + Duration::from_millis(200);
    let mut buf = [0u8; 4];
    loop {
        match stream.peek(&mut buf) {
            Ok(0) => return Ok(false),
            Ok(n) if n >= 4 || !b"GET ".starts_with(&buf[..n]) => return Ok(&buf == b"GET "),
            Ok(_) => {}
            Err(e) if matches!(e.kind(), ErrorKind::WouldBlock | ErrorKind::TimedOut) => return Ok(false),
            Err(e) => return Err(e),
        }
        if Instant::now() >= deadline {
            return Ok(false);
        }
        thread::sleep(Duration::from_millis(5));
    }
}

fn handle_client(stream: TcpStream, shared: Arc<Shared>, tx: Sender<(u64, Command)>) -> Result<()> {
    stream.set_nonblocking(false)?;
    stream.set_nodelay(true)?;
    if is_websocket(&stream)? {
        stream.set_read_timeout(None)?;
        let ws = tungstenite::accept(stream).map_err(|e| anyhow!("websocket handshake: {e}"))?;
        ws.get_ref().set_read_timeout(Some(POLL))?;
        let (id, outbox) = shared.register();
        let out = websocket_session(ws, &outbox, &shared, &tx, id);
        shared.unregister(id);
        out
    } else {
        stream.set_read_timeout(None)?;
        let (id, outbox) = shared.register();
        let writer = {
            let mut w = stream.try_clone()?;
            let outbox = outbox.clone();
            let shared = shared.clone();
            thread::spawn(move || {
                while !outbox.closed.load(Ordering::Relaxed) && !shared.stop.load(Ordering::Relaxed) {
                    if let Some(line) = outbox.pop_wait(Duration::from_millis(100)) {
                        if w.write_all(line.as_bytes()).and_then(|_| w.write_all(b"\n")).is_err() {
                            break;
                        }
                    }
                }
                let _ = w.shutdown(std::net::Shutdown::Both);
            })
        };
        let reader = BufReader::new(stream);
        for line in reader.lines() {
            let Ok(line) = line else { break };
            if line.trim().is_empty() {
                continue;
            }
            submit(&line, &outbox, &tx, id);
        }
        shared.unregister(id);
        let _ = writer.join();
        Ok(())
    }
}

fn submit(line: &str, outbox: &Outbox, tx: &Sender<(u64, Command)>, id: u64) {
    match parse_command(line) {
        Ok(cmd) => {
            let _ = tx.send((id, cmd));
        }
        Err(reply) => outbox.push_reply(&reply),
    }
}

fn websocket_session(
    mut ws: tungstenite::WebSocket<TcpStream>,
    outbox: &Outbox,
    shared: &Shared,
    tx: &Sender<(u64, Command)>,
    id: u64,
) -> Result<()> {
    loop {
        if shared.stop.load(Ordering::Relaxed) {
            let _ = ws.close(None);
            let _ = ws.flush();
            return Ok(());
        }
        for line in outbox.drain() {
            ws.write(Message::Text(line))?;
        }
        match ws.flush() {
            Ok(()) => {}
            Err(tungstenite::Error::Io(e)) if matches!(e.kind(), ErrorKind::WouldBlock | ErrorKind::TimedOut) => {}
            Err(e) => return Err(e.into()),
        }
        match ws.read() {
            Ok(Message::Text(text)) => submit(&text, outbox, tx, id),
            Ok(Message::Close(_)) => {}
            Ok(_) => {}
            Err(tungstenite::Error::Io(e)) if matches!(e.kind(), ErrorKind::WouldBlock | ErrorKind::TimedOut) => {}
            Err(tungstenite::Error::ConnectionClosed | tungstenite::Error::AlreadyClosed) => return Ok(()),
            Err(e) => return Err(e.into()),
        }
    }
}
