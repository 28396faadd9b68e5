//! Live telemetry and control over WebSocket.
//!
//! The loop runs paced on its own thread. Operator commands reach it over a
//! channel; telemetry leaves through a bounded tap, is encoded once by a
//! fan-out thread and queued to every connected client. Each message is a
//! single JSON object terminated by a newline.
//!
//! Inbound:
//! `{"type":"setpoint","rpm":40}`, `{"type":"rocker","on":false}`,
//! `{"type":"gains","ki":0.5,"kp":0}`.
//!
//! Outbound, at the telemetry rate:
//! `{"t":..,"theta_deg":..,"rpm_set":..,"rpm_meas":..,"error":..,"power_pct":..,
//! "status":"..","channels":[{"id":"LQ","active":..,"current_mA":..},..],
//! "pedal_N":[l,r],"mmg_env":[..]}`.

use std::io::ErrorKind;
use std::net::{SocketAddr, TcpListener, TcpStream};
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::mpsc::{self, Receiver, RecvTimeoutError, Sender, SyncSender, TrySendError};
use std::sync::{Arc, Mutex};
use std::thread::JoinHandle;
use std::time::Duration;

use serde::{Deserialize, Serialize};
use tungstenite::{Message, WebSocket};

use crate::error::{Error, Result};
use crate::plant::PlantParams;
use crate::rt::{
    InputSource, LoopConfig, LoopMetrics, LoopMode, OperatorCommand, RigLoop, StepRecord, TelemetryTap,
    DEFAULT_START_DEG,
};
use crate::stim::{ChannelId, MockStimulator, StimConfig};

const POLL_INTERVAL: Duration = Duration::from_millis(10);
const CLIENT_QUEUE: usize = 64;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "lowercase")]
pub enum Inbound {
    Setpoint { rpm: f64 },
    Rocker { on: bool },
    Gains { ki: f64, kp: f64 },
}

impl From<Inbound> for OperatorCommand {
    fn from(m: Inbound) -> Self {
        match m {
            Inbound::Setpoint { rpm } => OperatorCommand::Setpoint(rpm),
            Inbound::Rocker { on } => OperatorCommand::Rocker(on),
            Inbound::Gains { ki, kp } => OperatorCommand::Gains { ki, kp },
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChannelFrame {
    pub id: String,
    pub active: bool,
    #[serde(rename = "current_mA")]
    pub current_ma: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TelemetryFrame {
    pub t: f64,
    pub theta_deg: f64,
    pub rpm_set: f64,
    pub rpm_meas: f64,
    pub error: f64,
    pub power_pct: f64,
    pub status: String,
    pub channels: Vec<ChannelFrame>,
    #[serde(rename = "pedal_N")]
    pub pedal_n: [f64; 2],
    pub mmg_env: [f64; 4],
}

impl From<&StepRecord> for TelemetryFrame {
    fn from(r: &StepRecord) -> Self {
        Self {
            t: r.t_s,
            theta_deg: r.theta_deg,
            rpm_set: r.setpoint_rpm,
            rpm_meas: r.measured_rpm,
            error: r.error_rpm,
            power_pct: r.power_pct,
            status: r.status.as_str().to_string(),
            channels: ChannelId::ALL
                .iter()
                .map(|id| {
                    let c = r.channels[id.index()];
                    ChannelFrame {
                        id: id.label().to_string(),
                        active: c.active,
                        current_ma: c.current_ma,
                    }
                })
                .collect(),
            pedal_n: r.pedal_n,
            mmg_env: r.mmg_env,
        }
    }
}

/// Parses every non-empty line of an inbound message. Malformed lines are
/// logged and skipped.
pub fn parse_inbound(text: &str) -> Vec<Inbound> {
    text.lines()
        .filter(|l| !l.trim().is_empty())
        .filter_map(|l| match serde_json::from_str(l) {
            Ok(m) => Some(m),
            Err(e) => {
                log::warn!("ignoring inbound message {l:?}: {e}");
                None
            }
        })
        .collect()
}

pub fn encode_frame(rec: &StepRecord) -> String {
    let mut s = serde_json::to_string(&TelemetryFrame::from(rec)).expect("telemetry frame serializes");
    s.push('\n');
    s
}

#[derive(Debug, Clone)]
pub struct ServeOptions {
    pub params: PlantParams,
    pub channels: StimConfig,
    pub fs_hz: f64,
    pub telemetry_hz: f64,
    pub seed: u64,
    pub initial_setpoint_rpm: f64,
}

impl Default for ServeOptions {
    fn default() -> Self {
        Self {
            params: PlantParams::default(),
            channels: StimConfig::default(),
            fs_hz: 100.0,
            telemetry_hz: 10.0,
            seed: 0,
            initial_setpoint_rpm: 0.0,
        }
    }
}

struct ServeInputs {
    rx: Receiver<OperatorCommand>,
    stop: Arc<AtomicBool>,
}

impl InputSource for ServeInputs {
    fn poll(&mut self, _: u64, _: f64) -> Vec<OperatorCommand> {
        self.rx.try_iter().collect()
    }

    fn stop_requested(&self) -> bool {
        self.stop.load(Ordering::Relaxed)
    }
}

type Clients = Arc<Mutex<Vec<SyncSender<String>>>>;

/// A running server. Dropping it without [`shutdown`](Self::shutdown)
/// leaves the threads running.
pub struct ServeHandle {
    addr: SocketAddr,
    stop: Arc<AtomicBool>,
    loop_thread: JoinHandle<Result<LoopMetrics>>,
    workers: Vec<JoinHandle<()>>,
}

impl ServeHandle {
    pub fn local_addr(&self) -> SocketAddr {
        self.addr
    }

    /// Blocks until the loop ends on its own (only on a fault).
    pub fn wait(self) -> Result<LoopMetrics> {
        let out = self.loop_thread.join().expect("loop thread panicked");
        self.stop.store(true, Ordering::Relaxed);
        for w in self.workers {
            let _ = w.join();
        }
        out
    }

    pub fn shutdown(self) -> Result<LoopMetrics> {
        self.stop.store(true, Ordering::Relaxed);
        self.wait()
    }
}

/// Starts the loop, fan-out and accept threads on `listener`.
pub fn spawn(listener: TcpListener, opts: ServeOptions) -> Result<ServeHandle> {
    if !(opts.telemetry_hz > 0.0 && opts.telemetry_hz <= opts.fs_hz) {
        return Err(Error::Config("telemetry rate must be in (0, fs_hz]".into()));
    }
    let addr = listener.local_addr()?;
    listener.set_nonblocking(true)?;
    let stop = Arc::new(AtomicBool::new(false));
    let clients: Clients = Arc::default();
    let (cmd_tx, cmd_rx) = mpsc::channel();
    let (tel_tx, tel_rx) = mpsc::sync_channel(16);

    let mut rig = RigLoop::new(
        opts.params.clone(),
        opts.channels.clone(),
        DEFAULT_START_DEG,
        MockStimulator::with_capacity_limit(1000),
    )?;
    rig.setpoint_rpm = opts.initial_setpoint_rpm;
    let cfg = LoopConfig {
        fs_hz: opts.fs_hz,
        duration_s: 1e9,
        mode: LoopMode::Paced,
        seed: opts.seed,
        record_trace: false,
        ..LoopConfig::default()
    };
    cfg.validate()?;
    let every = (opts.fs_hz / opts.telemetry_hz).round().max(1.0) as u64;
    let loop_stop = stop.clone();
    let loop_thread = std::thread::Builder::new().name("rig-loop".into()).spawn(move || {
        let tap = TelemetryTap::new(tel_tx, every);
        let mut inputs = ServeInputs {
            rx: cmd_rx,
            stop: loop_stop.clone(),
        };
        let out = rig.run(&cfg, &mut inputs, Some(&tap));
        loop_stop.store(true, Ordering::Relaxed);
        if let Err(e) = &out {
            log::error!("loop stopped: {e}");
        }
        out.map(|o| o.metrics)
    })?;

    let fan_stop = stop.clone();
    let fan_clients = clients.clone();
    let fanout = std::thread::Builder::new()
        .name("telemetry".into())
        .spawn(move || fan_out(tel_rx, fan_clients, fan_stop))?;

    let acc_stop = stop.clone();
    let acceptor = std::thread::Builder::new()
        .name("accept".into())
        .spawn(move || accept_loop(listener, clients, cmd_tx, acc_stop))?;

    log::info!("serving on ws://{addr}");
    Ok(ServeHandle {
        addr,
        stop,
        loop_thread,
        workers: vec![fanout, acceptor],
    })
}

fn fan_out(rx: Receiver<StepRecord>, clients: Clients, stop: Arc<AtomicBool>) {
    while !stop.load(Ordering::Relaxed) {
        match rx.recv_timeout(POLL_INTERVAL) {
            Ok(rec) => {
                let frame = encode_frame(&rec);
                let mut list = clients.lock().expect("client list poisoned");
                list.retain(|tx| match tx.try_send(frame.clone()) {
                    Ok(()) | Err(TrySendError::Full(_)) => true,
                    Err(TrySendError::Disconnected(_)) => false,
                });
            }
            Err(RecvTimeoutError::Timeout) => {}
            Err(RecvTimeoutError::Disconnected) => break,
        }
    }
}

fn accept_loop(listener: TcpListener, clients: Clients, cmd_tx: Sender<OperatorCommand>, stop: Arc<AtomicBool>) {
    let mut sessions = Vec::new();
    while !stop.load(Ordering::Relaxed) {
        match listener.accept() {
            Ok((stream, peer)) => {
                let (tx, rx) = mpsc::sync_channel(CLIENT_QUEUE);
                let cmd_tx = cmd_tx.clone();
                let stop = stop.clone();
                match std::thread::Builder::new()
                    .name(format!("client-{peer}"))
                    .spawn(move || {
                        if let Err(e) = session(stream, rx, cmd_tx, stop) {
                            log::info!("client {peer} closed: {e}");
                        }
                    }) {
                    Ok(h) => {
                        clients.lock().expect("client list poisoned").push(tx);
                        sessions.push(h);
                        log::info!("client {peer} connected");
                    }
                    Err(e) => log::error!("cannot start session for {peer}: {e}"),
                }
            }
            Err(e) if e.kind() == ErrorKind::WouldBlock => std::thread::sleep(POLL_INTERVAL),
            Err(e) => {
                log::error!("accept failed: {e}");
                std::thread::sleep(POLL_INTERVAL);
            }
        }
    }
    for h in sessions {
        let _ = h.join();
    }
}

fn is_timeout(e: &tungstenite::Error) -> bool {
    matches!(e, tungstenite::Error::Io(io) if matches!(io.kind(), ErrorKind::WouldBlock | ErrorKind::TimedOut))
}

fn session(
    stream: TcpStream,
    outbound: Receiver<String>,
    cmd_tx: Sender<OperatorCommand>,
    stop: Arc<AtomicBool>,
) -> Result<()> {
    stream.set_nonblocking(false)?;
    stream.set_nodelay(true)?;
    let mut ws: WebSocket<TcpStream> = tungstenite::accept(stream).map_err(|e| match e {
        tungstenite::HandshakeError::Failure(e) => Error::from(e),
        tungstenite::HandshakeError::Interrupted(_) => Error::Config("handshake interrupted".into()),
    })?;
    ws.get_ref().set_read_timeout(Some(POLL_INTERVAL))?;
    while !stop.load(Ordering::Relaxed) {
        match ws.read() {
            Ok(Message::Text(text)) => {
                for m in parse_inbound(&text) {
                    if cmd_tx.send(m.into()).is_err() {
                        return Ok(());
                    }
                }
            }
            Ok(Message::Close(_)) => return Ok(()),
            Ok(_) => {}
            Err(e) if is_timeout(&e) => {}
            Err(e) => return Err(e.into()),
        }
        for frame in outbound.try_iter() {
            ws.send(Message::text(frame))?;
        }
    }
    let _ = ws.close(None);
    let _ = ws.flush();
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn inbound_schema() {
        let msgs = parse_inbound(
            "{\"type\":\"setpoint\",\"rpm\":40}\n{\"type\":\"rocker\",\"on\":false}\n{\"type\":\"gains\",\"ki\":0.5,\"kp\":0}\n",
        );
        assert_eq!(
            msgs,
            vec![
                Inbound::Setpoint { rpm: 40.0 },
                Inbound::Rocker { on: false },
                Inbound::Gains { ki: 0.5, kp: 0.0 },
            ]
        );
        assert!(parse_inbound("{\"type\":\"brake\"}").is_empty());
        assert!(parse_inbound("not json").is_empty());
    }

    #[test]
    fn inbound_serializes_to_wire_form() {
        assert_eq!(
            serde_json::to_string(&Inbound::Rocker { on: true }).unwrap(),
            "{\"type\":\"rocker\",\"on\":true}"
        );
    }
}
