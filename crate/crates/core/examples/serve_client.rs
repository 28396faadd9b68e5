//! Starts the telemetry server on an ephemeral port, connects a WebSocket
//! client, asks for 50 RPM and prints a few seconds of frames.

use std::net::TcpListener;
use std::time::{Duration, Instant};

use fescycle::serve::{self, ServeOptions, TelemetryFrame};
use tungstenite::Message;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let handle = serve::spawn(TcpListener::bind("127.0.0.1:0")?, ServeOptions::default())?;
    let (mut ws, _) = tungstenite::connect(format!("ws://{}", handle.local_addr()))?;
    ws.send(Message::text(r#"{"type":"setpoint","rpm":50}"#))?;

    let until = Instant::now() + Duration::from_secs(5);
    while Instant::now() < until {
        if let Message::Text(text) = ws.read()? {
            let f: TelemetryFrame = serde_json::from_str(text.trim_end())?;
            println!(
                "t={:5.2}  set {:4.0}  meas {:6.2}  power {:5.1}%  {}",
                f.t, f.rpm_set, f.rpm_meas, f.power_pct, f.status
            );
        }
    }
    ws.close(None)?;
    let metrics = handle.shutdown()?;
    println!("{} samples, {} overruns", metrics.executed_samples, metrics.overruns);
    Ok(())
}
