//! Spins a simulated 256-CPR encoder at 45 RPM, decodes the A/B/Z lines
//! and prints the cadence estimate from each RPM model.

use fescycle::encoder::{EncoderState, QuadState, RpmModel, DEFAULT_CPR};

fn main() -> fescycle::error::Result<()> {
    let fs_hz = 2000.0;
    let rpm = 45.0;
    let counts_per_sample = rpm / 60.0 * f64::from(DEFAULT_CPR * 4) / fs_hz;

    let mut enc = EncoderState::at_index(DEFAULT_CPR);
    let mut position = 0.0;
    for _ in 0..(fs_hz * 6.0) as usize {
        position += counts_per_sample;
        enc.poll(QuadState::from_count(position as i64, DEFAULT_CPR));
    }

    println!("angle {:.1} deg", enc.angle_deg());
    for model in [RpmModel::Instantaneous, RpmModel::Avg2, RpmModel::Avg3] {
        println!("{model:?}: {:.3} rpm", enc.estimate_rpm(model, fs_hz)?);
    }
    Ok(())
}
