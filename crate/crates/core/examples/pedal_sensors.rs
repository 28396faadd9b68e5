//! Calibrates both pedal FSRs with the weight set, then reads back forces,
//! and shows ambient cancellation on a synthesized MMG probe.

use fescycle::sensors::fsr::{default_pedal_sensors, force_from_voltage, fsr_voltage, PedalCalibration};
use fescycle::sensors::mmg::{mmg_denoise, mmg_envelope, mmg_synthesize, rms, MmgConfig};

fn main() -> fescycle::error::Result<()> {
    let (left, right) = default_pedal_sensors();
    let cal = PedalCalibration::calibrate(&left, &right, &PedalCalibration::default_weights())?;
    for force in [2.5, 17.0, 42.0, 58.0] {
        let l = force_from_voltage(fsr_voltage(force, &left), &cal.left);
        let r = force_from_voltage(fsr_voltage(force, &right), &cal.right);
        println!("{force:5.1} N -> left {l:6.2} N, right {r:6.2} N");
    }

    let cfg = MmgConfig::default();
    let n = cfg.fs_hz as usize * 2;
    for activation in [0.0, 0.5, 1.0] {
        let frame = mmg_synthesize(activation, 7, &cfg, n);
        let clean = mmg_denoise(&frame, cfg.c_amb)?;
        let env = mmg_envelope(&clean, cfg.fs_hz, cfg.envelope_window_ms)?;
        println!(
            "activation {activation:.1}: denoised rms {:.4} V, envelope {:.4} V",
            rms(&clean),
            env.last().copied().unwrap_or(0.0)
        );
    }
    Ok(())
}
