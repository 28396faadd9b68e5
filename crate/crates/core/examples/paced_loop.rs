//! Runs the loop against the wall clock at each study frequency and
//! reports deadline overruns.

use fescycle::experiments::paced_experiment;
use fescycle::plant::PlantParams;
use fescycle::rt::STUDY_FREQUENCIES_HZ;
use fescycle::stim::StimConfig;

fn main() -> fescycle::error::Result<()> {
    let rows = paced_experiment(
        &PlantParams::default(),
        &StimConfig::default(),
        &STUDY_FREQUENCIES_HZ,
        1.0,
        40.0,
        0,
    )?;
    for r in rows {
        let m = r.metrics;
        println!(
            "{:6} Hz: {}/{} samples, {} overruns, {:.3} s wall",
            r.fs_hz, m.executed_samples, m.requested_samples, m.overruns, m.wall_time_s
        );
    }
    Ok(())
}
