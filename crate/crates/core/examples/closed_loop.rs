//! Closed-loop cadence control: holds 50 RPM on the default rig and
//! prints the trajectory once per second.

use fescycle::controller::{ConvergenceCriteria, ControllerGains};
use fescycle::experiments::convergence_run;
use fescycle::plant::PlantParams;
use fescycle::rt::LoopConfig;
use fescycle::stim::StimConfig;

fn main() -> fescycle::error::Result<()> {
    let cfg = LoopConfig { duration_s: 60.0, ..LoopConfig::default() };
    let run = convergence_run(
        &PlantParams::default(),
        &StimConfig::default(),
        50.0,
        &cfg,
        &ControllerGains::default(),
        &ConvergenceCriteria::default(),
    )?;
    for rec in run.trace.iter().step_by(cfg.fs_hz as usize) {
        println!(
            "t={:5.1}s  rpm {:6.2}  power {:5.1}%  {}",
            rec.t_s,
            rec.measured_rpm,
            rec.power_pct,
            rec.status.as_str()
        );
    }
    println!(
        "{}: final power {:.1}%, settled after {:?} s",
        run.status.as_str(),
        run.final_power_pct,
        run.settle_time_s
    );
    Ok(())
}
