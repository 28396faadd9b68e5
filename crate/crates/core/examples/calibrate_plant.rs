//! Fits a deliberately weak plant to the default power/cadence targets.

use fescycle::calibrate::{calibrate_to_paper, CalibrationBounds, MapConfig, DEFAULT_TARGETS};
use fescycle::plant::PlantParams;
use fescycle::stim::StimConfig;

fn main() -> fescycle::error::Result<()> {
    let weak = PlantParams {
        viscous_b: 0.15,
        ..PlantParams::default()
    };
    let cal = calibrate_to_paper(
        &weak,
        &StimConfig::default(),
        &DEFAULT_TARGETS,
        &MapConfig::default(),
        &CalibrationBounds::default(),
    )?;
    println!("{} evaluations", cal.evaluations);
    println!(
        "viscous_b {:.4}, recruit threshold {:.1}%",
        cal.params.viscous_b, cal.params.recruit_threshold_pct
    );
    for fit in &cal.fits {
        println!("{fit:?}");
    }
    Ok(())
}
