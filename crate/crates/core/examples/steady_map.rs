//! Open-loop steady-state cadence of the default plant at each fixed
//! power level.

use fescycle::calibrate::{steady_state_map, MapConfig};
use fescycle::plant::PlantParams;
use fescycle::stim::StimConfig;

fn main() -> fescycle::error::Result<()> {
    let map = steady_state_map(&PlantParams::default(), &StimConfig::default(), &MapConfig::default())?;
    for (power, rpm) in map.as_pairs() {
        println!("{power:5.1}%  {rpm:6.2} rpm");
    }
    println!("monotone: {}", map.is_monotone());
    Ok(())
}
