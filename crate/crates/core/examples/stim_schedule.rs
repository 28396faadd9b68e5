//! Prints which channels fire, and at what current, around one crank
//! revolution at 60 % power.

use fescycle::stim::{build_commands, StimConfig};

fn main() {
    let cfg = StimConfig::default();
    let labels: Vec<&str> = cfg.channels.iter().map(|c| c.id.label()).collect();
    println!("angle  {}", labels.join("      "));
    for angle in (0..360).step_by(15) {
        let row: Vec<String> = build_commands(f64::from(angle), 60.0, &cfg.channels)
            .iter()
            .map(|c| format!("{:6.1}", c.current_ma))
            .collect();
        println!("{angle:5}  {}", row.join(" "));
    }
}
