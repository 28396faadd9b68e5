//! Counts per revolution the poller sees at each sampling frequency.

use fescycle::encoder::DEFAULT_CPR;
use fescycle::experiments::{count_loss_experiment, STUDY_RPMS};
use fescycle::rt::STUDY_FREQUENCIES_HZ;

fn main() -> fescycle::error::Result<()> {
    let rows = count_loss_experiment(&STUDY_FREQUENCIES_HZ, &STUDY_RPMS, DEFAULT_CPR, 10)?;
    for r in rows {
        println!(
            "{:6} Hz {:4} rpm: theoretical {:5}, observed mean {:8.1}",
            r.fs_hz,
            r.rpm,
            r.theoretical_counts,
            r.mean().unwrap_or(f64::NAN)
        );
    }
    Ok(())
}
