//! Auxiliary sensing: pedal force through FSR voltage dividers and
//! dual-microphone MMG probes. Neither stream feeds the control law; both
//! are logged alongside it.

pub mod fsr;
pub mod mmg;

pub use fsr::{calibrate_fsr, force_from_voltage, fsr_voltage, CalibrationTable, FsrConfig, PedalCalibration};
pub use mmg::{
    mmg_denoise, mmg_envelope, mmg_synthesize, EnvelopeTracker, MmgConfig, MmgFrame, MmgSynth,
    MMG_PROBES,
};
