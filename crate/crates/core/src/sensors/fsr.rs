//! Force sensing resistor read through a voltage divider.
//!
//! The FSR sits on the high side of the divider and the fixed resistor on the
//! low side, so output voltage rises with force:
//! `V = vcc * r_fixed / (r_fixed + R(F))` with `R(F) = k_fsr / F^alpha`.

use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Spacing of the calibration weights.
pub const WEIGHT_STEP_N: f64 = 5.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FsrConfig {
    pub vcc: f64,
    pub r_fixed: f64,
    /// Ohm·newton^alpha.
    pub k_fsr: f64,
    pub alpha: f64,
    /// Below this force the sensor reads as open circuit.
    pub f_min: f64,
}

impl Default for FsrConfig {
    fn default() -> Self {
        Self {
            vcc: 5.0,
            r_fixed: 1_000.0,
            k_fsr: 300_000.0,
            alpha: 1.0,
            f_min: 0.05,
        }
    }
}

impl FsrConfig {
    pub fn validate(&self) -> Result<()> {
        let positive = [self.vcc, self.r_fixed, self.k_fsr, self.alpha, self.f_min];
        if positive.iter().any(|v| !(*v > 0.0)) {
            return Err(Error::Config("FSR parameters must be positive".into()));
        }
        if !(0.5..=1.5).contains(&self.alpha) {
            return Err(Error::Config(format!("FSR alpha {} outside [0.5, 1.5]", self.alpha)));
        }
        Ok(())
    }
}

pub fn fsr_voltage(force: f64, cfg: &FsrConfig) -> f64 {
    if force < cfg.f_min {
        return 0.0;
    }
    let r = cfg.k_fsr / force.powf(cfg.alpha);
    cfg.vcc * cfg.r_fixed / (cfg.r_fixed + r)
}

/// 1D lookup from divider voltage to force.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CalibrationTable {
    points: Vec<(f64, f64)>,
}

impl CalibrationTable {
    /// Validates `(force_N, voltage_V)` knots.
    pub fn new(points: Vec<(f64, f64)>) -> Result<Self> {
        if points.len() < 3 {
            return Err(Error::Calibration(format!(
                "need at least 3 points, got {}",
                points.len()
            )));
        }
        if points.iter().any(|(f, v)| !f.is_finite() || !v.is_finite()) {
            return Err(Error::Calibration("non-finite calibration point".into()));
        }
        if points.windows(2).any(|w| w[1].0 <= w[0].0) {
            return Err(Error::Calibration("forces must be strictly increasing".into()));
        }
        let rising = points.windows(2).all(|w| w[1].1 > w[0].1);
        let falling = points.windows(2).all(|w| w[1].1 < w[0].1);
        if !rising && !falling {
            return Err(Error::Calibration("voltages are not strictly monotone".into()));
        }
        Ok(Self { points })
    }

    pub fn points(&self) -> &[(f64, f64)] {
        &self.points
    }

    pub fn force_range(&self) -> (f64, f64) {
        (self.points[0].0, self.points[self.points.len() - 1].0)
    }

    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["force_N", "voltage_V"])?;
        for (f, v) in &self.points {
            w.write_record([f.to_string(), v.to_string()])?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn read_csv<R: Read>(input: R) -> Result<Self> {
        let mut r = csv::Reader::from_reader(input);
        let mut points = Vec::new();
        for rec in r.deserialize() {
            let (f, v): (f64, f64) = rec?;
            points.push((f, v));
        }
        Self::new(points)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        self.write_csv(std::fs::File::create(path)?)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::read_csv(std::fs::File::open(path)?)
    }
}

/// Builds a lookup table from dead-weight loading at 5 N steps.
pub fn calibrate_fsr(weights: &[f64], cfg: &FsrConfig) -> Result<CalibrationTable> {
    if weights.len() < 3 {
        return Err(Error::Calibration(format!(
            "need at least 3 weights, got {}",
            weights.len()
        )));
    }
    if weights.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::Calibration("weights must be sorted ascending".into()));
    }
    let first = weights[0];
    if first.abs() > 1e-9 && (first - WEIGHT_STEP_N).abs() > 1e-9 {
        return Err(Error::Calibration(format!("first weight {first} N is not 0 or 5 N")));
    }
    if weights
        .windows(2)
        .any(|w| ((w[1] - w[0]) - WEIGHT_STEP_N).abs() > 1e-9)
    {
        return Err(Error::Calibration("weights are not spaced at 5 N".into()));
    }
    let points = weights.iter().map(|&f| (f, fsr_voltage(f, cfg))).collect();
    CalibrationTable::new(points)
}

/// Piecewise-linear inverse lookup, clamped to the end forces.
pub fn force_from_voltage(v: f64, table: &CalibrationTable) -> f64 {
    let pts = &table.points;
    let rising = pts[1].1 > pts[0].1;
    // orient so voltage increases along `key`
    let key = |i: usize| if rising { pts[i].1 } else { -pts[i].1 };
    let x = if rising { v } else { -v };
    let last = pts.len() - 1;
    if x <= key(0) {
        return pts[0].0;
    }
    if x >= key(last) {
        return pts[last].0;
    }
    let hi = (1..=last).find(|&i| key(i) >= x).unwrap_or(last);
    let lo = hi - 1;
    let (f0, f1) = (pts[lo].0, pts[hi].0);
    let t = (x - key(lo)) / (key(hi) - key(lo));
    f0 + t * (f1 - f0)
}

/// Independent tables for the two pedals.
#[derive(Debug, Clone, PartialEq)]
pub struct PedalCalibration {
    pub left: CalibrationTable,
    pub right: CalibrationTable,
}

impl PedalCalibration {
    /// Default weights 0..=60 N at 5 N steps.
    pub fn default_weights() -> Vec<f64> {
        (0..=12).map(|i| f64::from(i) * WEIGHT_STEP_N).collect()
    }

    pub fn calibrate(left: &FsrConfig, right: &FsrConfig, weights: &[f64]) -> Result<Self> {
        Ok(Self {
            left: calibrate_fsr(weights, left)?,
            right: calibrate_fsr(weights, right)?,
        })
    }
}

/// Sensor pair fitted to the rig. The right pedal's FSR is a separate part
/// and reads slightly differently from the left.
pub fn default_pedal_sensors() -> (FsrConfig, FsrConfig) {
    let left = FsrConfig::default();
    let right = FsrConfig {
        k_fsr: left.k_fsr * 0.95,
        ..left
    };
    (left, right)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn zero_force_reads_open_circuit() {
        assert_eq!(fsr_voltage(0.0, &FsrConfig::default()), 0.0);
    }

    #[test]
    fn divider_symmetry_point() {
        let cfg = FsrConfig {
            vcc: 5.0,
            r_fixed: 10_000.0,
            k_fsr: 100_000.0,
            alpha: 1.0,
            f_min: 0.01,
        };
        // R(10 N) = 10 kOhm = r_fixed
        assert!((fsr_voltage(10.0, &cfg) - 2.5).abs() < 1e-12);
        // R(20 N) = 5 kOhm -> 5 * 10 / 15
        assert!((fsr_voltage(20.0, &cfg) - 10.0 / 3.0).abs() < 1e-12);
    }

    #[test]
    fn calibrate_ten_weights() {
        let weights: Vec<f64> = (1..=10).map(|i| f64::from(i) * 5.0).collect();
        let cfg = FsrConfig::default();
        let table = calibrate_fsr(&weights, &cfg).unwrap();
        assert_eq!(table.points().len(), 10);
        for (f, v) in table.points() {
            assert_eq!(*v, fsr_voltage(*f, &cfg));
        }
        assert!(table.points().windows(2).all(|w| w[1].1 > w[0].1));
    }

    #[test]
    fn calibrate_rejects_short_and_unsorted() {
        let cfg = FsrConfig::default();
        assert!(matches!(calibrate_fsr(&[5.0], &cfg), Err(Error::Calibration(_))));
        assert!(matches!(
            calibrate_fsr(&[10.0, 5.0, 15.0], &cfg),
            Err(Error::Calibration(_))
        ));
        assert!(matches!(
            calibrate_fsr(&[5.0, 12.0, 17.0], &cfg),
            Err(Error::Calibration(_))
        ));
    }

    #[test]
    fn open_circuit_band_breaks_monotonicity() {
        let cfg = FsrConfig {
            f_min: 7.0,
            ..FsrConfig::default()
        };
        assert!(matches!(
            calibrate_fsr(&[0.0, 5.0, 10.0], &cfg),
            Err(Error::Calibration(_))
        ));
    }

    fn table() -> CalibrationTable {
        calibrate_fsr(&PedalCalibration::default_weights(), &FsrConfig::default()).unwrap()
    }

    #[test]
    fn knot_round_trip_is_exact() {
        let t = table();
        let v20 = t.points()[4].1;
        assert_eq!(force_from_voltage(v20, &t), 20.0);
    }

    #[test]
    fn midpoint_of_segment() {
        let t = table();
        let v = 0.5 * (t.points()[4].1 + t.points()[5].1);
        assert!((force_from_voltage(v, &t) - 22.5).abs() < 1e-9);
    }

    #[test]
    fn clamps_outside_range() {
        let t = table();
        assert_eq!(force_from_voltage(10.0, &t), 60.0);
        assert_eq!(force_from_voltage(-1.0, &t), 0.0);
    }

    #[test]
    fn falling_tables_interpolate_too() {
        let t = CalibrationTable::new(vec![(0.0, 3.0), (5.0, 2.0), (10.0, 1.0)]).unwrap();
        assert!((force_from_voltage(1.5, &t) - 7.5).abs() < 1e-12);
        assert_eq!(force_from_voltage(0.0, &t), 10.0);
    }

    #[test]
    fn csv_round_trip() {
        let t = table();
        let mut buf = Vec::new();
        t.write_csv(&mut buf).unwrap();
        assert!(buf.starts_with(b"force_N,voltage_V\n"));
        assert_eq!(CalibrationTable::read_csv(buf.as_slice()).unwrap(), t);
    }

    proptest! {
        #[test]
        fn round_trip_between_knots(f in 0.2f64..60.0) {
            let cfg = FsrConfig::default();
            let t = table();
            let back = force_from_voltage(fsr_voltage(f, &cfg), &t);
            prop_assert!((back - f).abs() <= 0.02 * f, "{f} -> {back}");
        }

        #[test]
        fn interpolation_preserves_order(v1 in 0.0f64..1.0, v2 in 0.0f64..1.0) {
            let t = table();
            let (lo, hi) = if v1 <= v2 { (v1, v2) } else { (v2, v1) };
            prop_assert!(force_from_voltage(lo, &t) <= force_from_voltage(hi, &t));
        }

        #[test]
        fn voltage_increases_with_force(f in 0.1f64..200.0, df in 0.01f64..10.0) {
            let cfg = FsrConfig::default();
            prop_assert!(fsr_voltage(f + df, &cfg) > fsr_voltage(f, &cfg));
        }
    }
}
