//! Polled quadrature decoding of the crank encoder.
//!
//! The crank box exposes two quadrature lines (A/B) and an index line (Z)
//! that goes high once per revolution, when the right crank arm points
//! directly forward. Decoding is 4x: every line edge is one count, so a
//! revolution spans `4 * cpr` counts.
//!
//! Forward pedaling walks the Gray cycle `00 -> 01 -> 11 -> 10 -> 00`
//! (written `ab`). A poll that sees both lines flip at once cannot tell the
//! direction; that is an aliasing event and is tallied rather than decoded.

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Default encoder resolution in lines per revolution.
pub const DEFAULT_CPR: u32 = 256;

/// Levels of the A, B and Z lines at one poll.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct QuadState {
    pub a: bool,
    pub b: bool,
    pub z: bool,
}

impl QuadState {
    pub const fn new(a: bool, b: bool, z: bool) -> Self {
        Self { a, b, z }
    }

    /// Builds a state from 0/1 levels.
    pub fn from_levels(a: u8, b: u8, z: u8) -> Self {
        Self::new(a != 0, b != 0, z != 0)
    }

    /// Line levels for an absolute count. The index is high on count 0
    /// (mod `4 * cpr`), which is always the `00` quadrature phase.
    pub fn from_count(count: i64, cpr: u32) -> Self {
        let per_rev = 4 * i64::from(cpr);
        let wrapped = count.rem_euclid(per_rev);
        let (a, b) = match wrapped % 4 {
            0 => (false, false),
            1 => (false, true),
            2 => (true, true),
            _ => (true, false),
        };
        Self::new(a, b, wrapped == 0)
    }

    /// Position of the A/B pair in the forward Gray cycle (0..4).
    fn phase(self) -> i8 {
        match (self.a, self.b) {
            (false, false) => 0,
            (false, true) => 1,
            (true, true) => 2,
            (true, false) => 3,
        }
    }
}

/// Result of decoding one poll-to-poll transition.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Transition {
    Still,
    Forward,
    Reverse,
    /// Both lines changed between polls.
    Invalid,
}

impl Transition {
    pub fn delta(self) -> i64 {
        match self {
            Transition::Forward => 1,
            Transition::Reverse => -1,
            Transition::Still | Transition::Invalid => 0,
        }
    }
}

pub fn decode_transition(prev: QuadState, next: QuadState) -> Transition {
    match (next.phase() - prev.phase()).rem_euclid(4) {
        0 => Transition::Still,
        1 => Transition::Forward,
        3 => Transition::Reverse,
        _ => Transition::Invalid,
    }
}

/// Averaging model used to turn revolution timings into cadence.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize, clap::ValueEnum)]
pub enum RpmModel {
    Instantaneous,
    Avg2,
    #[default]
    Avg3,
}

impl RpmModel {
    pub fn window(self) -> usize {
        match self {
            RpmModel::Instantaneous => 1,
            RpmModel::Avg2 => 2,
            RpmModel::Avg3 => 3,
        }
    }

    pub const ALL: [RpmModel; 3] = [RpmModel::Instantaneous, RpmModel::Avg2, RpmModel::Avg3];
}

/// One completed revolution, closed by an index edge.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct RevRecord {
    /// Polls between the previous index edge and this one.
    pub samples: u64,
    /// Count held just before the index reset it.
    pub count_at_reset: i64,
    /// Net decoded counts over the revolution, including the step that
    /// landed on the index.
    pub observed_counts: i64,
    pub invalid_transitions: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EncoderState {
    pub cpr: u32,
    /// Signed counts since the last index edge.
    pub count: i64,
    pub zero_offset_deg: f64,
    pub rev_history: Vec<RevRecord>,
    /// Polls since the last index edge; `None` until the first edge is seen,
    /// since the revolution in progress at power-up has an unknown start.
    samples_since_index: Option<u64>,
    invalid_in_rev: u64,
    pub invalid_total: u64,
    last_lines: Option<QuadState>,
}

impl EncoderState {
    /// Encoder at power-up: position unknown until the first index edge.
    pub fn new(cpr: u32) -> Self {
        assert!(cpr > 0, "cpr must be positive");
        Self {
            cpr,
            count: 0,
            zero_offset_deg: 0.0,
            rev_history: Vec::new(),
            samples_since_index: None,
            invalid_in_rev: 0,
            invalid_total: 0,
            last_lines: None,
        }
    }

    /// Encoder whose crank is known to sit on the index.
    pub fn at_index(cpr: u32) -> Self {
        let mut enc = Self::new(cpr);
        enc.samples_since_index = Some(0);
        enc.last_lines = Some(QuadState::from_count(0, cpr));
        enc
    }

    /// Encoder homed to a known absolute count (crank placed by the
    /// operator before the run). Revolution timing still waits for an index.
    pub fn homed(cpr: u32, count: i64) -> Self {
        let mut enc = Self::new(cpr);
        enc.count = count.rem_euclid(enc.counts_per_rev());
        if enc.count == 0 {
            enc.samples_since_index = Some(0);
        }
        enc.last_lines = Some(QuadState::from_count(count, cpr));
        enc
    }

    pub fn with_zero_offset(mut self, deg: f64) -> Self {
        self.zero_offset_deg = deg.rem_euclid(360.0);
        self
    }

    pub fn counts_per_rev(&self) -> i64 {
        4 * i64::from(self.cpr)
    }

    pub fn samples_since_index(&self) -> Option<u64> {
        self.samples_since_index
    }

    /// Applies one poll transition.
    pub fn ingest_sample(&mut self, prev: QuadState, next: QuadState) {
        if let Some(s) = self.samples_since_index.as_mut() {
            *s += 1;
        }
        let step = decode_transition(prev, next);
        if step == Transition::Invalid {
            self.invalid_in_rev += 1;
            self.invalid_total += 1;
        }
        if !prev.z && next.z {
            if let Some(samples) = self.samples_since_index {
                self.rev_history.push(RevRecord {
                    samples,
                    count_at_reset: self.count,
                    observed_counts: self.count + step.delta(),
                    invalid_transitions: self.invalid_in_rev,
                });
            }
            self.count = 0;
            self.samples_since_index = Some(0);
            self.invalid_in_rev = 0;
        } else {
            self.count += step.delta();
        }
        self.last_lines = Some(next);
    }

    /// Feeds the next polled line state, using the previously polled state as
    /// the transition origin.
    pub fn poll(&mut self, next: QuadState) {
        match self.last_lines {
            Some(prev) => self.ingest_sample(prev, next),
            None => self.last_lines = Some(next),
        }
    }

    pub fn angle_deg(&self) -> f64 {
        let frac = self.count as f64 / self.counts_per_rev() as f64;
        (frac * 360.0 + self.zero_offset_deg).rem_euclid(360.0)
    }

    /// Cadence from the most recent completed revolutions.
    pub fn estimate_rpm(&self, model: RpmModel, fs_hz: f64) -> Result<f64> {
        let mean = self.mean_duration_s(model, fs_hz)?;
        Ok(60.0 / mean)
    }

    /// Like [`estimate_rpm`](Self::estimate_rpm), but once the revolution in
    /// progress has already lasted longer than the averaged duration, that
    /// elapsed time caps the estimate. A stalled crank therefore reads as
    /// slowing towards zero instead of holding its last cadence forever.
    pub fn estimate_rpm_live(&self, model: RpmModel, fs_hz: f64) -> Result<f64> {
        let mean = self.mean_duration_s(model, fs_hz)?;
        let elapsed = self.samples_since_index.unwrap_or(0) as f64 / fs_hz;
        Ok(60.0 / mean.max(elapsed))
    }

    fn mean_duration_s(&self, model: RpmModel, fs_hz: f64) -> Result<f64> {
        assert!(fs_hz > 0.0, "fs_hz must be positive");
        let n = model.window().min(self.rev_history.len());
        if n == 0 {
            return Err(Error::InsufficientData);
        }
        let total: u64 = self.rev_history[self.rev_history.len() - n..]
            .iter()
            .map(|r| r.samples)
            .sum();
        Ok(total as f64 / n as f64 / fs_hz)
    }

    /// Debug dump: `rev_index,samples,count_at_reset,invalid_transitions`.
    pub fn write_history_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["rev_index", "samples", "count_at_reset", "invalid_transitions"])?;
        for (i, r) in self.rev_history.iter().enumerate() {
            w.write_record([
                i.to_string(),
                r.samples.to_string(),
                r.count_at_reset.to_string(),
                r.invalid_transitions.to_string(),
            ])?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Upper bound on counts a poller can register in one revolution: one count
/// per poll at most, and never more than the encoder resolution.
pub fn expected_observed_counts(cpr: u32, rpm: f64, fs_hz: f64) -> u64 {
    let full = 4 * u64::from(cpr);
    if rpm <= 0.0 {
        return full;
    }
    let samples = (fs_hz * 60.0 / rpm).floor();
    if samples >= full as f64 {
        full
    } else {
        samples as u64
    }
}

/// Count edges per second at a cadence.
pub fn edge_rate_hz(cpr: u32, rpm: f64) -> f64 {
    4.0 * f64::from(cpr) * rpm / 60.0
}
