//! Dual-microphone mechanomyography probes.
//!
//! Each probe houses one microphone against the muscle and one facing away.
//! The inner microphone hears muscle vibration plus coupled ambient noise; the
//! outer one hears only the ambient noise, so subtracting the scaled outer
//! signal cancels the shared component.

use std::collections::VecDeque;
use std::f64::consts::PI;
use std::io::Write;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::stim::{ChannelId, Muscle, Side};

/// Muscles carrying an MMG probe. Gluteals have none (seat pressure).
pub const MMG_PROBES: [ChannelId; 4] = [
    ChannelId::new(Side::Left, Muscle::Quadriceps),
    ChannelId::new(Side::Left, Muscle::Hamstring),
    ChannelId::new(Side::Right, Muscle::Quadriceps),
    ChannelId::new(Side::Right, Muscle::Hamstring),
];

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MmgConfig {
    pub fs_hz: f64,
    /// RMS of the muscle component at full activation, in volts after the
    /// instrumentation amplifier.
    pub g_mmg: f64,
    /// Ambient coupling gain into the muscle-side microphone.
    pub c_amb: f64,
    pub ambient_rms: f64,
    pub band_lo_hz: f64,
    pub band_hi_hz: f64,
    pub envelope_window_ms: f64,
}

impl Default for MmgConfig {
    fn default() -> Self {
        Self {
            fs_hz: 1000.0,
            g_mmg: 0.05,
            c_amb: 1.0,
            ambient_rms: 0.05,
            band_lo_hz: 5.0,
            band_hi_hz: 100.0,
            envelope_window_ms: 200.0,
        }
    }
}

impl MmgConfig {
    pub fn validate(&self) -> Result<()> {
        if self.fs_hz < 2.0 * self.band_hi_hz {
            return Err(Error::Config(format!(
                "MMG sampling rate {} Hz below twice the {} Hz band edge",
                self.fs_hz, self.band_hi_hz
            )));
        }
        if !(self.band_lo_hz > 0.0 && self.band_lo_hz < self.band_hi_hz) {
            return Err(Error::Config("MMG band edges out of order".into()));
        }
        if self.g_mmg < 0.0 || self.ambient_rms < 0.0 {
            return Err(Error::Config("MMG gains must be non-negative".into()));
        }
        Ok(())
    }
}

/// One chunk of raw probe output.
#[derive(Debug, Clone, PartialEq)]
pub struct MmgFrame {
    pub mic_muscle: Vec<f64>,
    pub mic_ambient: Vec<f64>,
    pub fs_hz: f64,
}

impl MmgFrame {
    pub fn len(&self) -> usize {
        self.mic_muscle.len()
    }

    pub fn is_empty(&self) -> bool {
        self.mic_muscle.is_empty()
    }

    /// Trace export: `t_s,mic_muscle_V,mic_ambient_V,denoised_V,envelope_V`.
    pub fn write_trace_csv<W: Write>(&self, c_amb: f64, window_ms: f64, out: W) -> Result<()> {
        let clean = mmg_denoise(self, c_amb)?;
        let env = mmg_envelope(&clean, self.fs_hz, window_ms)?;
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["t_s", "mic_muscle_V", "mic_ambient_V", "denoised_V", "envelope_V"])?;
        for i in 0..self.len() {
            w.write_record([
                (i as f64 / self.fs_hz).to_string(),
                self.mic_muscle[i].to_string(),
                self.mic_ambient[i].to_string(),
                clean[i].to_string(),
                env[i].to_string(),
            ])?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Direct form I second-order section.
#[derive(Debug, Clone, Copy)]
struct Biquad {
    b: [f64; 3],
    a: [f64; 2],
    x: [f64; 2],
    y: [f64; 2],
}

impl Biquad {
    fn butterworth(fs: f64, fc: f64, highpass: bool) -> Self {
        let w0 = 2.0 * PI * fc / fs;
        let (sin, cos) = w0.sin_cos();
        let alpha = sin / (2.0 * std::f64::consts::FRAC_1_SQRT_2);
        let a0 = 1.0 + alpha;
        let b = if highpass {
            [(1.0 + cos) / 2.0, -(1.0 + cos), (1.0 + cos) / 2.0]
        } else {
            [(1.0 - cos) / 2.0, 1.0 - cos, (1.0 - cos) / 2.0]
        };
        Self {
            b: [b[0] / a0, b[1] / a0, b[2] / a0],
            a: [-2.0 * cos / a0, (1.0 - alpha) / a0],
            x: [0.0; 2],
            y: [0.0; 2],
        }
    }

    fn process(&mut self, x: f64) -> f64 {
        let y = self.b[0] * x + self.b[1] * self.x[0] + self.b[2] * self.x[1]
            - self.a[0] * self.y[0]
            - self.a[1] * self.y[1];
        self.x = [x, self.x[0]];
        self.y = [y, self.y[0]];
        y
    }
}

/// Band-pass shaping of white noise, normalised to unit output RMS.
#[derive(Debug, Clone)]
struct BandNoise {
    stages: Vec<Biquad>,
    norm: f64,
}

impl BandNoise {
    fn new(cfg: &MmgConfig) -> Self {
        let mut stages = vec![Biquad::butterworth(cfg.fs_hz, cfg.band_lo_hz, true)];
        // at or near Nyquist the sampling itself band-limits the signal
        if cfg.band_hi_hz < 0.45 * cfg.fs_hz {
            stages.push(Biquad::butterworth(cfg.fs_hz, cfg.band_hi_hz, false));
        }
        // white noise of unit variance leaves the filter with variance sum(h^2)
        let mut probe = stages.clone();
        let taps = (cfg.fs_hz * 20.0) as usize;
        let mut energy = 0.0;
        for i in 0..taps {
            let mut v = if i == 0 { 1.0 } else { 0.0 };
            for s in probe.iter_mut() {
                v = s.process(v);
            }
            energy += v * v;
        }
        Self {
            stages,
            norm: energy.sqrt(),
        }
    }

    fn next(&mut self, white: f64) -> f64 {
        let mut v = white;
        for s in self.stages.iter_mut() {
            v = s.process(v);
        }
        v / self.norm
    }
}

/// Streaming probe synthesiser. The muscle and ambient noise sources draw
/// from separate streams, so disabling one leaves the other unchanged.
#[derive(Debug, Clone)]
pub struct MmgSynth {
    cfg: MmgConfig,
    muscle_rng: ChaCha8Rng,
    ambient_rng: ChaCha8Rng,
    band: BandNoise,
}

impl MmgSynth {
    pub fn new(cfg: MmgConfig, seed: u64) -> Self {
        let mut muscle_rng = ChaCha8Rng::seed_from_u64(seed);
        muscle_rng.set_stream(0);
        let mut ambient_rng = ChaCha8Rng::seed_from_u64(seed);
        ambient_rng.set_stream(1);
        Self {
            band: BandNoise::new(&cfg),
            cfg,
            muscle_rng,
            ambient_rng,
        }
    }

    pub fn config(&self) -> &MmgConfig {
        &self.cfg
    }

    /// Next sample pair `(mic_muscle, mic_ambient)`.
    pub fn sample(&mut self, activation: f64) -> (f64, f64) {
        let a = activation.clamp(0.0, 1.0);
        let white: f64 = StandardNormal.sample(&mut self.muscle_rng);
        let muscle = self.cfg.g_mmg * a * self.band.next(white);
        let amb_white: f64 = StandardNormal.sample(&mut self.ambient_rng);
        let ambient = self.cfg.ambient_rms * amb_white;
        (muscle + self.cfg.c_amb * ambient, ambient)
    }

    pub fn frame(&mut self, activation: f64, n: usize) -> MmgFrame {
        let mut mic_muscle = Vec::with_capacity(n);
        let mut mic_ambient = Vec::with_capacity(n);
        for _ in 0..n {
            let (m, a) = self.sample(activation);
            mic_muscle.push(m);
            mic_ambient.push(a);
        }
        MmgFrame {
            mic_muscle,
            mic_ambient,
            fs_hz: self.cfg.fs_hz,
        }
    }
}

pub fn mmg_synthesize(activation: f64, seed: u64, cfg: &MmgConfig, n: usize) -> MmgFrame {
    MmgSynth::new(*cfg, seed).frame(activation, n)
}

pub fn mmg_denoise(frame: &MmgFrame, c_amb: f64) -> Result<Vec<f64>> {
    if frame.mic_muscle.len() != frame.mic_ambient.len() {
        return Err(Error::LengthMismatch {
            left: frame.mic_muscle.len(),
            right: frame.mic_ambient.len(),
        });
    }
    Ok(frame
        .mic_muscle
        .iter()
        .zip(&frame.mic_ambient)
        .map(|(m, a)| m - c_amb * a)
        .collect())
}

/// Sliding-window RMS. Before the window fills, the RMS is taken over the
/// samples seen so far.
#[derive(Debug, Clone)]
pub struct EnvelopeTracker {
    window: VecDeque<f64>,
    len: usize,
    sum_sq: f64,
}

impl EnvelopeTracker {
    pub fn new(fs_hz: f64, window_ms: f64) -> Result<Self> {
        let len = (window_ms * fs_hz / 1000.0).round();
        if !(len >= 1.0) {
            return Err(Error::Config(format!(
                "envelope window of {window_ms} ms is shorter than one sample at {fs_hz} Hz"
            )));
        }
        let len = len as usize;
        Ok(Self {
            window: VecDeque::with_capacity(len),
            len,
            sum_sq: 0.0,
        })
    }

    pub fn push(&mut self, x: f64) -> f64 {
        if self.window.len() == self.len {
            if let Some(old) = self.window.pop_front() {
                self.sum_sq -= old * old;
            }
        }
        self.window.push_back(x);
        self.sum_sq += x * x;
        self.value()
    }

    pub fn value(&self) -> f64 {
        if self.window.is_empty() {
            return 0.0;
        }
        (self.sum_sq.max(0.0) / self.window.len() as f64).sqrt()
    }
}

pub fn mmg_envelope(series: &[f64], fs_hz: f64, window_ms: f64) -> Result<Vec<f64>> {
    if series.is_empty() {
        return Err(Error::EmptySeries);
    }
    let mut tracker = EnvelopeTracker::new(fs_hz, window_ms)?;
    Ok(series.iter().map(|&x| tracker.push(x)).collect())
}

pub fn rms(xs: &[f64]) -> f64 {
    if xs.is_empty() {
        return 0.0;
    }
    (xs.iter().map(|x| x * x).sum::<f64>() / xs.len() as f64).sqrt()
}
