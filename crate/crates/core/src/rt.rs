//! Fixed-timestep executive wiring plant, encoder, controller, stimulation
//! and auxiliary sensors.
//!
//! One step at sample `n` (t = n / fs):
//! 1. apply operator inputs queued for this step;
//! 2. poll the encoder lines and update the cadence estimate;
//! 3. update the controller (or force zero power when the rocker is off);
//! 4. build and deliver the stimulation frame;
//! 5. read pedal force and MMG probes for telemetry;
//! 6. advance the plant by one period.
//!
//! Offline mode runs as fast as possible and is bit-for-bit deterministic.
//! Paced mode sleeps to wall-clock deadlines; a step that finishes after its
//! period has ended is an overrun, and the slots it ran into are skipped
//! rather than replayed in a burst.

use std::collections::hash_map::DefaultHasher;
use std::hash::Hasher;
use std::sync::mpsc::{Receiver, SyncSender, TrySendError};
use std::sync::Arc;
use std::sync::atomic::{AtomicU64, Ordering};
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};

use crate::controller::{
    self, ControllerGains, ControllerState, ConvergenceCriteria, ConvergenceStatus, ErrorSample,
};
use crate::encoder::{EncoderState, QuadState, RpmModel};
use crate::error::{Error, Result};
use crate::plant::{PlantParams, PlantState, RigPlant};
use crate::sensors::fsr::default_pedal_sensors;
use crate::sensors::{
    force_from_voltage, fsr_voltage, mmg_denoise, EnvelopeTracker, FsrConfig, MmgConfig, MmgFrame,
    MmgSynth, PedalCalibration, MMG_PROBES,
};
use crate::stim::{build_commands, StimCommand, StimConfig, StimDevice};

/// Crank angle the rig rests at when a run starts: just past the dead zone
/// at 250–270°, so the first stroke gets the full left-hamstring,
/// right-quadriceps, right-gluteal arc.
pub const DEFAULT_START_DEG: f64 = 280.0;

/// Sampling frequencies of the encoder study.
pub const STUDY_FREQUENCIES_HZ: [f64; 6] = [100.0, 500.0, 1000.0, 2000.0, 3000.0, 6000.0];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum LoopMode {
    Offline,
    Paced,
}

/// Where the stimulation scheduler takes the crank angle from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub enum AngleSource {
    /// The rig's true angle.
    #[default]
    Plant,
    /// The polled encoder count.
    Decoded,
    /// Time since the last index pulse scaled by the cadence estimate,
    /// falling back to the decoded count before the first estimate.
    IndexTiming,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LoopConfig {
    pub fs_hz: f64,
    pub duration_s: f64,
    pub mode: LoopMode,
    pub seed: u64,
    pub rpm_model: RpmModel,
    pub angle_source: AngleSource,
    /// Keep every step record and error sample in memory.
    pub record_trace: bool,
    /// Synthesize MMG probe signals.
    pub mmg: bool,
}

impl Default for LoopConfig {
    fn default() -> Self {
        Self {
            fs_hz: 100.0,
            duration_s: 120.0,
            mode: LoopMode::Offline,
            seed: 0,
            rpm_model: RpmModel::Avg3,
            angle_source: AngleSource::Plant,
            record_trace: true,
            mmg: true,
        }
    }
}

impl LoopConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.fs_hz > 0.0 && self.duration_s > 0.0) {
            return Err(Error::Config("fs_hz and duration_s must be positive".into()));
        }
        Ok(())
    }

    pub fn requested_samples(&self) -> u64 {
        (self.duration_s * self.fs_hz).round() as u64
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct LoopMetrics {
    pub requested_samples: u64,
    pub executed_samples: u64,
    pub overruns: u64,
    pub skipped_samples: u64,
    pub wall_time_s: f64,
    pub sim_time_s: f64,
    /// Net decoded counts of each completed revolution.
    pub rev_counts: Vec<i64>,
    pub telemetry_dropped: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ChannelTelemetry {
    pub current_ma: f64,
    pub active: bool,
}

/// Everything observable about one step.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StepRecord {
    pub step: u64,
    pub t_s: f64,
    pub theta_deg: f64,
    pub stim_angle_deg: f64,
    pub true_rpm: f64,
    pub setpoint_rpm: f64,
    pub measured_rpm: f64,
    pub error_rpm: f64,
    pub power_pct: f64,
    pub enabled: bool,
    pub status: ConvergenceStatus,
    pub channels: [ChannelTelemetry; 6],
    pub pedal_n: [f64; 2],
    pub mmg_env: [f64; 4],
}

/// Operator inputs, from the potentiometer, rocker switch or tuning panel.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum OperatorCommand {
    Setpoint(f64),
    Rocker(bool),
    Gains { ki: f64, kp: f64 },
}

/// Source of operator inputs, polled once per step.
pub trait InputSource {
    fn poll(&mut self, step: u64, t_s: f64) -> Vec<OperatorCommand>;

    /// Ends the run early, before the next step.
    fn stop_requested(&self) -> bool {
        false
    }
}

/// No inputs beyond the initial setpoint.
pub struct NoInputs;

impl InputSource for NoInputs {
    fn poll(&mut self, _: u64, _: f64) -> Vec<OperatorCommand> {
        Vec::new()
    }
}

/// Commands applied at fixed simulated times.
pub struct Scripted {
    events: Vec<(f64, OperatorCommand)>,
    next: usize,
}

impl Scripted {
    pub fn new(mut events: Vec<(f64, OperatorCommand)>) -> Self {
        events.sort_by(|a, b| a.0.total_cmp(&b.0));
        Self { events, next: 0 }
    }
}

impl InputSource for Scripted {
    fn poll(&mut self, _: u64, t_s: f64) -> Vec<OperatorCommand> {
        let mut out = Vec::new();
        while self.next < self.events.len() && self.events[self.next].0 <= t_s + 1e-12 {
            out.push(self.events[self.next].1);
            self.next += 1;
        }
        out
    }
}

/// Commands arriving from another thread.
impl InputSource for Receiver<OperatorCommand> {
    fn poll(&mut self, _: u64, _: f64) -> Vec<OperatorCommand> {
        self.try_iter().collect()
    }
}

/// Bounded telemetry queue. A full queue drops records; the loop never
/// blocks on it.
#[derive(Debug, Clone)]
pub struct TelemetryTap {
    tx: SyncSender<StepRecord>,
    every: u64,
    dropped: Arc<AtomicU64>,
}

impl TelemetryTap {
    /// Forwards every `every`-th step.
    pub fn new(tx: SyncSender<StepRecord>, every: u64) -> Self {
        Self {
            tx,
            every: every.max(1),
            dropped: Arc::default(),
        }
    }

    pub fn dropped(&self) -> u64 {
        self.dropped.load(Ordering::Relaxed)
    }

    fn offer(&self, rec: &StepRecord) {
        if !rec.step.is_multiple_of(self.every) {
            return;
        }
        match self.tx.try_send(*rec) {
            Ok(()) => {}
            Err(TrySendError::Full(_)) | Err(TrySendError::Disconnected(_)) => {
                self.dropped.fetch_add(1, Ordering::Relaxed);
            }
        }
    }
}

/// Reports the index line as high on the first poll after the crank has
/// crossed 0°, so a revolution boundary is not lost between slow polls.
#[derive(Debug, Clone)]
pub(crate) struct IndexLatch {
    last_turn: i64,
}

impl IndexLatch {
    pub(crate) fn new(state: &PlantState, cpr: u32) -> Self {
        Self {
            last_turn: state.absolute_count(cpr).div_euclid(4 * i64::from(cpr)),
        }
    }

    pub(crate) fn poll(&mut self, state: &PlantState, cpr: u32) -> QuadState {
        let count = state.absolute_count(cpr);
        let turn = count.div_euclid(4 * i64::from(cpr));
        let mut lines = QuadState::from_count(count, cpr);
        lines.z |= turn != self.last_turn;
        self.last_turn = turn;
        lines
    }
}

/// The four MMG probes with their streaming envelopes.
#[derive(Debug, Clone)]
struct MmgBank {
    cfg: MmgConfig,
    synths: Vec<MmgSynth>,
    envelopes: Vec<EnvelopeTracker>,
    due: f64,
}

impl MmgBank {
    fn new(cfg: MmgConfig, seed: u64) -> Result<Self> {
        cfg.validate()?;
        let synths = (0..MMG_PROBES.len() as u64)
            .map(|i| MmgSynth::new(cfg, seed.wrapping_mul(31).wrapping_add(i + 1)))
            .collect();
        let envelopes = (0..MMG_PROBES.len())
            .map(|_| EnvelopeTracker::new(cfg.fs_hz, cfg.envelope_window_ms))
            .collect::<Result<_>>()?;
        Ok(Self {
            cfg,
            synths,
            envelopes,
            due: 0.0,
        })
    }

    fn advance(&mut self, dt_s: f64, activation: &[f64; 6]) -> Result<[f64; 4]> {
        self.due += dt_s * self.cfg.fs_hz;
        let n = self.due.floor() as usize;
        self.due -= n as f64;
        let mut env = [0.0; 4];
        for (k, id) in MMG_PROBES.iter().enumerate() {
            if n > 0 {
                let frame: MmgFrame = self.synths[k].frame(activation[id.index()], n);
                for x in mmg_denoise(&frame, self.cfg.c_amb)? {
                    self.envelopes[k].push(x);
                }
            }
            env[k] = self.envelopes[k].value();
        }
        Ok(env)
    }
}

/// Pedal FSRs with their lookup tables.
#[derive(Debug, Clone)]
pub struct PedalSensors {
    pub left: FsrConfig,
    pub right: FsrConfig,
    pub tables: PedalCalibration,
}

impl PedalSensors {
    pub fn calibrated() -> Result<Self> {
        let (left, right) = default_pedal_sensors();
        let tables = PedalCalibration::calibrate(&left, &right, &PedalCalibration::default_weights())?;
        Ok(Self { left, right, tables })
    }

    /// Force measured through each divider and its table.
    pub fn measure(&self, force_n: [f64; 2]) -> [f64; 2] {
        [
            force_from_voltage(fsr_voltage(force_n[0], &self.left), &self.tables.left),
            force_from_voltage(fsr_voltage(force_n[1], &self.right), &self.tables.right),
        ]
    }
}

/// Result of a run.
#[derive(Debug, Clone)]
pub struct RunOutput {
    pub metrics: LoopMetrics,
    pub trace: Vec<StepRecord>,
    pub errors: Vec<ErrorSample>,
}

/// The closed loop and its components.
pub struct RigLoop<D: StimDevice> {
    pub plant: RigPlant,
    pub encoder: EncoderState,
    pub controller: ControllerState,
    pub gains: ControllerGains,
    pub criteria: ConvergenceCriteria,
    pub device: D,
    pub pedals: PedalSensors,
    pub mmg_cfg: MmgConfig,
    pub setpoint_rpm: f64,
    pub enabled: bool,
}

impl<D: StimDevice> RigLoop<D> {
    /// Loop around a rig at rest at `start_deg`, encoder homed to that angle.
    pub fn new(params: PlantParams, channels: StimConfig, start_deg: f64, device: D) -> Result<Self> {
        params.validate()?;
        channels.validate()?;
        let state = PlantState::at_rest(start_deg);
        let encoder = EncoderState::homed(params.cpr, state.absolute_count(params.cpr));
        Ok(Self {
            plant: RigPlant::new(params, channels, state),
            encoder,
            controller: ControllerState::new(),
            gains: ControllerGains::default(),
            criteria: ConvergenceCriteria::default(),
            device,
            pedals: PedalSensors::calibrated()?,
            mmg_cfg: MmgConfig::default(),
            setpoint_rpm: 0.0,
            enabled: true,
        })
    }

    fn apply_input(&mut self, cmd: OperatorCommand) {
        match cmd {
            OperatorCommand::Setpoint(rpm) => {
                self.setpoint_rpm = rpm.clamp(0.0, controller::SETPOINT_MAX_RPM)
            }
            OperatorCommand::Rocker(on) => self.enabled = on,
            OperatorCommand::Gains { ki, kp } => {
                if ki > 0.0 {
                    self.gains.ki = ki;
                }
                if kp >= 0.0 {
                    self.gains.kp = kp;
                }
            }
        }
    }

    fn stim_angle(&self, source: AngleSource, model: RpmModel, fs_hz: f64) -> f64 {
        match source {
            AngleSource::Plant => self.plant.state.theta_deg,
            AngleSource::Decoded => self.encoder.angle_deg(),
            AngleSource::IndexTiming => {
                match (
                    self.encoder.estimate_rpm(model, fs_hz),
                    self.encoder.samples_since_index(),
                ) {
                    (Ok(rpm), Some(samples)) => {
                        let turns = (samples as f64 / fs_hz) * rpm / 60.0;
                        (turns.min(1.0) * 360.0 + self.encoder.zero_offset_deg).rem_euclid(360.0)
                    }
                    _ => self.encoder.angle_deg(),
                }
            }
        }
    }

    pub fn run(
        &mut self,
        cfg: &LoopConfig,
        inputs: &mut dyn InputSource,
        tap: Option<&TelemetryTap>,
    ) -> Result<RunOutput> {
        cfg.validate()?;
        self.gains.validate()?;
        let dt = 1.0 / cfg.fs_hz;
        let requested = cfg.requested_samples();
        self.plant.reseed(cfg.seed);
        let cpr = self.plant.params.cpr;
        let mut latch = IndexLatch::new(&self.plant.state, cpr);
        let mut mmg = if cfg.mmg {
            Some(MmgBank::new(self.mmg_cfg, cfg.seed)?)
        } else {
            None
        };
        let mut monitor = StatusMonitor::new(self.criteria);
        let mut trace = Vec::new();
        let mut errors = Vec::new();
        let mut metrics = LoopMetrics {
            requested_samples: requested,
            ..LoopMetrics::default()
        };
        let history_base = self.encoder.rev_history.len();

        let started = Instant::now();
        let period = Duration::from_secs_f64(dt);
        let mut slot: u64 = 0;
        while slot < requested && !inputs.stop_requested() {
            if cfg.mode == LoopMode::Paced {
                let deadline = period.mul_f64(slot as f64);
                if let Some(wait) = deadline.checked_sub(started.elapsed()) {
                    std::thread::sleep(wait);
                }
            }
            let step = metrics.executed_samples;
            let t = step as f64 * dt;
            let rec = self
                .step(step, t, dt, cfg, inputs, &mut latch, mmg.as_mut(), &mut monitor)
                .map_err(|e| Error::StepFault {
                    step,
                    source: Box::new(e),
                })?;
            if let Some(tap) = tap {
                tap.offer(&rec);
            }
            if cfg.record_trace {
                errors.push(ErrorSample {
                    t_s: t,
                    error_rpm: rec.error_rpm,
                    power_pct: rec.power_pct,
                });
                trace.push(rec);
            }
            metrics.executed_samples += 1;

            slot += 1;
            if cfg.mode == LoopMode::Paced {
                let now = started.elapsed();
                if now > period.mul_f64(slot as f64) {
                    metrics.overruns += 1;
                    let current = (now.as_secs_f64() / dt).floor() as u64;
                    let resume = current.min(requested);
                    metrics.skipped_samples += resume.saturating_sub(slot);
                    slot = slot.max(resume);
                }
            }
        }
        if cfg.mode == LoopMode::Paced && !inputs.stop_requested() {
            let end = period.mul_f64(requested as f64);
            if let Some(wait) = end.checked_sub(started.elapsed()) {
                std::thread::sleep(wait);
            }
        }
        metrics.wall_time_s = started.elapsed().as_secs_f64();
        metrics.sim_time_s = metrics.executed_samples as f64 / cfg.fs_hz;
        metrics.rev_counts = self.encoder.rev_history[history_base..]
            .iter()
            .map(|r| r.observed_counts)
            .collect();
        metrics.telemetry_dropped = tap.map(TelemetryTap::dropped).unwrap_or(0);
        Ok(RunOutput {
            metrics,
            trace,
            errors,
        })
    }

    #[allow(clippy::too_many_arguments)]
    fn step(
        &mut self,
        step: u64,
        t: f64,
        dt: f64,
        cfg: &LoopConfig,
        inputs: &mut dyn InputSource,
        latch: &mut IndexLatch,
        mmg: Option<&mut MmgBank>,
        monitor: &mut StatusMonitor,
    ) -> Result<StepRecord> {
        for cmd in inputs.poll(step, t) {
            self.apply_input(cmd);
        }

        let cpr = self.plant.params.cpr;
        let lines = latch.poll(&self.plant.state, cpr);
        self.encoder.poll(lines);
        let measured = self.encoder.estimate_rpm_live(cfg.rpm_model, cfg.fs_hz).ok();

        if self.enabled {
            self.controller = controller::step(&self.controller, self.setpoint_rpm, measured, &self.gains, dt);
        } else {
            self.controller.setpoint_rpm = self.setpoint_rpm;
            self.controller.measured_rpm = measured.unwrap_or(0.0);
            self.controller.error_rpm = self.setpoint_rpm - self.controller.measured_rpm;
            self.controller.disable();
        }
        let status = monitor.push(t, self.controller.error_rpm, self.controller.power_pct);
        self.controller.converged = status == ConvergenceStatus::Converged;

        let angle = self.stim_angle(cfg.angle_source, cfg.rpm_model, cfg.fs_hz);
        let commands = build_commands(angle, self.controller.power_pct, &self.plant.channels.channels);
        self.device.apply(t, &commands)?;
        self.plant.apply_commands(&commands);

        let sensors = self.plant.sensors();
        let pedal_n = self.pedals.measure(sensors.pedal_force_n);
        let mmg_env = match mmg {
            Some(bank) => bank.advance(dt, &sensors.activation)?,
            None => [0.0; 4],
        };

        let rec = StepRecord {
            step,
            t_s: t,
            theta_deg: self.plant.state.theta_deg,
            stim_angle_deg: angle,
            true_rpm: self.plant.state.omega_rpm(),
            setpoint_rpm: self.controller.setpoint_rpm,
            measured_rpm: self.controller.measured_rpm,
            error_rpm: self.controller.error_rpm,
            power_pct: self.controller.power_pct,
            enabled: self.enabled,
            status,
            channels: channel_telemetry(&commands),
            pedal_n,
            mmg_env,
        };
        self.plant.advance(dt);
        Ok(rec)
    }
}

fn channel_telemetry(commands: &[StimCommand]) -> [ChannelTelemetry; 6] {
    let mut out = [ChannelTelemetry {
        current_ma: 0.0,
        active: false,
    }; 6];
    for c in commands {
        out[c.id.index()] = ChannelTelemetry {
            current_ma: c.current_ma,
            active: c.is_active(),
        };
    }
    out
}

/// Streaming form of [`controller::convergence_status`].
#[derive(Debug, Clone)]
pub struct StatusMonitor {
    criteria: ConvergenceCriteria,
    first_t: Option<f64>,
    in_band_since: Option<f64>,
    saturated_since: Option<f64>,
    growing_since: Option<(f64, f64)>,
    last_abs: f64,
}

impl StatusMonitor {
    pub fn new(criteria: ConvergenceCriteria) -> Self {
        Self {
            criteria,
            first_t: None,
            in_band_since: None,
            saturated_since: None,
            growing_since: None,
            last_abs: 0.0,
        }
    }

    pub fn push(&mut self, t: f64, error: f64, power: f64) -> ConvergenceStatus {
        let first = *self.first_t.get_or_insert(t);
        let eps = self.criteria.eps_rpm;
        let abs = error.abs();
        let in_band = abs <= eps;
        self.in_band_since = if in_band { self.in_band_since.or(Some(t)) } else { None };
        let saturated = power >= controller::POWER_MAX && !in_band;
        self.saturated_since = if saturated { self.saturated_since.or(Some(t)) } else { None };
        self.growing_since = match self.growing_since {
            Some(g) if abs >= self.last_abs => Some(g),
            _ => Some((t, abs)),
        };
        self.last_abs = abs;

        let hold = self.criteria.hold_s;
        let held = |since: Option<f64>| since.is_some_and(|s| t - s >= hold - 1e-9);
        if t - first < hold - 1e-9 {
            ConvergenceStatus::InProgress
        } else if held(self.in_band_since) {
            ConvergenceStatus::Converged
        } else if held(self.saturated_since) {
            ConvergenceStatus::Saturated
        } else if matches!(self.growing_since, Some((s, a0)) if t - s >= hold - 1e-9 && abs > a0 + eps) {
            ConvergenceStatus::Diverged
        } else {
            ConvergenceStatus::InProgress
        }
    }
}

/// Order-sensitive hash of a trace; equal traces give equal checksums.
pub fn trace_checksum(trace: &[StepRecord]) -> u64 {
    let mut h = DefaultHasher::new();
    for r in trace {
        h.write_u64(r.step);
        for v in [
            r.t_s,
            r.theta_deg,
            r.stim_angle_deg,
            r.true_rpm,
            r.setpoint_rpm,
            r.measured_rpm,
            r.error_rpm,
            r.power_pct,
            r.pedal_n[0],
            r.pedal_n[1],
        ] {
            h.write_u64(v.to_bits());
        }
        for e in r.mmg_env {
            h.write_u64(e.to_bits());
        }
        for c in r.channels {
            h.write_u64(c.current_ma.to_bits());
        }
        h.write_u8(r.status as u8);
    }
    h.finish()
}
