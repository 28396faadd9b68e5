//! Deterministic recumbent rig: per-channel recruitment and activation,
//! angle-dependent muscle torque, and a rigid crank with viscous and Coulomb
//! friction.

use std::f64::consts::PI;
use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::encoder::{QuadState, DEFAULT_CPR};
use crate::error::{Error, Result};
use crate::stim::{ChannelConfig, ChannelId, StimCommand, StimConfig};

/// Optional first-order fatigue: fitness decays while a muscle is active and
/// recovers at rest. Scales torque.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FatigueParams {
    pub fatigue_tau_s: f64,
    pub recovery_tau_s: f64,
}

/// Stroke-to-stroke variability of muscle force: each channel's torque is
/// scaled by `1 + x`, where `x` is an Ornstein-Uhlenbeck process with
/// stationary standard deviation `sigma` and correlation time `tau_s`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TorqueNoise {
    pub sigma: f64,
    pub tau_s: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlantParams {
    /// kg·m² reflected to the crank.
    pub inertia_j: f64,
    /// N·m·s/rad.
    pub viscous_b: f64,
    /// Quadratic load of the trainer, N·m·s²/rad².
    pub drag_c: f64,
    /// Kinetic friction, N·m.
    pub coulomb_tc: f64,
    /// Static friction a resting crank must overcome, N·m; at least
    /// `coulomb_tc`.
    pub breakaway_tc: f64,
    /// Peak torque per channel, N·m, in stimulator channel order
    /// (LQ, LH, LG, RQ, RH, RG).
    pub tau_max: [f64; 6],
    pub act_tau_s: f64,
    /// How far a muscle's torque arc extends past each edge of its
    /// stimulation window, degrees.
    pub torque_margin_deg: f64,
    pub recruit_threshold_pct: f64,
    pub recruit_saturation_pct: f64,
    pub crank_len_m: f64,
    pub cpr: u32,
    /// Longest physics step; longer advances are split.
    pub substep_s: f64,
    #[serde(default)]
    pub fatigue: Option<FatigueParams>,
    #[serde(default)]
    pub torque_noise: Option<TorqueNoise>,
}

impl Default for PlantParams {
    /// Seed values before fitting to the observed power/cadence map.
    fn default() -> Self {
        Self {
            inertia_j: 0.12,
            viscous_b: 0.05,
            drag_c: 0.08,
            coulomb_tc: 1.0,
            breakaway_tc: 2.0,
            tau_max: [15.0, 10.0, 8.0, 15.0, 10.0, 8.0],
            act_tau_s: 0.15,
            torque_margin_deg: 15.0,
            recruit_threshold_pct: 20.0,
            recruit_saturation_pct: 100.0,
            crank_len_m: 0.17,
            cpr: DEFAULT_CPR,
            substep_s: 0.001,
            fatigue: None,
            torque_noise: Some(TorqueNoise {
                sigma: 0.04,
                tau_s: 0.2,
            }),
        }
    }
}

impl PlantParams {
    pub fn validate(&self) -> Result<()> {
        let positive = [
            self.inertia_j,
            self.viscous_b,
            self.coulomb_tc,
            self.act_tau_s,
            self.recruit_saturation_pct,
            self.crank_len_m,
            self.substep_s,
        ];
        if positive.iter().any(|v| !(*v > 0.0)) || self.tau_max.iter().any(|t| !(*t > 0.0)) {
            return Err(Error::Config("plant parameters must be positive".into()));
        }
        if !(self.recruit_threshold_pct >= 0.0
            && self.recruit_threshold_pct < self.recruit_saturation_pct
            && self.recruit_saturation_pct <= 100.0)
        {
            return Err(Error::Config(
                "need 0 <= recruit_threshold < recruit_saturation <= 100".into(),
            ));
        }
        if !(self.drag_c >= 0.0) {
            return Err(Error::Config("drag_c must be non-negative".into()));
        }
        if !(0.0..90.0).contains(&self.torque_margin_deg) {
            return Err(Error::Config("torque_margin_deg must be in [0, 90)".into()));
        }
        if self.breakaway_tc < self.coulomb_tc {
            return Err(Error::Config("breakaway_tc must be at least coulomb_tc".into()));
        }
        if let Some(n) = self.torque_noise {
            if !(n.sigma >= 0.0 && n.sigma < 1.0 && n.tau_s > 0.0) {
                return Err(Error::Config("torque noise needs 0 <= sigma < 1 and tau_s > 0".into()));
            }
        }
        if self.cpr == 0 {
            return Err(Error::Config("cpr must be positive".into()));
        }
        Ok(())
    }

    pub fn to_toml(&self) -> Result<String> {
        Ok(toml::to_string_pretty(self)?)
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        let p: Self = toml::from_str(text)?;
        p.validate()?;
        Ok(p)
    }

    pub fn load(path: &Path) -> Result<Self> {
        if !path.exists() {
            return Err(Error::MissingFile(path.to_path_buf()));
        }
        Self::from_toml(&std::fs::read_to_string(path)?)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_toml()?)?;
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PlantState {
    /// Crank angle in [0, 360), 0° = right crank forward.
    pub theta_deg: f64,
    pub omega_rad_s: f64,
    pub activation: [f64; 6],
    pub fitness: [f64; 6],
    /// Current force variability factor per channel.
    pub force_gain: [f64; 6],
    pub time_s: f64,
    /// Net completed forward turns.
    pub turns: i64,
}

impl Default for PlantState {
    fn default() -> Self {
        Self::at_rest(0.0)
    }
}

impl PlantState {
    pub fn at_rest(theta_deg: f64) -> Self {
        Self {
            theta_deg: theta_deg.rem_euclid(360.0),
            omega_rad_s: 0.0,
            activation: [0.0; 6],
            fitness: [1.0; 6],
            force_gain: [1.0; 6],
            time_s: 0.0,
            turns: 0,
        }
    }

    pub fn omega_rpm(&self) -> f64 {
        self.omega_rad_s * 60.0 / (2.0 * PI)
    }

    /// Crank angle in degrees without wrapping.
    pub fn unwrapped_deg(&self) -> f64 {
        self.turns as f64 * 360.0 + self.theta_deg
    }

    pub fn kinetic_energy(&self, params: &PlantParams) -> f64 {
        0.5 * params.inertia_j * self.omega_rad_s * self.omega_rad_s
    }

    /// Absolute encoder count including completed turns.
    pub fn absolute_count(&self, cpr: u32) -> i64 {
        let per_rev = 4 * i64::from(cpr);
        let within = ((self.theta_deg / 360.0) * per_rev as f64).floor() as i64;
        self.turns * per_rev + within.clamp(0, per_rev - 1)
    }
}

/// Fraction of the muscle recruited at a given current (% of channel max).
pub fn recruitment(current_pct: f64, params: &PlantParams) -> f64 {
    let lo = params.recruit_threshold_pct;
    let hi = params.recruit_saturation_pct;
    if current_pct <= lo {
        0.0
    } else if current_pct >= hi {
        1.0
    } else {
        (current_pct - lo) / (hi - lo)
    }
}

/// First-order activation lag, forward Euler.
pub fn activation_step(a: f64, u: f64, dt_s: f64, act_tau_s: f64) -> f64 {
    (a + dt_s * (u - a) / act_tau_s).clamp(0.0, 1.0)
}

/// Raised-cosine torque-angle profile over the channel's window widened by
/// `margin_deg` on both sides, peaking at the window center and zero at and
/// beyond the widened edges.
pub fn torque_shape(theta_deg: f64, cfg: &ChannelConfig, margin_deg: f64) -> f64 {
    let width = cfg.window_width_deg();
    let half = 0.5 * width + margin_deg;
    if width <= 0.0 {
        return 0.0;
    }
    let d = (theta_deg - cfg.window_center_deg() + 180.0).rem_euclid(360.0) - 180.0;
    if d.abs() >= half {
        0.0
    } else {
        0.5 * (1.0 + (PI * d / half).cos())
    }
}

pub fn muscle_torque(
    theta_deg: f64,
    activation: f64,
    cfg: &ChannelConfig,
    tau_max: f64,
    margin_deg: f64,
) -> f64 {
    (activation * tau_max * torque_shape(theta_deg, cfg, margin_deg)).max(0.0)
}

/// Semi-implicit Euler step of the crank with stiction.
pub fn crank_step(state: &PlantState, total_torque: f64, params: &PlantParams, dt_s: f64) -> PlantState {
    let mut next = *state;
    next.time_s += dt_s;
    let w = state.omega_rad_s;
    let tc = params.coulomb_tc;
    if w == 0.0 && total_torque.abs() <= params.breakaway_tc {
        return next;
    }
    let dir = if w != 0.0 { w.signum() } else { total_torque.signum() };
    let load = params.viscous_b * w + params.drag_c * w * w.abs();
    let accel = (total_torque - load - tc * dir) / params.inertia_j;
    let mut w_next = w + dt_s * accel;
    // friction stops the crank; it cannot reverse it
    if w_next.signum() != dir {
        w_next = 0.0;
    }
    next.omega_rad_s = w_next;
    let raw = state.theta_deg + w_next.to_degrees() * dt_s;
    let wraps = raw.div_euclid(360.0);
    next.theta_deg = raw.rem_euclid(360.0);
    next.turns += wraps as i64;
    next
}

/// Ground-truth sensor outputs of the rig.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SensorFrame {
    pub lines: QuadState,
    /// Tangential pedal force per side (left, right), N.
    pub pedal_force_n: [f64; 2],
    pub activation: [f64; 6],
}

pub fn channel_torques(state: &PlantState, params: &PlantParams, channels: &StimConfig) -> [f64; 6] {
    let mut out = [0.0; 6];
    for (i, cfg) in channels.channels.iter().enumerate() {
        out[i] = muscle_torque(
            state.theta_deg,
            state.activation[i] * state.fitness[i] * state.force_gain[i],
            cfg,
            params.tau_max[i],
            params.torque_margin_deg,
        );
    }
    out
}

pub fn emit_sensors(state: &PlantState, params: &PlantParams, channels: &StimConfig) -> SensorFrame {
    let torques = channel_torques(state, params, channels);
    let mut side = [0.0; 2];
    for id in ChannelId::ALL {
        side[id.side.index()] += torques[id.index()];
    }
    SensorFrame {
        lines: QuadState::from_count(state.absolute_count(params.cpr), params.cpr),
        pedal_force_n: side.map(|t| t.max(0.0) / params.crank_len_m),
        activation: state.activation,
    }
}

/// Plant with its channel geometry; the stepping entry point for loops.
#[derive(Debug, Clone)]
pub struct RigPlant {
    pub params: PlantParams,
    pub channels: StimConfig,
    pub state: PlantState,
    drive: [f64; 6],
    noise: [f64; 6],
    rng: ChaCha8Rng,
}

impl RigPlant {
    pub fn new(params: PlantParams, channels: StimConfig, state: PlantState) -> Self {
        Self {
            params,
            channels,
            state,
            drive: [0.0; 6],
            noise: [0.0; 6],
            rng: ChaCha8Rng::seed_from_u64(0),
        }
    }

    /// Restarts the force-variability stream from `seed`.
    pub fn reseed(&mut self, seed: u64) {
        self.rng = ChaCha8Rng::seed_from_u64(seed);
        self.rng.set_stream(2);
        self.noise = [0.0; 6];
        self.state.force_gain = [1.0; 6];
    }

    /// Latches the recruitment drive for each commanded channel. Channels
    /// without a command keep their last drive.
    pub fn apply_commands(&mut self, commands: &[StimCommand]) {
        for c in commands {
            let i = c.id.index();
            let max = self.channels.channels[i].current_max_ma;
            self.drive[i] = recruitment(100.0 * c.current_ma / max, &self.params);
        }
    }

    pub fn drive(&self) -> [f64; 6] {
        self.drive
    }

    pub fn stop_all(&mut self) {
        self.drive = [0.0; 6];
    }

    /// Advances the dynamics by `dt_s`, split into substeps no longer than
    /// `params.substep_s`.
    pub fn advance(&mut self, dt_s: f64) {
        if let Some(tn) = self.params.torque_noise {
            // exact discretization of the OU process over dt_s
            let decay = (-dt_s / tn.tau_s).exp();
            let kick = tn.sigma * (1.0 - decay * decay).sqrt();
            for i in 0..6 {
                let z: f64 = StandardNormal.sample(&mut self.rng);
                self.noise[i] = self.noise[i] * decay + kick * z;
                self.state.force_gain[i] = (1.0 + self.noise[i]).max(0.0);
            }
        }
        let n = (dt_s / self.params.substep_s).ceil().max(1.0) as usize;
        let h = dt_s / n as f64;
        for _ in 0..n {
            self.substep(h);
        }
    }

    fn substep(&mut self, h: f64) {
        let p = &self.params;
        for i in 0..6 {
            let a = self.state.activation[i];
            self.state.activation[i] = activation_step(a, self.drive[i], h, p.act_tau_s);
            if let Some(f) = p.fatigue {
                let fit = self.state.fitness[i];
                let dfit = -a * fit / f.fatigue_tau_s + (1.0 - a) * (1.0 - fit) / f.recovery_tau_s;
                self.state.fitness[i] = (fit + h * dfit).clamp(0.0, 1.0);
            }
        }
        let torque: f64 = channel_torques(&self.state, p, &self.channels).iter().sum();
        self.state = crank_step(&self.state, torque, p, h);
    }

    /// Motor-driven rig: the crank turns at a fixed cadence regardless of
    /// muscle torque.
    pub fn drive_kinematic(&mut self, rpm: f64, dt_s: f64) {
        let raw = self.state.theta_deg + rpm * 6.0 * dt_s;
        self.state.turns += raw.div_euclid(360.0) as i64;
        self.state.theta_deg = raw.rem_euclid(360.0);
        self.state.omega_rad_s = rpm * 2.0 * PI / 60.0;
        self.state.time_s += dt_s;
    }

    pub fn sensors(&self) -> SensorFrame {
        emit_sensors(&self.state, &self.params, &self.channels)
    }
}
