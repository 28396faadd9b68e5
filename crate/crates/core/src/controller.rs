//! Cadence controller: drives the global stimulation power towards the
//! operator's set cadence.
//!
//! The default law is incremental: each step nudges the power by the error
//! integrated over the step, then slew-limits and clamps it to [0, 100] %.
//! Because the power itself is the integrator, clamping it is the
//! anti-windup: a saturated controller holds no hidden excess and reacts to
//! an error sign change on the very next step.

use serde::{Deserialize, Serialize};

pub const POWER_MIN: f64 = 0.0;
pub const POWER_MAX: f64 = 100.0;
pub const SETPOINT_MAX_RPM: f64 = 120.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum ControlLaw {
    /// Pure incremental (integral) law with an optional proportional kick.
    Incremental,
    /// Velocity-form PID with a first-order filtered derivative.
    Pid { kd: f64, derivative_tau_s: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ControllerGains {
    /// %/(RPM·s)
    pub ki: f64,
    /// %/RPM
    pub kp: f64,
    pub deadband_rpm: f64,
    /// %/s
    pub power_slew_max: f64,
    pub law: ControlLaw,
}

impl Default for ControllerGains {
    fn default() -> Self {
        Self {
            ki: 0.5,
            kp: 0.0,
            deadband_rpm: 0.0,
            power_slew_max: 25.0,
            law: ControlLaw::Incremental,
        }
    }
}

impl ControllerGains {
    pub fn validate(&self) -> crate::error::Result<()> {
        if !(self.ki > 0.0 && self.deadband_rpm >= 0.0 && self.power_slew_max > 0.0 && self.kp >= 0.0) {
            return Err(crate::error::Error::Config(
                "need ki > 0, kp >= 0, deadband >= 0, slew > 0".into(),
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct ControllerState {
    pub setpoint_rpm: f64,
    pub measured_rpm: f64,
    pub error_rpm: f64,
    pub power_pct: f64,
    /// Sum of the integral contributions actually applied to the power.
    pub integral_term: f64,
    pub converged: bool,
    /// Contiguous time spent at full power.
    pub saturated_duration_s: f64,
    prev_error: f64,
    prev_derivative: f64,
}

impl ControllerState {
    pub fn new() -> Self {
        Self::default()
    }

    /// Rocker off: stimulation power drops to zero immediately.
    pub fn disable(&mut self) {
        self.power_pct = 0.0;
        self.saturated_duration_s = 0.0;
        self.converged = false;
    }
}

/// One control update. `measured_rpm = None` (no completed revolution yet)
/// reads as a stationary crank.
pub fn step(
    state: &ControllerState,
    setpoint_rpm: f64,
    measured_rpm: Option<f64>,
    gains: &ControllerGains,
    dt_s: f64,
) -> ControllerState {
    debug_assert!(dt_s > 0.0);
    let mut next = *state;
    let measured = measured_rpm.unwrap_or(0.0);
    let raw_error = setpoint_rpm - measured;
    let error = if raw_error.abs() <= gains.deadband_rpm { 0.0 } else { raw_error };
    next.setpoint_rpm = setpoint_rpm;
    next.measured_rpm = measured;
    next.error_rpm = raw_error;

    let integral = gains.ki * error * dt_s;
    let mut delta = gains.kp * (error - state.prev_error) + integral;
    if let ControlLaw::Pid { kd, derivative_tau_s } = gains.law {
        let raw_d = (error - state.prev_error) / dt_s;
        let alpha = dt_s / (derivative_tau_s + dt_s);
        let d = state.prev_derivative + alpha * (raw_d - state.prev_derivative);
        delta += kd * (d - state.prev_derivative);
        next.prev_derivative = d;
    }
    let max_step = gains.power_slew_max * dt_s;
    let delta = delta.clamp(-max_step, max_step);
    let candidate = state.power_pct + delta;
    next.power_pct = candidate.clamp(POWER_MIN, POWER_MAX);

    let pinned_high = state.power_pct >= POWER_MAX && error > 0.0;
    let pinned_low = state.power_pct <= POWER_MIN && error < 0.0;
    if !(pinned_high || pinned_low) {
        next.integral_term += integral;
    }
    next.saturated_duration_s = if next.power_pct >= POWER_MAX {
        state.saturated_duration_s + dt_s
    } else {
        0.0
    };
    next.prev_error = error;
    next
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ConvergenceStatus {
    Converged,
    Saturated,
    Diverged,
    InProgress,
}

impl ConvergenceStatus {
    pub fn as_str(self) -> &'static str {
        match self {
            ConvergenceStatus::Converged => "Converged",
            ConvergenceStatus::Saturated => "Saturated",
            ConvergenceStatus::Diverged => "Diverged",
            ConvergenceStatus::InProgress => "InProgress",
        }
    }
}

impl std::fmt::Display for ConvergenceStatus {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ConvergenceCriteria {
    pub eps_rpm: f64,
    pub hold_s: f64,
}

impl Default for ConvergenceCriteria {
    fn default() -> Self {
        Self {
            eps_rpm: 2.0,
            hold_s: 10.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ErrorSample {
    pub t_s: f64,
    pub error_rpm: f64,
    pub power_pct: f64,
}

/// Classifies the trailing `hold_s` of a run.
pub fn convergence_status(history: &[ErrorSample], criteria: &ConvergenceCriteria) -> ConvergenceStatus {
    let Some(last) = history.last() else {
        return ConvergenceStatus::InProgress;
    };
    let start_t = last.t_s - criteria.hold_s;
    if history[0].t_s > start_t + 1e-9 {
        return ConvergenceStatus::InProgress;
    }
    let from = history.partition_point(|s| s.t_s < start_t - 1e-9);
    let window = &history[from..];
    let eps = criteria.eps_rpm;
    if window.iter().all(|s| s.error_rpm.abs() <= eps) {
        return ConvergenceStatus::Converged;
    }
    if window
        .iter()
        .all(|s| s.power_pct >= POWER_MAX && s.error_rpm.abs() > eps)
    {
        return ConvergenceStatus::Saturated;
    }
    let growing = window
        .windows(2)
        .all(|w| w[1].error_rpm.abs() >= w[0].error_rpm.abs());
    let first = window[0].error_rpm.abs();
    if growing && last.error_rpm.abs() > first + eps {
        return ConvergenceStatus::Diverged;
    }
    ConvergenceStatus::InProgress
}

/// Earliest time from which |error| stays within `eps` to the end of the
/// history.
pub fn settle_time(history: &[ErrorSample], eps_rpm: f64) -> Option<f64> {
    let last_out = history.iter().rposition(|s| s.error_rpm.abs() > eps_rpm);
    match last_out {
        None => history.first().map(|s| s.t_s),
        Some(i) if i + 1 < history.len() => Some(history[i + 1].t_s),
        Some(_) => None,
    }
}

/// Potentiometer range mapped onto the set cadence.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PotRange {
    pub min_rpm: f64,
    pub max_rpm: f64,
}

impl Default for PotRange {
    fn default() -> Self {
        Self {
            min_rpm: 0.0,
            max_rpm: 100.0,
        }
    }
}

/// Reads the operator controls: potentiometer position in [0, 1] and the
/// rocker switch. Returns `(setpoint_rpm, enabled)`.
pub fn user_inputs(raw_pot: f64, rocker_on: bool, range: &PotRange) -> (f64, bool) {
    let pot = raw_pot.clamp(0.0, 1.0);
    (range.min_rpm + pot * (range.max_rpm - range.min_rpm), rocker_on)
}
