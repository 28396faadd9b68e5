//! Batch experiments behind the CLI: setpoint sweeps, encoder count loss
//! and real-time pacing.
//!
//! CSV schemas (column order is fixed):
//! - convergence: `t_s,setpoint_rpm,measured_rpm,power_pct,status`
//! - controller trace: `t_s,setpoint_rpm,measured_rpm,error_rpm,power_pct,status`
//! - sweep summary: `setpoint_rpm,status,final_power_pct,settle_time_s`
//! - count loss: `fs_hz,rpm,theoretical_counts,observed_counts_mean,observed_counts_min`
//! - paced metrics: `fs_hz,requested,executed,overruns,wall_time_s`
//!
//! Floats are written with fixed precision so outputs are byte-stable.

use std::io::Write;

use serde::Serialize;

use crate::controller::{self, ControllerGains, ConvergenceCriteria, ConvergenceStatus, ErrorSample};
use crate::encoder::EncoderState;
use crate::error::{Error, Result};
use crate::plant::{PlantParams, PlantState};
use crate::rt::{
    IndexLatch, LoopConfig, LoopMetrics, LoopMode, NoInputs, OperatorCommand, RigLoop, Scripted, StepRecord,
    DEFAULT_START_DEG,
};
use crate::stim::{MockStimulator, StimConfig};

/// Default setpoints of the cadence sweep.
pub const SWEEP_SETPOINTS_RPM: [f64; 8] = [30.0, 40.0, 50.0, 60.0, 70.0, 80.0, 90.0, 100.0];
/// Cadences for the count-loss study.
pub const STUDY_RPMS: [f64; 3] = [30.0, 60.0, 90.0];
/// Power is averaged over this tail of a run to report the final level.
pub const FINAL_POWER_WINDOW_S: f64 = 10.0;

fn f6(x: f64) -> String {
    format!("{x:.6}")
}

/// Outcome of one closed-loop run at a fixed setpoint.
#[derive(Debug, Clone)]
pub struct ConvergenceRun {
    pub setpoint_rpm: f64,
    pub status: ConvergenceStatus,
    pub final_power_pct: f64,
    pub settle_time_s: Option<f64>,
    pub metrics: LoopMetrics,
    pub trace: Vec<StepRecord>,
}

/// Mean power over the last `window_s` of the history.
pub fn final_power(history: &[ErrorSample], window_s: f64) -> f64 {
    let Some(last) = history.last() else {
        return 0.0;
    };
    let tail: Vec<f64> = history
        .iter()
        .filter(|s| s.t_s > last.t_s - window_s)
        .map(|s| s.power_pct)
        .collect();
    tail.iter().sum::<f64>() / tail.len() as f64
}

/// Runs the closed loop once at `setpoint_rpm` from rest.
pub fn convergence_run(
    params: &PlantParams,
    channels: &StimConfig,
    setpoint_rpm: f64,
    cfg: &LoopConfig,
    gains: &ControllerGains,
    criteria: &ConvergenceCriteria,
) -> Result<ConvergenceRun> {
    let mut rig = RigLoop::new(
        params.clone(),
        channels.clone(),
        DEFAULT_START_DEG,
        MockStimulator::with_capacity_limit(1),
    )?;
    rig.gains = *gains;
    rig.criteria = *criteria;
    let mut inputs = Scripted::new(vec![(0.0, OperatorCommand::Setpoint(setpoint_rpm))]);
    let out = rig.run(cfg, &mut inputs, None)?;
    Ok(ConvergenceRun {
        setpoint_rpm,
        status: controller::convergence_status(&out.errors, criteria),
        final_power_pct: final_power(&out.errors, FINAL_POWER_WINDOW_S),
        settle_time_s: controller::settle_time(&out.errors, criteria.eps_rpm),
        metrics: out.metrics,
        trace: out.trace,
    })
}

pub fn convergence_experiment(
    params: &PlantParams,
    channels: &StimConfig,
    setpoints: &[f64],
    cfg: &LoopConfig,
    gains: &ControllerGains,
    criteria: &ConvergenceCriteria,
) -> Result<Vec<ConvergenceRun>> {
    if setpoints.is_empty() {
        return Err(Error::Config("no setpoints".into()));
    }
    setpoints
        .iter()
        .map(|&sp| convergence_run(params, channels, sp, cfg, gains, criteria))
        .collect()
}

pub fn write_convergence_csv<W: Write>(trace: &[StepRecord], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["t_s", "setpoint_rpm", "measured_rpm", "power_pct", "status"])?;
    for r in trace {
        w.write_record([
            f6(r.t_s),
            f6(r.setpoint_rpm),
            f6(r.measured_rpm),
            f6(r.power_pct),
            r.status.as_str().to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_controller_trace_csv<W: Write>(trace: &[StepRecord], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["t_s", "setpoint_rpm", "measured_rpm", "error_rpm", "power_pct", "status"])?;
    for r in trace {
        w.write_record([
            f6(r.t_s),
            f6(r.setpoint_rpm),
            f6(r.measured_rpm),
            f6(r.error_rpm),
            f6(r.power_pct),
            r.status.as_str().to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_summary_csv<W: Write>(runs: &[ConvergenceRun], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["setpoint_rpm", "status", "final_power_pct", "settle_time_s"])?;
    for r in runs {
        w.write_record([
            f6(r.setpoint_rpm),
            r.status.as_str().to_string(),
            f6(r.final_power_pct),
            r.settle_time_s.map(f6).unwrap_or_default(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// Observed counts per revolution at one (fs, rpm) pair.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CountLossRow {
    pub fs_hz: f64,
    pub rpm: f64,
    pub theoretical_counts: i64,
    /// Net decoded counts of each completed revolution.
    pub observed: Vec<i64>,
}

impl CountLossRow {
    pub fn mean(&self) -> Option<f64> {
        if self.observed.is_empty() {
            None
        } else {
            Some(self.observed.iter().sum::<i64>() as f64 / self.observed.len() as f64)
        }
    }

    pub fn min(&self) -> Option<i64> {
        self.observed.iter().copied().min()
    }

    pub fn max(&self) -> Option<i64> {
        self.observed.iter().copied().max()
    }
}

/// Turns the crank at a fixed cadence from the index and polls the
/// encoder at `fs_hz` for `revolutions` turns.
pub fn count_loss_at(cpr: u32, fs_hz: f64, rpm: f64, revolutions: u32) -> CountLossRow {
    let mut row = CountLossRow {
        fs_hz,
        rpm,
        theoretical_counts: 4 * i64::from(cpr),
        observed: Vec::new(),
    };
    if rpm <= 0.0 || revolutions == 0 {
        return row;
    }
    let mut state = PlantState::at_rest(0.0);
    let mut enc = EncoderState::at_index(cpr);
    let mut latch = IndexLatch::new(&state, cpr);
    let dt = 1.0 / fs_hz;
    // a few extra polls so the final index edge is seen
    let n = ((f64::from(revolutions) * 60.0 / rpm) * fs_hz).ceil() as u64 + 2;
    for k in 1..=n {
        // exact angle at poll k rather than an accumulated sum
        let turns = k as f64 * dt * rpm / 60.0;
        state.turns = turns.floor() as i64;
        state.theta_deg = (turns - turns.floor()) * 360.0;
        enc.poll(latch.poll(&state, cpr));
        if enc.rev_history.len() >= revolutions as usize {
            break;
        }
    }
    row.observed = enc.rev_history.iter().map(|r| r.observed_counts).collect();
    row
}

pub fn count_loss_experiment(fs_list: &[f64], rpm_list: &[f64], cpr: u32, revolutions: u32) -> Result<Vec<CountLossRow>> {
    if fs_list.is_empty() || rpm_list.is_empty() {
        return Err(Error::Config("frequency and rpm lists must be non-empty".into()));
    }
    if fs_list.iter().any(|&f| !(f > 0.0)) {
        return Err(Error::Config("frequencies must be positive".into()));
    }
    Ok(fs_list
        .iter()
        .flat_map(|&fs| rpm_list.iter().map(move |&rpm| count_loss_at(cpr, fs, rpm, revolutions)))
        .collect())
}

pub fn write_count_loss_csv<W: Write>(rows: &[CountLossRow], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["fs_hz", "rpm", "theoretical_counts", "observed_counts_mean", "observed_counts_min"])?;
    for r in rows {
        w.write_record([
            r.fs_hz.to_string(),
            r.rpm.to_string(),
            r.theoretical_counts.to_string(),
            r.mean().map(f6).unwrap_or_default(),
            r.min().map(|m| m.to_string()).unwrap_or_default(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PacedRow {
    pub fs_hz: f64,
    pub metrics: LoopMetrics,
}

/// Runs the closed loop against the wall clock at each frequency.
pub fn paced_experiment(
    params: &PlantParams,
    channels: &StimConfig,
    fs_list: &[f64],
    duration_s: f64,
    setpoint_rpm: f64,
    seed: u64,
) -> Result<Vec<PacedRow>> {
    let mut rows = Vec::with_capacity(fs_list.len());
    for &fs in fs_list {
        let cfg = LoopConfig {
            fs_hz: fs,
            duration_s,
            mode: LoopMode::Paced,
            seed,
            record_trace: false,
            ..LoopConfig::default()
        };
        let mut rig = RigLoop::new(
            params.clone(),
            channels.clone(),
            DEFAULT_START_DEG,
            MockStimulator::with_capacity_limit(1),
        )?;
        rig.setpoint_rpm = setpoint_rpm;
        let out = rig.run(&cfg, &mut NoInputs, None)?;
        rows.push(PacedRow {
            fs_hz: fs,
            metrics: out.metrics,
        });
    }
    Ok(rows)
}

pub fn write_paced_csv<W: Write>(rows: &[PacedRow], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["fs_hz", "requested", "executed", "overruns", "wall_time_s"])?;
    for r in rows {
        w.write_record([
            r.fs_hz.to_string(),
            r.metrics.requested_samples.to_string(),
            r.metrics.executed_samples.to_string(),
            r.metrics.overruns.to_string(),
            f6(r.metrics.wall_time_s),
        ])?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::encoder::{edge_rate_hz, expected_observed_counts};

    #[test]
    fn lossless_when_polling_outpaces_edges() {
        let row = count_loss_at(256, 6000.0, 30.0, 5);
        assert_eq!(row.observed, vec![1024; 5]);
    }

    #[test]
    fn slow_polling_caps_counts() {
        for rpm in STUDY_RPMS {
            let row = count_loss_at(256, 100.0, rpm, 5);
            assert_eq!(row.observed.len(), 5);
            let cap = expected_observed_counts(256, rpm, 100.0) as i64 + 1;
            assert!(row.observed.iter().all(|&c| c <= cap && c < 1024), "{row:?}");
        }
        assert!(edge_rate_hz(256, 30.0) > 100.0);
    }

    #[test]
    fn zero_rpm_gives_empty_row() {
        let row = count_loss_at(256, 100.0, 0.0, 5);
        assert!(row.observed.is_empty());
        assert_eq!(row.mean(), None);
        let mut buf = Vec::new();
        write_count_loss_csv(&[row], &mut buf).unwrap();
        assert_eq!(
            String::from_utf8(buf).unwrap(),
            "fs_hz,rpm,theoretical_counts,observed_counts_mean,observed_counts_min\n100,0,1024,,\n"
        );
    }

    #[test]
    fn empty_lists_rejected() {
        assert!(count_loss_experiment(&[], &[30.0], 256, 1).is_err());
        assert!(count_loss_experiment(&[100.0], &[], 256, 1).is_err());
    }

    #[test]
    fn zero_setpoint_converges_at_zero_power() {
        let cfg = LoopConfig {
            duration_s: 15.0,
            ..LoopConfig::default()
        };
        let run = convergence_run(
            &PlantParams::default(),
            &StimConfig::default(),
            0.0,
            &cfg,
            &ControllerGains::default(),
            &ConvergenceCriteria::default(),
        )
        .unwrap();
        assert_eq!(run.status, ConvergenceStatus::Converged);
        assert_eq!(run.final_power_pct, 0.0);
    }

    #[test]
    fn too_short_a_run_is_in_progress() {
        let cfg = LoopConfig {
            duration_s: 0.01,
            ..LoopConfig::default()
        };
        let run = convergence_run(
            &PlantParams::default(),
            &StimConfig::default(),
            40.0,
            &cfg,
            &ControllerGains::default(),
            &ConvergenceCriteria::default(),
        )
        .unwrap();
        assert_eq!(run.status, ConvergenceStatus::InProgress);
    }

    #[test]
    fn final_power_averages_the_tail() {
        let h: Vec<ErrorSample> = (0..200)
            .map(|i| ErrorSample {
                t_s: i as f64 * 0.1,
                error_rpm: 0.0,
                power_pct: if i < 100 { 0.0 } else { 50.0 },
            })
            .collect();
        assert_eq!(final_power(&h, 10.0), 50.0);
        assert_eq!(final_power(&[], 10.0), 0.0);
    }
}
