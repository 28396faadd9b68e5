//! Command-line front end. Human-readable summaries go to stdout; every
//! machine output goes to files under `--out-dir`, next to a manifest.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde::Serialize;

use crate::calibrate::{self, CalibrationBounds, MapConfig, DEFAULT_TARGETS};
use crate::controller::{ControllerGains, ConvergenceCriteria};
use crate::encoder::{RpmModel, DEFAULT_CPR};
use crate::error::{Error, Result};
use crate::experiments::{self, STUDY_RPMS, SWEEP_SETPOINTS_RPM};
use crate::manifest::{RunManifest, VERSION};
use crate::plant::PlantParams;
use crate::rt::{LoopConfig, LoopMode, STUDY_FREQUENCIES_HZ};
use crate::serve::{self, ServeOptions};
use crate::stim::StimConfig;

pub const PARAMS_FILE: &str = "plant_params.toml";
pub const MAP_FILE: &str = "steady_state_map.csv";
pub const SUMMARY_FILE: &str = "summary.csv";
pub const COUNT_LOSS_FILE: &str = "count_loss.csv";
pub const PACED_FILE: &str = "paced_metrics.csv";

#[derive(Debug, Parser)]
#[command(name = "fescycle", version = VERSION, about = "Simulated FES cycling rig")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Fit the plant to the power/cadence targets and write the params
    /// file and steady-state map.
    Calibrate(CalibrateArgs),
    /// Closed-loop run at each setpoint; one CSV per setpoint plus a summary.
    Sweep(SweepArgs),
    /// Encoder count loss and paced-loop timing across sampling rates.
    SamplingStudy(StudyArgs),
    /// Paced loop with a WebSocket telemetry/control endpoint.
    Serve(ServeArgs),
}

#[derive(Debug, Clone, Args)]
pub struct Common {
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Plant parameter file; built-in defaults when omitted.
    #[arg(long)]
    pub params: Option<PathBuf>,
    /// Channel configuration file; built-in defaults when omitted.
    #[arg(long)]
    pub channels: Option<PathBuf>,
    #[arg(long, default_value = "out")]
    pub out_dir: PathBuf,
}

#[derive(Debug, Clone, Args)]
pub struct CalibrateArgs {
    #[command(flatten)]
    pub common: Common,
    /// TOML file of `[[target]]` tables with `rpm` and `power_pct`.
    #[arg(long)]
    pub targets: Option<PathBuf>,
    #[arg(long, default_value_t = 5.0)]
    pub power_step_pct: f64,
}

#[derive(Debug, Clone, Args)]
pub struct SweepArgs {
    #[command(flatten)]
    pub common: Common,
    #[arg(long, value_delimiter = ',', default_values_t = SWEEP_SETPOINTS_RPM)]
    pub setpoints: Vec<f64>,
    #[arg(long, default_value_t = 100.0)]
    pub fs_hz: f64,
    #[arg(long, default_value_t = 120.0)]
    pub duration_s: f64,
    #[arg(long, value_enum, default_value = "avg3")]
    pub rpm_model: RpmModel,
    /// Controller gains file; defaults when omitted.
    #[arg(long)]
    pub gains: Option<PathBuf>,
    #[arg(long)]
    pub ki: Option<f64>,
    #[arg(long)]
    pub kp: Option<f64>,
    /// Also write the per-step controller trace for each setpoint.
    #[arg(long)]
    pub controller_trace: bool,
}

#[derive(Debug, Clone, Args)]
pub struct StudyArgs {
    #[command(flatten)]
    pub common: Common,
    #[arg(long, value_delimiter = ',', default_values_t = STUDY_FREQUENCIES_HZ)]
    pub fs_hz: Vec<f64>,
    #[arg(long, value_delimiter = ',', default_values_t = STUDY_RPMS)]
    pub rpms: Vec<f64>,
    #[arg(long, default_value_t = DEFAULT_CPR)]
    pub cpr: u32,
    #[arg(long, default_value_t = 10)]
    pub revolutions: u32,
    /// Wall-clock length of each paced run.
    #[arg(long, default_value_t = 2.0)]
    pub duration_s: f64,
    #[arg(long, default_value_t = 40.0)]
    pub setpoint: f64,
}

#[derive(Debug, Clone, Args)]
pub struct ServeArgs {
    #[command(flatten)]
    pub common: Common,
    #[arg(long, default_value_t = 8765)]
    pub port: u16,
    #[arg(long, default_value = "127.0.0.1")]
    pub host: String,
    #[arg(long, default_value_t = 100.0)]
    pub fs_hz: f64,
    #[arg(long, default_value_t = 10.0)]
    pub telemetry_hz: f64,
}

impl Common {
    fn load_params(&self) -> Result<PlantParams> {
        match &self.params {
            Some(p) => PlantParams::load(p),
            None => Ok(PlantParams::default()),
        }
    }

    fn load_channels(&self) -> Result<StimConfig> {
        match &self.channels {
            Some(p) => StimConfig::load(p),
            None => Ok(StimConfig::default()),
        }
    }

    fn manifest(&self, command: &str) -> RunManifest {
        RunManifest::new(command, self.seed, &self.out_dir)
            .with_config(self.params.as_deref())
            .with_config(self.channels.as_deref())
    }
}

fn setpoint_tag(sp: f64) -> String {
    if sp.fract() == 0.0 {
        format!("{sp:.0}")
    } else {
        format!("{sp}").replace('.', "p")
    }
}

#[derive(Serialize)]
struct CalibrateSettings<'a> {
    targets: &'a [calibrate::CalibrationTarget],
    map: MapConfig,
    bounds: CalibrationBounds,
}

pub fn cmd_calibrate(args: &CalibrateArgs) -> Result<calibrate::Calibration> {
    let c = &args.common;
    let seed = c.load_params()?;
    let channels = c.load_channels()?;
    let targets = match &args.targets {
        Some(p) => calibrate::load_targets(p)?,
        None => DEFAULT_TARGETS.to_vec(),
    };
    let map_cfg = MapConfig {
        power_step_pct: args.power_step_pct,
        seed: c.seed,
        ..MapConfig::default()
    };
    let bounds = CalibrationBounds::default();
    let cal = calibrate::calibrate_to_paper(&seed, &channels, &targets, &map_cfg, &bounds)?;

    std::fs::create_dir_all(&c.out_dir)?;
    cal.params.save(&c.out_dir.join(PARAMS_FILE))?;
    cal.map.save(&c.out_dir.join(MAP_FILE))?;
    c.manifest("calibrate")
        .with_config(args.targets.as_deref())
        .with_settings(&CalibrateSettings {
            targets: &targets,
            map: map_cfg,
            bounds,
        })?
        .write()?;

    Ok(cal)
}

#[derive(Serialize)]
struct SweepSettings<'a> {
    setpoints: &'a [f64],
    loop_config: &'a LoopConfig,
    gains: ControllerGains,
    criteria: ConvergenceCriteria,
}

pub fn cmd_sweep(args: &SweepArgs) -> Result<Vec<experiments::ConvergenceRun>> {
    let c = &args.common;
    let params = c.load_params()?;
    let channels = c.load_channels()?;
    let mut gains = match &args.gains {
        Some(p) if !p.exists() => return Err(Error::MissingFile(p.clone())),
        Some(p) => toml::from_str(&std::fs::read_to_string(p)?)?,
        None => ControllerGains::default(),
    };
    if let Some(ki) = args.ki {
        gains.ki = ki;
    }
    if let Some(kp) = args.kp {
        gains.kp = kp;
    }
    gains.validate()?;
    let cfg = LoopConfig {
        fs_hz: args.fs_hz,
        duration_s: args.duration_s,
        mode: LoopMode::Offline,
        seed: c.seed,
        rpm_model: args.rpm_model,
        ..LoopConfig::default()
    };
    let criteria = ConvergenceCriteria::default();
    let runs = experiments::convergence_experiment(&params, &channels, &args.setpoints, &cfg, &gains, &criteria)?;

    std::fs::create_dir_all(&c.out_dir)?;
    for r in &runs {
        let tag = setpoint_tag(r.setpoint_rpm);
        experiments::write_convergence_csv(
            &r.trace,
            std::fs::File::create(c.out_dir.join(format!("convergence_{tag}rpm.csv")))?,
        )?;
        if args.controller_trace {
            experiments::write_controller_trace_csv(
                &r.trace,
                std::fs::File::create(c.out_dir.join(format!("controller_trace_{tag}rpm.csv")))?,
            )?;
        }
    }
    experiments::write_summary_csv(&runs, std::fs::File::create(c.out_dir.join(SUMMARY_FILE))?)?;
    c.manifest("sweep")
        .with_config(args.gains.as_deref())
        .with_settings(&SweepSettings {
            setpoints: &args.setpoints,
            loop_config: &cfg,
            gains,
            criteria,
        })?
        .write()?;

    Ok(runs)
}

#[derive(Serialize)]
struct StudySettings<'a> {
    fs_hz: &'a [f64],
    rpms: &'a [f64],
    cpr: u32,
    revolutions: u32,
    paced_duration_s: f64,
    paced_setpoint_rpm: f64,
}

pub fn cmd_sampling_study(args: &StudyArgs) -> Result<(Vec<experiments::CountLossRow>, Vec<experiments::PacedRow>)> {
    let c = &args.common;
    let rows = experiments::count_loss_experiment(&args.fs_hz, &args.rpms, args.cpr, args.revolutions)?;
    let params = c.load_params()?;
    let channels = c.load_channels()?;
    let paced = experiments::paced_experiment(&params, &channels, &args.fs_hz, args.duration_s, args.setpoint, c.seed)?;

    std::fs::create_dir_all(&c.out_dir)?;
    experiments::write_count_loss_csv(&rows, std::fs::File::create(c.out_dir.join(COUNT_LOSS_FILE))?)?;
    experiments::write_paced_csv(&paced, std::fs::File::create(c.out_dir.join(PACED_FILE))?)?;
    c.manifest("sampling-study")
        .with_settings(&StudySettings {
            fs_hz: &args.fs_hz,
            rpms: &args.rpms,
            cpr: args.cpr,
            revolutions: args.revolutions,
            paced_duration_s: args.duration_s,
            paced_setpoint_rpm: args.setpoint,
        })?
        .write()?;

    Ok((rows, paced))
}

#[derive(Serialize)]
struct ServeSettings<'a> {
    host: &'a str,
    port: u16,
    fs_hz: f64,
    telemetry_hz: f64,
}

pub fn cmd_serve(args: &ServeArgs) -> Result<()> {
    let c = &args.common;
    let opts = ServeOptions {
        params: c.load_params()?,
        channels: c.load_channels()?,
        fs_hz: args.fs_hz,
        telemetry_hz: args.telemetry_hz,
        seed: c.seed,
        initial_setpoint_rpm: 0.0,
    };
    let listener = std::net::TcpListener::bind((args.host.as_str(), args.port))?;
    c.manifest("serve")
        .with_settings(&ServeSettings {
            host: &args.host,
            port: args.port,
            fs_hz: args.fs_hz,
            telemetry_hz: args.telemetry_hz,
        })?
        .write()?;
    let handle = serve::spawn(listener, opts)?;
    println!("serving on ws://{}", handle.local_addr());
    handle.wait().map(|_| ())
}

fn print_calibration(cal: &calibrate::Calibration, out_dir: &Path) {
    println!("calibrated in {} map sweeps", cal.evaluations);
    println!("{:>8} {:>10} {:>10}  ok", "rpm", "target %", "mapped %");
    for f in &cal.fits {
        println!(
            "{:>8.1} {:>10.1} {:>10}  {}",
            f.target.rpm,
            f.target.power_pct,
            f.mapped_power_pct.map_or("-".into(), |p| format!("{p:.1}")),
            if f.pass { "yes" } else { "no" }
        );
    }
    println!("full-power cadence {:.2} rpm", cal.map.rpm_at_full_power());
    println!("wrote {}", out_dir.display());
}

fn print_sweep(runs: &[experiments::ConvergenceRun]) {
    println!("{:>9} {:>11} {:>12} {:>10}", "setpoint", "status", "final power", "settle s");
    for r in runs {
        println!(
            "{:>9.1} {:>11} {:>12.1} {:>10}",
            r.setpoint_rpm,
            r.status.as_str(),
            r.final_power_pct,
            r.settle_time_s.map_or("-".into(), |t| format!("{t:.2}"))
        );
    }
}

fn print_study(rows: &[experiments::CountLossRow], paced: &[experiments::PacedRow]) {
    println!("{:>7} {:>6} {:>8} {:>10} {:>6}", "fs Hz", "rpm", "counts", "observed", "min");
    for r in rows {
        println!(
            "{:>7} {:>6} {:>8} {:>10} {:>6}",
            r.fs_hz,
            r.rpm,
            r.theoretical_counts,
            r.mean().map_or("-".into(), |m| format!("{m:.1}")),
            r.min().map_or("-".into(), |m| m.to_string())
        );
    }
    println!();
    println!("{:>7} {:>9} {:>9} {:>9} {:>8}", "fs Hz", "requested", "executed", "overruns", "wall s");
    for r in paced {
        println!(
            "{:>7} {:>9} {:>9} {:>9} {:>8.3}",
            r.fs_hz, r.metrics.requested_samples, r.metrics.executed_samples, r.metrics.overruns, r.metrics.wall_time_s
        );
    }
}

/// Runs a command and prints its summary.
pub fn run(cli: &Cli) -> Result<()> {
    match &cli.command {
        Command::Calibrate(a) => print_calibration(&cmd_calibrate(a)?, &a.common.out_dir),
        Command::Sweep(a) => print_sweep(&cmd_sweep(a)?),
        Command::SamplingStudy(a) => {
            let (rows, paced) = cmd_sampling_study(a)?;
            print_study(&rows, &paced);
        }
        Command::Serve(a) => cmd_serve(a)?,
    }
    Ok(())
}

fn print_sweep_table(sweep: &[(f64, f64)]) {
    println!("{:>8} {:>12}", "power %", "steady rpm");
    for (p, r) in sweep {
        println!("{p:>8.1} {r:>12.2}");
    }
}

/// Entry point for the binary.
pub fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            if let Error::PlantCalibration { sweep, .. } = &e {
                print_sweep_table(sweep);
            }
            ExitCode::FAILURE
        }
    }
}

/// Writes `targets` to `dir/targets.toml` and returns the path.
pub fn write_targets_file(dir: &Path, targets: &[calibrate::CalibrationTarget]) -> Result<PathBuf> {
    std::fs::create_dir_all(dir)?;
    let path = dir.join("targets.toml");
    std::fs::write(&path, calibrate::targets_to_toml(targets)?)?;
    Ok(path)
}
