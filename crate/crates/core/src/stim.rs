//! Crank-angle-windowed stimulation scheduling and the stimulator output path.

use std::collections::{BTreeMap, VecDeque};
use std::fmt;
use std::io::Write;
use std::path::Path;
use std::str::FromStr;
use std::sync::{Arc, RwLock};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Stimulation frequency used for every channel.
pub const STIM_FREQUENCY_HZ: f64 = 40.0;
/// Device-class hard limits, enforced at the output.
pub const HARD_MAX_CURRENT_MA: f64 = 120.0;
pub const HARD_MAX_PULSE_WIDTH_US: f64 = 500.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Side {
    Left,
    Right,
}

impl Side {
    pub fn index(self) -> usize {
        match self {
            Side::Left => 0,
            Side::Right => 1,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Muscle {
    Quadriceps,
    Hamstring,
    Gluteal,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct ChannelId {
    pub side: Side,
    pub muscle: Muscle,
}

impl ChannelId {
    pub const fn new(side: Side, muscle: Muscle) -> Self {
        Self { side, muscle }
    }

    /// Electrode channels in stimulator order.
    pub const ALL: [ChannelId; 6] = [
        ChannelId::new(Side::Left, Muscle::Quadriceps),
        ChannelId::new(Side::Left, Muscle::Hamstring),
        ChannelId::new(Side::Left, Muscle::Gluteal),
        ChannelId::new(Side::Right, Muscle::Quadriceps),
        ChannelId::new(Side::Right, Muscle::Hamstring),
        ChannelId::new(Side::Right, Muscle::Gluteal),
    ];

    pub fn index(self) -> usize {
        let m = match self.muscle {
            Muscle::Quadriceps => 0,
            Muscle::Hamstring => 1,
            Muscle::Gluteal => 2,
        };
        self.side.index() * 3 + m
    }

    pub fn label(self) -> &'static str {
        match (self.side, self.muscle) {
            (Side::Left, Muscle::Quadriceps) => "LQ",
            (Side::Left, Muscle::Hamstring) => "LH",
            (Side::Left, Muscle::Gluteal) => "LG",
            (Side::Right, Muscle::Quadriceps) => "RQ",
            (Side::Right, Muscle::Hamstring) => "RH",
            (Side::Right, Muscle::Gluteal) => "RG",
        }
    }

    pub fn mirrored(self) -> Self {
        let side = match self.side {
            Side::Left => Side::Right,
            Side::Right => Side::Left,
        };
        Self::new(side, self.muscle)
    }
}

impl fmt::Display for ChannelId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

impl FromStr for ChannelId {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        ChannelId::ALL
            .into_iter()
            .find(|c| c.label() == s)
            .ok_or_else(|| Error::Config(format!("unknown channel {s:?}")))
    }
}

impl Serialize for ChannelId {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.serialize_str(self.label())
    }
}

impl<'de> Deserialize<'de> for ChannelId {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ChannelConfig {
    pub id: ChannelId,
    pub current_max_ma: f64,
    pub pulse_width_us: f64,
    pub window_start_deg: f64,
    pub window_end_deg: f64,
    pub enabled: bool,
}

impl ChannelConfig {
    pub fn validate(&self) -> Result<()> {
        let ch = self.id.label();
        if !(self.current_max_ma > 0.0 && self.current_max_ma <= HARD_MAX_CURRENT_MA) {
            return Err(Error::Config(format!("{ch}: current_max_mA must be in (0, 120]")));
        }
        if !(self.pulse_width_us > 0.0 && self.pulse_width_us <= HARD_MAX_PULSE_WIDTH_US) {
            return Err(Error::Config(format!("{ch}: pulse_width_us must be in (0, 500]")));
        }
        for w in [self.window_start_deg, self.window_end_deg] {
            if !(0.0..360.0).contains(&w) {
                return Err(Error::Config(format!("{ch}: window bounds must be in [0, 360)")));
            }
        }
        Ok(())
    }

    /// Arc length of the window in degrees.
    pub fn window_width_deg(&self) -> f64 {
        (self.window_end_deg - self.window_start_deg).rem_euclid(360.0)
    }

    /// Angle halfway along the window, following wraparound.
    pub fn window_center_deg(&self) -> f64 {
        (self.window_start_deg + 0.5 * self.window_width_deg()).rem_euclid(360.0)
    }
}

/// Half-open window membership; `start > end` wraps through 0°.
pub fn in_window(angle_deg: f64, cfg: &ChannelConfig) -> bool {
    let (s, e) = (cfg.window_start_deg, cfg.window_end_deg);
    if s <= e {
        angle_deg >= s && angle_deg < e
    } else {
        angle_deg >= s || angle_deg < e
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StimCommand {
    pub id: ChannelId,
    pub current_ma: f64,
    pub pulse_width_us: f64,
    pub frequency_hz: f64,
}

impl StimCommand {
    pub fn is_active(&self) -> bool {
        self.current_ma > 0.0
    }
}

fn round_half_up(x: f64) -> f64 {
    (x + 0.5).floor()
}

/// One command per enabled channel; channels outside their window get an
/// explicit zero-current command.
pub fn build_commands(angle_deg: f64, power_pct: f64, configs: &[ChannelConfig]) -> Vec<StimCommand> {
    let power = power_pct.clamp(0.0, 100.0);
    configs
        .iter()
        .filter(|c| c.enabled)
        .map(|c| {
            let current = if in_window(angle_deg, c) {
                round_half_up(power / 100.0 * c.current_max_ma).min(c.current_max_ma)
            } else {
                0.0
            };
            StimCommand {
                id: c.id,
                current_ma: current,
                pulse_width_us: c.pulse_width_us,
                frequency_hz: STIM_FREQUENCY_HZ,
            }
        })
        .collect()
}

/// All six channel configurations.
#[derive(Debug, Clone, PartialEq)]
pub struct StimConfig {
    pub channels: [ChannelConfig; 6],
}

impl Default for StimConfig {
    /// Per-muscle current and pulse-width limits from manual tolerance
    /// testing. Windows assume 0° = right crank forward; the left leg uses
    /// the right leg's windows shifted by half a turn.
    fn default() -> Self {
        let right_windows = |m: Muscle| match m {
            Muscle::Quadriceps => (315.0, 45.0),
            Muscle::Gluteal => (0.0, 70.0),
            Muscle::Hamstring => (90.0, 180.0),
        };
        let limits = |id: ChannelId| match id.label() {
            "LQ" => (40.0, 200.0),
            "LH" => (50.0, 225.0),
            "LG" => (45.0, 250.0),
            "RQ" => (40.0, 200.0),
            "RH" => (55.0, 220.0),
            _ => (50.0, 250.0),
        };
        let channels = ChannelId::ALL.map(|id| {
            let (s, e) = right_windows(id.muscle);
            let shift = if id.side == Side::Left { 180.0 } else { 0.0 };
            let (current, pw) = limits(id);
            ChannelConfig {
                id,
                current_max_ma: current,
                pulse_width_us: pw,
                window_start_deg: f64::rem_euclid(s + shift, 360.0),
                window_end_deg: f64::rem_euclid(e + shift, 360.0),
                enabled: true,
            }
        });
        Self { channels }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct ChannelEntry {
    #[serde(rename = "current_max_mA")]
    current_max_ma: f64,
    pulse_width_us: f64,
    window_start_deg: f64,
    window_end_deg: f64,
    #[serde(default = "enabled_default")]
    enabled: bool,
}

fn enabled_default() -> bool {
    true
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct StimFile {
    channels: BTreeMap<String, ChannelEntry>,
}

impl StimConfig {
    pub fn get(&self, id: ChannelId) -> &ChannelConfig {
        &self.channels[id.index()]
    }

    pub fn get_mut(&mut self, id: ChannelId) -> &mut ChannelConfig {
        &mut self.channels[id.index()]
    }

    pub fn validate(&self) -> Result<()> {
        self.channels.iter().try_for_each(ChannelConfig::validate)
    }

    pub fn to_toml(&self) -> Result<String> {
        let channels = self
            .channels
            .iter()
            .map(|c| {
                (
                    c.id.label().to_string(),
                    ChannelEntry {
                        current_max_ma: c.current_max_ma,
                        pulse_width_us: c.pulse_width_us,
                        window_start_deg: c.window_start_deg,
                        window_end_deg: c.window_end_deg,
                        enabled: c.enabled,
                    },
                )
            })
            .collect();
        Ok(toml::to_string_pretty(&StimFile { channels })?)
    }

    /// Parses a channel file. Channels missing from the file keep their
    /// defaults.
    pub fn from_toml(text: &str) -> Result<Self> {
        let file: StimFile = toml::from_str(text)?;
        let mut cfg = Self::default();
        for (name, e) in file.channels {
            let id: ChannelId = name.parse()?;
            *cfg.get_mut(id) = ChannelConfig {
                id,
                current_max_ma: e.current_max_ma,
                pulse_width_us: e.pulse_width_us,
                window_start_deg: e.window_start_deg,
                window_end_deg: e.window_end_deg,
                enabled: e.enabled,
            };
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_toml(&std::fs::read_to_string(path)?)
    }
}

/// Output path to a stimulator.
pub trait StimDevice {
    /// Delivers one frame of commands. Frames violating the hard limits are
    /// rejected whole and the device stays usable.
    fn apply(&mut self, t_s: f64, commands: &[StimCommand]) -> Result<()>;
}

pub fn check_hard_limits(commands: &[StimCommand]) -> Result<()> {
    for c in commands {
        let violation = |field, value, limit| Error::SafetyViolation {
            channel: c.id.label().to_string(),
            field,
            value,
            limit,
        };
        if !(c.current_ma >= 0.0 && c.current_ma <= HARD_MAX_CURRENT_MA) {
            return Err(violation("current", c.current_ma, HARD_MAX_CURRENT_MA));
        }
        if !(c.pulse_width_us >= 0.0 && c.pulse_width_us <= HARD_MAX_PULSE_WIDTH_US) {
            return Err(violation("pulse_width", c.pulse_width_us, HARD_MAX_PULSE_WIDTH_US));
        }
        if c.frequency_hz != STIM_FREQUENCY_HZ {
            return Err(violation("frequency", c.frequency_hz, STIM_FREQUENCY_HZ));
        }
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq)]
pub struct LoggedFrame {
    pub t_s: f64,
    pub commands: Vec<StimCommand>,
}

/// In-memory stimulator. Readers may inspect the log from other threads
/// while the control loop writes.
#[derive(Debug, Clone, Default)]
pub struct MockStimulator {
    log: Arc<RwLock<VecDeque<LoggedFrame>>>,
    capacity: Option<usize>,
}

impl MockStimulator {
    pub fn new() -> Self {
        Self::default()
    }

    /// Keeps only the most recent `frames` frames.
    pub fn with_capacity_limit(frames: usize) -> Self {
        Self {
            log: Arc::default(),
            capacity: Some(frames.max(1)),
        }
    }

    pub fn log_handle(&self) -> Arc<RwLock<VecDeque<LoggedFrame>>> {
        Arc::clone(&self.log)
    }

    pub fn log_len(&self) -> usize {
        self.log.read().map(|l| l.len()).unwrap_or(0)
    }

    pub fn last_frame(&self) -> Option<LoggedFrame> {
        self.log.read().ok().and_then(|l| l.back().cloned())
    }

    /// Log export: `t_s,channel,current_mA,pulse_width_us`.
    pub fn write_log_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["t_s", "channel", "current_mA", "pulse_width_us"])?;
        let log = self.log.read().expect("stimulator log poisoned");
        for frame in log.iter() {
            for c in &frame.commands {
                w.write_record([
                    frame.t_s.to_string(),
                    c.id.label().to_string(),
                    c.current_ma.to_string(),
                    c.pulse_width_us.to_string(),
                ])?;
            }
        }
        w.flush()?;
        Ok(())
    }
}

impl StimDevice for MockStimulator {
    fn apply(&mut self, t_s: f64, commands: &[StimCommand]) -> Result<()> {
        check_hard_limits(commands)?;
        if commands.is_empty() {
            return Ok(());
        }
        let mut log = self.log.write().expect("stimulator log poisoned");
        if let Some(cap) = self.capacity {
            while log.len() >= cap {
                log.pop_front();
            }
        }
        log.push_back(LoggedFrame {
            t_s,
            commands: commands.to_vec(),
        });
        Ok(())
    }
}
