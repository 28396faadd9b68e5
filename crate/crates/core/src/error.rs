use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("no completed revolution yet")]
    InsufficientData,

    #[error("invalid calibration table: {0}")]
    Calibration(String),

    #[error("series length mismatch: {left} vs {right}")]
    LengthMismatch { left: usize, right: usize },

    #[error("empty series")]
    EmptySeries,

    #[error("safety violation on channel {channel}: {field} = {value} (limit {limit})")]
    SafetyViolation {
        channel: String,
        field: &'static str,
        value: f64,
        limit: f64,
    },

    #[error("plant calibration failed: {reason}")]
    PlantCalibration {
        reason: String,
        /// Last sweep evaluated, (power_pct, steady_rpm).
        sweep: Vec<(f64, f64)>,
    },

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("component fault at step {step}: {source}")]
    StepFault {
        step: u64,
        #[source]
        source: Box<Error>,
    },

    #[error("missing file {0}")]
    MissingFile(PathBuf),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    TomlDe(#[from] toml::de::Error),

    #[error(transparent)]
    TomlSer(#[from] toml::ser::Error),

    #[error(transparent)]
    WebSocket(#[from] Box<tungstenite::Error>),
}

impl From<tungstenite::Error> for Error {
    fn from(e: tungstenite::Error) -> Self {
        Error::WebSocket(Box::new(e))
    }
}
