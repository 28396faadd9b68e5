//! Provenance record written next to every command's outputs.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::Result;

/// `v<crate version>-<git describe>` at build time.
pub const VERSION: &str = env!("FESCYCLE_VERSION");

pub const MANIFEST_FILE: &str = "manifest.json";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub command: String,
    pub config_paths: Vec<PathBuf>,
    pub seed: u64,
    pub out_dir: PathBuf,
    pub version: String,
    /// Resolved settings, enough to rerun the command.
    pub settings: serde_json::Value,
}

impl RunManifest {
    pub fn new(command: &str, seed: u64, out_dir: &Path) -> Self {
        Self {
            command: command.to_string(),
            config_paths: Vec::new(),
            seed,
            out_dir: out_dir.to_path_buf(),
            version: VERSION.to_string(),
            settings: serde_json::Value::Null,
        }
    }

    pub fn with_config(mut self, path: Option<&Path>) -> Self {
        if let Some(p) = path {
            self.config_paths.push(p.to_path_buf());
        }
        self
    }

    pub fn with_settings<T: Serialize>(mut self, settings: &T) -> Result<Self> {
        self.settings = serde_json::to_value(settings)?;
        Ok(self)
    }

    pub fn write(&self) -> Result<PathBuf> {
        std::fs::create_dir_all(&self.out_dir)?;
        let path = self.out_dir.join(MANIFEST_FILE);
        let mut text = serde_json::to_string_pretty(self)?;
        text.push('\n');
        std::fs::write(&path, text)?;
        Ok(path)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Ok(serde_json::from_str(&std::fs::read_to_string(path)?)?)
    }
}
