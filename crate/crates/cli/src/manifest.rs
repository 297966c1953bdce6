use std::path::{Path, PathBuf};
use std::time::{Instant, SystemTime, UNIX_EPOCH};

use serde::{Deserialize, Serialize};

use crate::config::{Config, Overrides};
use crate::CliError;

pub const MANIFEST_FILE: &str = "manifest.json";
pub const MANIFEST_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Versions {
    pub skewmem: String,
    pub cli: String,
    pub manifest: u32,
}

/// Record written next to every run's artifacts.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub subcommand: String,
    /// SHA-256 of `config` (hex).
    pub config_hash: String,
    pub seed: u64,
    pub overrides: Overrides,
    /// Artifact paths relative to the output directory.
    pub outputs: Vec<String>,
    pub exit_code: i32,
    pub started_unix: f64,
    pub wall_clock_seconds: f64,
    pub versions: Versions,
    /// Canonical config text after overrides.
    pub config: String,
}

/// Wall-clock bookkeeping for one run.
pub struct Clock {
    started: SystemTime,
    t0: Instant,
}

impl Clock {
    pub fn start() -> Self {
        Self {
            started: SystemTime::now(),
            t0: Instant::now(),
        }
    }
}

impl RunManifest {
    pub fn new(
        subcommand: &str,
        cfg: &Config,
        overrides: &Overrides,
        outputs: Vec<String>,
        exit_code: i32,
        clock: &Clock,
    ) -> Result<Self, CliError> {
        Ok(Self {
            subcommand: subcommand.to_string(),
            config_hash: cfg.hash()?,
            seed: cfg.simulation.seed,
            overrides: overrides.clone(),
            outputs,
            exit_code,
            started_unix: clock
                .started
                .duration_since(UNIX_EPOCH)
                .map(|d| d.as_secs_f64())
                .unwrap_or(0.0),
            wall_clock_seconds: clock.t0.elapsed().as_secs_f64(),
            versions: Versions {
                skewmem: skewmem::VERSION.to_string(),
                cli: env!("CARGO_PKG_VERSION").to_string(),
                manifest: MANIFEST_VERSION,
            },
            config: cfg.canonical()?,
        })
    }

    pub fn write(&self, dir: &Path) -> Result<PathBuf, CliError> {
        let path = dir.join(MANIFEST_FILE);
        let text = serde_json::to_string_pretty(self).expect("manifests serialize");
        std::fs::write(&path, text + "\n")?;
        Ok(path)
    }

    pub fn read(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)?;
        serde_json::from_str(&text).map_err(|e| CliError::Parse(format!("{}: {e}", path.display())))
    }
}
