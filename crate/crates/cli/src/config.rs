//! Configuration resolution: command-line flags override an optional TOML
//! config file, which overrides built-in defaults. The fully resolved
//! configuration is embedded verbatim in every output file, so a result can
//! always be traced back to the parameters that produced it.

use std::path::Path;

use serde::{Deserialize, Serialize};

use feedshape::{Error, Result};

/// Default grid: one day split into hourly pieces.
pub const DEFAULT_GRID_HOURS: f64 = 24.0;
/// Default piece count.
pub const DEFAULT_PIECES: usize = 24;
/// Default rank threshold.
pub const DEFAULT_K: usize = 1;
/// Default seed for stochastic commands.
pub const DEFAULT_SEED: u64 = 0;
/// Default Monte Carlo run count.
pub const DEFAULT_RUNS: u32 = 1000;

/// Scalar settings accepted from a `--config` TOML file. Every field is
/// optional; flags take precedence over whatever appears here.
#[derive(Debug, Clone, Default, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FileConfig {
    /// Period length in hours.
    pub grid_hours: Option<f64>,
    /// Number of grid pieces.
    pub pieces: Option<usize>,
    /// Rank threshold.
    pub k: Option<usize>,
    /// Posting budget (expected posts per period).
    pub budget: Option<f64>,
    /// Master seed.
    pub seed: Option<u64>,
    /// Monte Carlo runs.
    pub runs: Option<u32>,
    /// Worker-thread cap.
    pub threads: Option<usize>,
}

/// Parses a TOML config document.
pub fn parse_config_bytes(bytes: &[u8]) -> Result<FileConfig> {
    let text = std::str::from_utf8(bytes)
        .map_err(|_| Error::InvalidFile("config file is not valid UTF-8".to_string()))?;
    toml::from_str(text).map_err(|e| Error::InvalidFile(format!("config file: {e}")))
}

/// Loads a config file, or the empty config when no path was given.
pub fn load_config(path: Option<&Path>) -> Result<FileConfig> {
    match path {
        None => Ok(FileConfig::default()),
        Some(path) => {
            let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
            parse_config_bytes(&bytes)
        }
    }
}

/// The resolved parameters of one command invocation, embedded in every
/// output file. Fields irrelevant to the command stay absent.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    /// Which subcommand ran.
    pub command: String,
    /// Input event-log path, as given.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub events: Option<String>,
    /// Input follow-graph path, as given.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub graph: Option<String>,
    /// Input profiles path, as given.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub profiles: Option<String>,
    /// Input solution path, as given.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub solution: Option<String>,
    /// Output path, as given.
    pub out: String,
    /// Period length in hours.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub grid_hours: Option<f64>,
    /// Number of grid pieces.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub pieces: Option<usize>,
    /// Rank threshold.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub k: Option<usize>,
    /// Posting budget actually used.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub budget: Option<f64>,
    /// Master seed (absent for fully deterministic commands).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    /// Monte Carlo runs (absent for closed-form commands).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub runs: Option<u32>,
    /// Broadcaster id.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub broadcaster: Option<String>,
    /// Follower id (trajectory command).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub follower: Option<String>,
    /// Objective name (`avm` or `mvm`).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub objective: Option<String>,
    /// Worst-follower count for the `mvm` objective.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub worst: Option<usize>,
    /// Baseline kind.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub kind: Option<String>,
    /// Evaluation scheme.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub scheme: Option<String>,
    /// Worker-thread cap, when one was set.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub threads: Option<usize>,
}

impl RunConfig {
    /// Starts a config for `command` writing to `out`; callers fill in the
    /// fields their command resolves.
    pub fn new(command: &str, out: &Path) -> Self {
        RunConfig {
            command: command.to_string(),
            events: None,
            graph: None,
            profiles: None,
            solution: None,
            out: out.display().to_string(),
            grid_hours: None,
            pieces: None,
            k: None,
            budget: None,
            seed: None,
            runs: None,
            broadcaster: None,
            follower: None,
            objective: None,
            worst: None,
            kind: None,
            scheme: None,
            threads: None,
        }
    }
}

/// Picks the first present value: flag, then config file, then default.
pub fn resolve<T: Copy>(flag: Option<T>, file: Option<T>, default: T) -> T {
    flag.or(file).unwrap_or(default)
}
