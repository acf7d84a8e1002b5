use std::fmt;
use std::path::PathBuf;
use std::str::FromStr;

use spotex_core::fingerprint::DEFAULT_SESSION_TTL_MS;

use crate::ServerError;

pub const DEFAULT_PORT: u16 = 8080;

// |offset| limit for the configured time zone, in minutes
const MAX_TZ_OFFSET_MINUTES: i32 = 24 * 60;

/// Where session fingerprints come from.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    /// The venue simulator scans at positions set through `/sim/move`.
    Sim,
    /// Devices post their own observations to `/fingerprint`.
    Push,
}

impl FromStr for Mode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "sim" => Ok(Mode::Sim),
            "push" => Ok(Mode::Push),
            _ => Err(format!("unknown mode {s:?}, expected sim or push")),
        }
    }
}

impl fmt::Display for Mode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Mode::Sim => "sim",
            Mode::Push => "push",
        })
    }
}

#[derive(Debug, Clone)]
pub struct ServerConfig {
    pub port: u16,
    pub mode: Mode,
    pub rules_path: PathBuf,
    pub venue_path: Option<PathBuf>,
    pub session_ttl_ms: u64,
    pub timezone_offset_minutes: i32,
    /// Seed for simulated scan noise.
    pub seed: u64,
    /// Browser shim served at `/shim.js`.
    pub shim_path: Option<PathBuf>,
}

impl ServerConfig {
    pub fn new(rules_path: impl Into<PathBuf>, mode: Mode) -> Self {
        ServerConfig {
            port: DEFAULT_PORT,
            mode,
            rules_path: rules_path.into(),
            venue_path: None,
            session_ttl_ms: DEFAULT_SESSION_TTL_MS,
            timezone_offset_minutes: 0,
            seed: 0,
            shim_path: None,
        }
    }

    pub fn validate(&self) -> Result<(), ServerError> {
        if self.mode == Mode::Sim && self.venue_path.is_none() {
            return Err(ServerError::Config("sim mode requires a venue file".into()));
        }
        self.validate_values()
    }

    pub(crate) fn validate_values(&self) -> Result<(), ServerError> {
        if self.session_ttl_ms == 0 {
            return Err(ServerError::Config("session TTL must be positive".into()));
        }
        if self.timezone_offset_minutes.abs() > MAX_TZ_OFFSET_MINUTES {
            return Err(ServerError::Config(format!(
                "time zone offset {} is beyond ±{MAX_TZ_OFFSET_MINUTES} minutes",
                self.timezone_offset_minutes
            )));
        }
        Ok(())
    }

    /// Sessions untouched for this long are dropped entirely.
    pub fn session_idle_ms(&self) -> u64 {
        self.session_ttl_ms.saturating_mul(20)
    }

    /// Parked simulated devices are rescanned once their last scan is this
    /// old, so they stay visible under TTL pruning.
    pub fn rescan_interval_ms(&self) -> u64 {
        (self.session_ttl_ms / 2).max(1)
    }
}
