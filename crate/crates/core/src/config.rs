//! The gateway's single JSON configuration document.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::arena::{parse_arena, validate_arena, Arena, ArenaDoc};
use crate::dynamics::PhysicsParams;
use crate::flock::FlockParams;
use crate::runtime::{HoldGains, SensorParams};
use crate::world::{LinkModel, WorldConfig};

pub const DEFAULT_DRONE_PORT: u16 = 7787;
pub const DEFAULT_CONSOLE_PORT: u16 = 7788;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read {path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("{path}: {source}")]
    Json { path: PathBuf, source: serde_json::Error },
    #[error("invalid configuration:\n  {}", .0.join("\n  "))]
    Invalid(Vec<String>),
    #[error("invalid arena:\n  {}", .0.join("\n  "))]
    Arena(Vec<String>),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct Ports {
    pub drone: u16,
    pub console: u16,
}

impl Default for Ports {
    fn default() -> Self {
        Ports { drone: DEFAULT_DRONE_PORT, console: DEFAULT_CONSOLE_PORT }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LinkPreset {
    Classroom,
    Lossy,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GatewayConfig {
    pub seed: u64,
    pub drones: u8,
    pub physics: PhysicsParams,
    pub hold: HoldGains,
    pub sensor: SensorParams,
    pub link: LinkModel,
    /// Overrides `link` when present.
    pub link_preset: Option<LinkPreset>,
    pub flock: FlockParams,
    pub telemetry_every: u32,
    /// Relative paths resolve against the config file's directory.
    pub arena_path: Option<PathBuf>,
    /// Inline arena, used when no path is given.
    pub arena: Option<ArenaDoc>,
    pub bind: String,
    pub ports: Ports,
    pub runs_dir: PathBuf,
    /// Pace the loop to wall-clock time; otherwise step as fast as possible.
    pub real_time: bool,
    /// Stop after this many sim-seconds.
    pub duration: Option<f64>,
}

impl Default for GatewayConfig {
    fn default() -> Self {
        let world = WorldConfig::default();
        GatewayConfig {
            seed: world.seed,
            drones: world.drones,
            physics: world.physics,
            hold: world.hold,
            sensor: world.sensor,
            link: world.link,
            link_preset: None,
            flock: world.flock,
            telemetry_every: world.telemetry_every,
            arena_path: None,
            arena: None,
            bind: "127.0.0.1".into(),
            ports: Ports::default(),
            runs_dir: PathBuf::from("runs"),
            real_time: true,
            duration: None,
        }
    }
}

impl GatewayConfig {
    pub fn load(path: &Path) -> Result<GatewayConfig, ConfigError> {
        let text = fs::read_to_string(path).map_err(|source| ConfigError::Io { path: path.into(), source })?;
        let mut config: GatewayConfig =
            serde_json::from_str(&text).map_err(|source| ConfigError::Json { path: path.into(), source })?;
        if let (Some(arena), Some(dir)) = (config.arena_path.as_mut(), path.parent()) {
            if arena.is_relative() {
                *arena = dir.join(&*arena);
            }
        }
        Ok(config)
    }

    pub fn world_config(&self) -> WorldConfig {
        let link = match self.link_preset {
            Some(LinkPreset::Lossy) => LinkModel::lossy(),
            Some(LinkPreset::Classroom) => LinkModel::default(),
            None => self.link,
        };
        WorldConfig {
            seed: self.seed,
            drones: self.drones,
            physics: self.physics,
            hold: self.hold,
            sensor: self.sensor,
            link,
            flock: self.flock,
            telemetry_every: self.telemetry_every,
        }
    }

    /// All problems that make the document unusable, excluding the arena.
    pub fn validate(&self) -> Vec<String> {
        let mut errors = self.world_config().validate();
        // 0 asks the OS for a free port, so two zeros do not collide
        if self.ports.drone == self.ports.console && self.ports.drone != 0 {
            errors.push(format!("ports.drone and ports.console are both {}", self.ports.drone));
        }
        if let Some(d) = self.duration {
            if !(d.is_finite() && d > 0.0) {
                errors.push("duration must be > 0".into());
            }
        }
        errors
    }

    /// Resolve the arena: file, then inline document, then the built-in sample.
    pub fn load_arena(&self) -> Result<Arena, ConfigError> {
        if let Some(path) = &self.arena_path {
            let text = fs::read_to_string(path).map_err(|source| ConfigError::Io { path: path.clone(), source })?;
            return parse_arena(&text).map_err(ConfigError::Arena);
        }
        match &self.arena {
            Some(doc) => validate_arena(doc.clone()).map_err(ConfigError::Arena),
            None => Ok(Arena::sample()),
        }
    }
}
