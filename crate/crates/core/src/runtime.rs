//! Drone-side executive: timed commands on three actuation channels, the
//! altitude hold loop, and the downward height ranger.

use std::fmt;

use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dynamics::{ChannelThrust, DroneState, PhysicsParams};

/// Longest accepted timed command.
pub const MAX_DURATION_MS: u32 = 60_000;

/// Slack used when comparing accumulated sim-time against expiry instants.
pub const TIME_EPS: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum Opcode {
    Up,
    Down,
    Forward,
    Backward,
    TurnLeft,
    TurnRight,
    Off,
}

impl Opcode {
    pub const ALL: [Opcode; 7] = [
        Opcode::Up,
        Opcode::Down,
        Opcode::Forward,
        Opcode::Backward,
        Opcode::TurnLeft,
        Opcode::TurnRight,
        Opcode::Off,
    ];

    pub fn code(self) -> u8 {
        match self {
            Opcode::Up => 0x01,
            Opcode::Down => 0x02,
            Opcode::Forward => 0x03,
            Opcode::Backward => 0x04,
            Opcode::TurnLeft => 0x05,
            Opcode::TurnRight => 0x06,
            Opcode::Off => 0x07,
        }
    }

    pub fn from_code(code: u8) -> Option<Opcode> {
        Opcode::ALL.into_iter().find(|op| op.code() == code)
    }

    /// The channel a timed opcode occupies. `Off` spans several and returns `None`.
    pub fn channel(self) -> Option<Channel> {
        match self {
            Opcode::Up | Opcode::Down => Some(Channel::Vertical),
            Opcode::Forward | Opcode::Backward => Some(Channel::Lateral),
            Opcode::TurnLeft | Opcode::TurnRight => Some(Channel::Yaw),
            Opcode::Off => None,
        }
    }

    pub fn is_timed(self) -> bool {
        self != Opcode::Off
    }

    /// Student-facing call name.
    pub fn verb(self) -> &'static str {
        match self {
            Opcode::Up => "up",
            Opcode::Down => "down",
            Opcode::Forward => "forward",
            Opcode::Backward => "backward",
            Opcode::TurnLeft => "turn_left",
            Opcode::TurnRight => "turn_right",
            Opcode::Off => "off",
        }
    }

    pub fn from_verb(verb: &str) -> Option<Opcode> {
        Opcode::ALL.into_iter().find(|op| op.verb() == verb)
    }
}

impl fmt::Display for Opcode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let name = match self {
            Opcode::Up => "UP",
            Opcode::Down => "DOWN",
            Opcode::Forward => "FORWARD",
            Opcode::Backward => "BACKWARD",
            Opcode::TurnLeft => "TURN_LEFT",
            Opcode::TurnRight => "TURN_RIGHT",
            Opcode::Off => "OFF",
        };
        f.write_str(name)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Channel {
    Vertical,
    Yaw,
    Lateral,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct TimedCommand {
    pub opcode: Opcode,
    /// `None` for `Off`.
    pub duration_ms: Option<u32>,
    pub seq: u16,
}

impl TimedCommand {
    pub fn timed(opcode: Opcode, duration_ms: u32, seq: u16) -> Self {
        TimedCommand { opcode, duration_ms: Some(duration_ms), seq }
    }

    pub fn off(seq: u16) -> Self {
        TimedCommand { opcode: Opcode::Off, duration_ms: None, seq }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Error, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Nack {
    #[error("duration must be in 1..=60000 ms")]
    Bounds,
    #[error("unknown opcode")]
    UnknownOpcode,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ActiveCommand {
    pub opcode: Opcode,
    pub started_at: f64,
    pub expires_at: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ChannelState {
    pub channel: Channel,
    pub active: Option<ActiveCommand>,
}

impl ChannelState {
    fn idle(channel: Channel) -> Self {
        ChannelState { channel, active: None }
    }
}

/// One slot per actuation channel. A slot holds at most one command.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Channels {
    pub vertical: ChannelState,
    pub yaw: ChannelState,
    pub lateral: ChannelState,
}

impl Default for Channels {
    fn default() -> Self {
        Channels {
            vertical: ChannelState::idle(Channel::Vertical),
            yaw: ChannelState::idle(Channel::Yaw),
            lateral: ChannelState::idle(Channel::Lateral),
        }
    }
}

impl Channels {
    pub fn get(&self, channel: Channel) -> &ChannelState {
        match channel {
            Channel::Vertical => &self.vertical,
            Channel::Yaw => &self.yaw,
            Channel::Lateral => &self.lateral,
        }
    }

    pub fn get_mut(&mut self, channel: Channel) -> &mut ChannelState {
        match channel {
            Channel::Vertical => &mut self.vertical,
            Channel::Yaw => &mut self.yaw,
            Channel::Lateral => &mut self.lateral,
        }
    }

    pub fn active_opcode(&self, channel: Channel) -> Option<Opcode> {
        self.get(channel).active.map(|a| a.opcode)
    }

    pub fn iter(&self) -> impl Iterator<Item = &ChannelState> {
        [&self.vertical, &self.yaw, &self.lateral].into_iter()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct HoldGains {
    /// N/m
    pub kp: f64,
    /// N/(m·s)
    pub ki: f64,
    /// N·s/m
    pub kd: f64,
    /// Anti-windup bound on the integral contribution.
    pub integral_limit: f64,
}

impl Default for HoldGains {
    fn default() -> Self {
        HoldGains { kp: 0.6, ki: 0.05, kd: 0.8, integral_limit: 0.05 }
    }
}

/// PID altitude hold on the vertical channel.
///
/// `integral` stores the already-weighted integral contribution
/// (`Σ ki·e·dt`), so the anti-windup clamp bounds the thrust it can supply.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AltitudeHold {
    pub target_z: f64,
    pub gains: HoldGains,
    pub integral: f64,
    pub engaged: bool,
}

impl AltitudeHold {
    pub fn engaged_at(target_z: f64, gains: HoldGains) -> Self {
        AltitudeHold { target_z, gains, integral: 0.0, engaged: true }
    }

    /// Re-target without discarding the integral, which carries the hover bias.
    pub fn engage(&mut self, target_z: f64) {
        self.target_z = target_z;
        self.engaged = true;
    }

    /// One controller update. Output is lift only, within the vertical limit.
    pub fn update(&mut self, state: &DroneState, params: &PhysicsParams) -> f64 {
        let error = self.target_z - state.position.z;
        let limit = self.gains.integral_limit;
        self.integral = (self.integral + self.gains.ki * error * params.dt).clamp(-limit, limit);
        let out = self.gains.kp * error + self.integral - self.gains.kd * state.velocity.z;
        out.clamp(0.0, params.max_vertical_thrust)
    }
}

/// Apply a command at sim-time `now`.
///
/// Same-channel commands preempt. `Off` clears every channel and re-engages
/// the hold at the current altitude.
pub fn enqueue(
    channels: &mut Channels,
    hold: &mut AltitudeHold,
    cmd: &TimedCommand,
    now: f64,
    current_z: f64,
) -> Result<(), Nack> {
    match cmd.opcode {
        Opcode::Off => {
            channels.yaw.active = None;
            channels.lateral.active = None;
            channels.vertical.active = None;
            hold.engage(current_z);
            Ok(())
        }
        op => {
            let duration_ms = match cmd.duration_ms {
                Some(d) if (1..=MAX_DURATION_MS).contains(&d) => d,
                _ => return Err(Nack::Bounds),
            };
            let channel = op.channel().ok_or(Nack::UnknownOpcode)?;
            channels.get_mut(channel).active = Some(ActiveCommand {
                opcode: op,
                started_at: now,
                expires_at: now + f64::from(duration_ms) / 1000.0,
            });
            if channel == Channel::Vertical {
                hold.engaged = false;
            }
            Ok(())
        }
    }
}

/// Produce channel thrusts for the physics step that starts at `now`.
///
/// Commands are active on the half-open interval `[started_at, expires_at)`.
/// When a vertical command lapses, the hold captures the altitude at that tick.
pub fn tick(
    channels: &mut Channels,
    hold: &mut AltitudeHold,
    state: &DroneState,
    params: &PhysicsParams,
    now: f64,
) -> ChannelThrust {
    for slot in [&mut channels.vertical, &mut channels.yaw, &mut channels.lateral] {
        if let Some(active) = slot.active {
            if now >= active.expires_at - TIME_EPS {
                slot.active = None;
                if slot.channel == Channel::Vertical {
                    hold.engage(state.position.z);
                }
            }
        }
    }

    let vertical = match channels.active_opcode(Channel::Vertical) {
        Some(Opcode::Up) => params.max_vertical_thrust,
        Some(Opcode::Down) => -params.max_vertical_thrust,
        _ if hold.engaged => hold.update(state, params),
        _ => 0.0,
    };
    let yaw = match channels.active_opcode(Channel::Yaw) {
        Some(Opcode::TurnLeft) => params.max_yaw_torque,
        // clockwise seen from above
        Some(Opcode::TurnRight) => -params.max_yaw_torque,
        _ => 0.0,
    };
    let lateral = match channels.active_opcode(Channel::Lateral) {
        Some(Opcode::Forward) => params.max_lateral_thrust,
        Some(Opcode::Backward) => -params.max_lateral_thrust,
        _ => 0.0,
    };
    ChannelThrust { vertical, yaw, lateral }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SensorParams {
    /// Quantization step in meters.
    pub quantum: f64,
    pub noise_sd: f64,
}

impl Default for SensorParams {
    fn default() -> Self {
        SensorParams { quantum: 0.01, noise_sd: 0.0 }
    }
}

/// Downward ranger: noisy altitude floored to the sensor quantum.
///
/// Always draws one normal sample so the RNG stream advances identically
/// whether or not noise is enabled.
pub fn read_height<R: Rng + ?Sized>(
    state: &DroneState,
    quantum: f64,
    noise_sd: f64,
    rng: &mut R,
) -> f64 {
    let noise = Normal::new(0.0, noise_sd.max(0.0)).map(|n| n.sample(rng)).unwrap_or(0.0);
    let raw = state.position.z + noise;
    // 1e-9 absorbs representation error such as 0.29 / 0.01 = 28.999999999999996
    let steps = (raw / quantum + 1e-9).floor();
    (steps * quantum).max(0.0)
}
