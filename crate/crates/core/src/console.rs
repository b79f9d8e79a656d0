//! JSON documents exchanged with the console port, over REST and WebSocket.
//! The schema is described in `docs/console_api.md`.

use serde::{Deserialize, Serialize};

use crate::protocol::payload::AckStatus;
use crate::replay::StateHash;
use crate::runtime::{Opcode, MAX_DURATION_MS};
use crate::world::TelemetrySnapshot;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Role {
    /// Exclusive command authority over attached drones.
    Pilot,
    /// Runs races and toggles flock mode; cannot fly.
    Operator,
    /// Read-only.
    Observer,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Pacing {
    RealTime,
    Fast,
    /// Steps only when asked to.
    Manual,
}

fn yes() -> bool {
    true
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CreateSession {
    pub role: Role,
    #[serde(default)]
    pub name: Option<String>,
    #[serde(default = "yes")]
    pub subscribe: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionInfo {
    pub session: u64,
    pub role: Role,
    pub name: Option<String>,
    pub attached: Vec<u8>,
    pub subscribed: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct DroneRef {
    pub drone: u8,
}

/// A flight command. `duration` is in seconds and ignored for `off`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CommandRequest {
    pub drone: u8,
    pub verb: String,
    #[serde(default)]
    pub duration: Option<f64>,
    #[serde(default)]
    pub seq: Option<u16>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, thiserror::Error)]
pub enum CommandRequestError {
    #[error("unknown verb")]
    UnknownVerb,
    #[error("duration is required for timed commands")]
    MissingDuration,
    #[error("duration must be a finite number of seconds >= 0")]
    BadDuration,
}

/// Seconds to whole milliseconds, rounding halves up.
pub fn seconds_to_ms(seconds: f64) -> Option<u32> {
    if !seconds.is_finite() || seconds < 0.0 {
        return None;
    }
    let ms = (seconds * 1000.0 + 0.5).floor();
    // anything past the ceiling is nacked later, but must still fit a u32
    Some(ms.min(f64::from(u32::MAX)) as u32)
}

impl CommandRequest {
    pub fn new(drone: u8, opcode: Opcode, duration: Option<f64>) -> Self {
        CommandRequest { drone, verb: opcode.verb().to_string(), duration, seq: None }
    }

    /// Resolve the verb and duration. Bounds are left to the drone, which nacks.
    pub fn resolve(&self) -> Result<(Opcode, Option<u32>), CommandRequestError> {
        let opcode = Opcode::from_verb(&self.verb).ok_or(CommandRequestError::UnknownVerb)?;
        if opcode == Opcode::Off {
            return Ok((opcode, None));
        }
        let seconds = self.duration.ok_or(CommandRequestError::MissingDuration)?;
        let ms = seconds_to_ms(seconds).ok_or(CommandRequestError::BadDuration)?;
        Ok((opcode, Some(ms)))
    }
}

/// The JSON mirror of an ACK frame.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CommandReply {
    pub drone: u8,
    pub status: AckStatus,
    /// Sim-time at which the drone applied the command.
    pub t: f64,
    pub seq: Option<u16>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HeightReply {
    pub drone: u8,
    pub height: f64,
    pub t: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RelayRequest {
    pub src: u8,
    /// Absent for broadcast.
    #[serde(default)]
    pub dst: Option<u8>,
    /// Hex-encoded bytes.
    pub payload: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct RelayReply {
    pub delivered: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct FlockRequest {
    pub drone: u8,
    pub enabled: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SubscribeRequest {
    pub on: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct StepRequest {
    pub steps: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Status {
    pub t: f64,
    pub step: u64,
    pub drones: u8,
    pub pacing: Pacing,
    pub hash: StateHash,
    pub sessions: usize,
    /// `(drone, session)` for every piloted drone.
    pub pilots: Vec<(u8, u64)>,
    /// Commands and height queries still waiting on a drone.
    pub pending: usize,
    pub log_path: Option<String>,
    pub telemetry: Vec<TelemetrySnapshot>,
}

/// One line of `runs/races.jsonl`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RaceRow {
    pub drone_id: u8,
    pub pilot: Option<String>,
    pub start_t: Option<f64>,
    pub finish_t: Option<f64>,
    pub dnf: bool,
}

impl RaceRow {
    pub fn trial_time(&self) -> Option<f64> {
        if self.dnf {
            return None;
        }
        Some(self.finish_t? - self.start_t?)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "race", rename_all = "snake_case")]
pub enum RaceEvent {
    Armed { drone: u8, pilot: Option<String>, t: f64 },
    Split { drone: u8, hoop: usize, t: f64 },
    Finished { row: RaceRow },
    Aborted { row: RaceRow },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ErrorBody {
    pub code: String,
    pub message: String,
}

/// WebSocket request envelope. `id` is echoed on the reply.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClientMessage {
    #[serde(default)]
    pub id: Option<u64>,
    #[serde(flatten)]
    pub body: ClientBody,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum ClientBody {
    /// Must be the first message on a socket.
    Hello(CreateSession),
    Attach(DroneRef),
    Detach(DroneRef),
    Command(CommandRequest),
    Height(DroneRef),
    Relay(RelayRequest),
    Flock(FlockRequest),
    Subscribe(SubscribeRequest),
    RaceArm(DroneRef),
    RaceAbort(DroneRef),
    Races,
    Status,
    Arena,
    Step(StepRequest),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum ServerMessage {
    Welcome { session: SessionInfo, drones: u8, t: f64 },
    Reply { id: Option<u64>, data: serde_json::Value },
    Error { id: Option<u64>, #[serde(flatten)] error: ErrorBody },
    Telemetry { t: f64, drones: Vec<TelemetrySnapshot> },
    Race(RaceEvent),
}

/// Largest accepted command duration, in seconds.
pub const MAX_DURATION_S: f64 = MAX_DURATION_MS as f64 / 1000.0;

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn duration_rounds_half_up() {
        assert_eq!(seconds_to_ms(2.0), Some(2000));
        assert_eq!(seconds_to_ms(0.0015), Some(2));
        assert_eq!(seconds_to_ms(0.0014), Some(1));
        assert_eq!(seconds_to_ms(-1.0), None);
        assert_eq!(seconds_to_ms(f64::NAN), None);
    }

    #[test]
    fn command_resolution() {
        let up = CommandRequest::new(1, Opcode::Up, Some(2.0));
        assert_eq!(up.resolve(), Ok((Opcode::Up, Some(2000))));
        let off = CommandRequest { drone: 1, verb: "off".into(), duration: None, seq: None };
        assert_eq!(off.resolve(), Ok((Opcode::Off, None)));
        let bad = CommandRequest { drone: 1, verb: "sideways".into(), duration: Some(1.0), seq: None };
        assert_eq!(bad.resolve(), Err(CommandRequestError::UnknownVerb));
        let missing = CommandRequest { drone: 1, verb: "up".into(), duration: None, seq: None };
        assert_eq!(missing.resolve(), Err(CommandRequestError::MissingDuration));
    }

    #[test]
    fn message_shapes() {
        let msg: ClientMessage =
            serde_json::from_str(r#"{"id":4,"type":"command","drone":2,"verb":"turn_left","duration":1.5}"#).unwrap();
        assert_eq!(msg.id, Some(4));
        assert!(matches!(msg.body, ClientBody::Command(ref c) if c.verb == "turn_left"));
        let hello: ClientMessage = serde_json::from_str(r#"{"type":"hello","role":"operator"}"#).unwrap();
        assert!(matches!(hello.body, ClientBody::Hello(CreateSession { role: Role::Operator, subscribe: true, .. })));
        let races: ClientMessage = serde_json::from_str(r#"{"type":"races"}"#).unwrap();
        assert_eq!(races.body, ClientBody::Races);

        let err = ServerMessage::Error { id: Some(1), error: ErrorBody { code: "conflict".into(), message: "x".into() } };
        let v = serde_json::to_value(&err).unwrap();
        assert_eq!(v["type"], "error");
        assert_eq!(v["code"], "conflict");
    }
}
