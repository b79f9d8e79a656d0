//! Typed payload bodies carried inside frames.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::{Frame, FrameType};
use crate::runtime::{Opcode, TimedCommand};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum PayloadError {
    #[error("{ftype} payload must be {expected} bytes, got {got}")]
    BadLength { ftype: FrameType, expected: usize, got: usize },
    #[error("unknown opcode {0:#04x}")]
    UnknownOpcode(u8),
    #[error("unknown ack status {0:#04x}")]
    UnknownStatus(u8),
    #[error("unknown peer payload tag {0:#04x}")]
    UnknownTag(u8),
    #[error("expected {expected} frame, got {got}")]
    WrongType { expected: FrameType, got: FrameType },
}

fn expect_type(frame: &Frame, expected: FrameType) -> Result<(), PayloadError> {
    if frame.ftype != expected {
        return Err(PayloadError::WrongType { expected, got: frame.ftype });
    }
    Ok(())
}

fn expect_len(ftype: FrameType, payload: &[u8], expected: usize) -> Result<(), PayloadError> {
    if payload.len() != expected {
        return Err(PayloadError::BadLength { ftype, expected, got: payload.len() });
    }
    Ok(())
}

fn u32_at(bytes: &[u8], at: usize) -> u32 {
    u32::from_le_bytes(bytes[at..at + 4].try_into().expect("4-byte slice"))
}

fn f32_at(bytes: &[u8], at: usize) -> f32 {
    f32::from_le_bytes(bytes[at..at + 4].try_into().expect("4-byte slice"))
}

/// CMD body: opcode byte, then duration in ms as u32 LE (omitted for OFF).
pub fn command_payload(cmd: &TimedCommand) -> Vec<u8> {
    let mut out = vec![cmd.opcode.code()];
    if cmd.opcode != Opcode::Off {
        out.extend_from_slice(&cmd.duration_ms.unwrap_or(0).to_le_bytes());
    }
    out
}

pub fn command_frame(drone_id: u8, cmd: &TimedCommand) -> Frame {
    Frame::new(FrameType::Cmd, drone_id, cmd.seq, command_payload(cmd))
}

/// Parse a CMD frame. Bounds are left to the runtime, which nacks them.
pub fn parse_command(frame: &Frame) -> Result<TimedCommand, PayloadError> {
    expect_type(frame, FrameType::Cmd)?;
    let p = &frame.payload;
    let Some(&code) = p.first() else {
        return Err(PayloadError::BadLength { ftype: FrameType::Cmd, expected: 1, got: 0 });
    };
    let opcode = Opcode::from_code(code).ok_or(PayloadError::UnknownOpcode(code))?;
    if opcode == Opcode::Off {
        expect_len(FrameType::Cmd, p, 1)?;
        return Ok(TimedCommand::off(frame.seq));
    }
    expect_len(FrameType::Cmd, p, 5)?;
    Ok(TimedCommand::timed(opcode, u32_at(p, 1), frame.seq))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AckStatus {
    Ok,
    Duplicate,
    NackBounds,
    NackOpcode,
    NackStale,
    NotPilot,
    Conflict,
    UnknownDrone,
    Malformed,
}

impl AckStatus {
    pub const ALL: [AckStatus; 9] = [
        AckStatus::Ok,
        AckStatus::Duplicate,
        AckStatus::NackBounds,
        AckStatus::NackOpcode,
        AckStatus::NackStale,
        AckStatus::NotPilot,
        AckStatus::Conflict,
        AckStatus::UnknownDrone,
        AckStatus::Malformed,
    ];

    pub fn code(self) -> u8 {
        match self {
            AckStatus::Ok => 0x00,
            AckStatus::Duplicate => 0x01,
            AckStatus::NackBounds => 0x10,
            AckStatus::NackOpcode => 0x11,
            AckStatus::NackStale => 0x12,
            AckStatus::NotPilot => 0x20,
            AckStatus::Conflict => 0x21,
            AckStatus::UnknownDrone => 0x22,
            AckStatus::Malformed => 0x23,
        }
    }

    pub fn from_code(code: u8) -> Option<AckStatus> {
        AckStatus::ALL.into_iter().find(|s| s.code() == code)
    }

    /// Ok and Duplicate both mean the command is (or was) in effect.
    pub fn is_accepted(self) -> bool {
        matches!(self, AckStatus::Ok | AckStatus::Duplicate)
    }
}

/// ACK body: status byte, then the sim-time (ms) at which the drone applied it.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Ack {
    pub status: AckStatus,
    pub t_ms: u32,
}

impl Ack {
    pub fn to_payload(&self) -> Vec<u8> {
        let mut out = vec![self.status.code()];
        out.extend_from_slice(&self.t_ms.to_le_bytes());
        out
    }

    pub fn frame(&self, drone_id: u8, seq: u16) -> Frame {
        Frame::new(FrameType::Ack, drone_id, seq, self.to_payload())
    }

    pub fn parse(frame: &Frame) -> Result<Ack, PayloadError> {
        expect_type(frame, FrameType::Ack)?;
        expect_len(FrameType::Ack, &frame.payload, 5)?;
        let status = AckStatus::from_code(frame.payload[0])
            .ok_or(PayloadError::UnknownStatus(frame.payload[0]))?;
        Ok(Ack { status, t_ms: u32_at(&frame.payload, 1) })
    }
}

/// ANNOUNCE body: attach status, configured drone count, current sim-time ms.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Announce {
    pub status: AckStatus,
    pub drone_count: u8,
    pub t_ms: u32,
}

impl Announce {
    pub fn to_payload(&self) -> Vec<u8> {
        let mut out = vec![self.status.code(), self.drone_count];
        out.extend_from_slice(&self.t_ms.to_le_bytes());
        out
    }

    pub fn parse(frame: &Frame) -> Result<Announce, PayloadError> {
        expect_type(frame, FrameType::Announce)?;
        expect_len(FrameType::Announce, &frame.payload, 6)?;
        let p = &frame.payload;
        let status = AckStatus::from_code(p[0]).ok_or(PayloadError::UnknownStatus(p[0]))?;
        Ok(Announce { status, drone_count: p[1], t_ms: u32_at(p, 2) })
    }
}

/// HEIGHT_RESP body: height in whole millimetres, then sim-time ms.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct HeightResp {
    pub height_mm: u32,
    pub t_ms: u32,
}

impl HeightResp {
    pub fn from_meters(height: f64, t_ms: u32) -> Self {
        HeightResp { height_mm: (height * 1000.0).round().max(0.0) as u32, t_ms }
    }

    pub fn meters(&self) -> f64 {
        f64::from(self.height_mm) / 1000.0
    }

    pub fn to_payload(&self) -> Vec<u8> {
        let mut out = self.height_mm.to_le_bytes().to_vec();
        out.extend_from_slice(&self.t_ms.to_le_bytes());
        out
    }

    pub fn parse(frame: &Frame) -> Result<HeightResp, PayloadError> {
        expect_type(frame, FrameType::HeightResp)?;
        expect_len(FrameType::HeightResp, &frame.payload, 8)?;
        Ok(HeightResp { height_mm: u32_at(&frame.payload, 0), t_ms: u32_at(&frame.payload, 4) })
    }
}

pub const TELEMETRY_LEN: usize = 44;

pub const FLAG_HOLD_ENGAGED: u8 = 0b01;
pub const FLAG_FLOCK_MODE: u8 = 0b10;

/// TELEMETRY body. Channel bytes carry the active opcode or 0 when idle.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TelemetryPayload {
    pub t_ms: u32,
    pub position: [f32; 3],
    pub velocity: [f32; 3],
    pub heading: f32,
    pub yaw_rate: f32,
    pub height: f32,
    pub vertical_op: u8,
    pub yaw_op: u8,
    pub lateral_op: u8,
    pub flags: u8,
}

impl TelemetryPayload {
    pub fn to_payload(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(TELEMETRY_LEN);
        out.extend_from_slice(&self.t_ms.to_le_bytes());
        for v in self.position.iter().chain(&self.velocity) {
            out.extend_from_slice(&v.to_le_bytes());
        }
        for v in [self.heading, self.yaw_rate, self.height] {
            out.extend_from_slice(&v.to_le_bytes());
        }
        out.extend_from_slice(&[self.vertical_op, self.yaw_op, self.lateral_op, self.flags]);
        out
    }

    pub fn parse(frame: &Frame) -> Result<TelemetryPayload, PayloadError> {
        expect_type(frame, FrameType::Telemetry)?;
        let p = &frame.payload;
        expect_len(FrameType::Telemetry, p, TELEMETRY_LEN)?;
        let f = |i: usize| f32_at(p, 4 + 4 * i);
        Ok(TelemetryPayload {
            t_ms: u32_at(p, 0),
            position: [f(0), f(1), f(2)],
            velocity: [f(3), f(4), f(5)],
            heading: f(6),
            yaw_rate: f(7),
            height: f(8),
            vertical_op: p[40],
            yaw_op: p[41],
            lateral_op: p[42],
            flags: p[43],
        })
    }
}

pub const PEER_SNAPSHOT_TAG: u8 = 0x01;
pub const PEER_SNAPSHOT_LEN: usize = 29;

/// Flocking state broadcast: tag 0x01, f32 position ×3, f32 velocity ×3,
/// u32 sim-time ms at which the sender sampled itself.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PeerStatePayload {
    pub position: [f32; 3],
    pub velocity: [f32; 3],
    pub t_ms: u32,
}

impl PeerStatePayload {
    pub fn to_payload(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(PEER_SNAPSHOT_LEN);
        out.push(PEER_SNAPSHOT_TAG);
        for v in self.position.iter().chain(&self.velocity) {
            out.extend_from_slice(&v.to_le_bytes());
        }
        out.extend_from_slice(&self.t_ms.to_le_bytes());
        out
    }

    pub fn parse(payload: &[u8]) -> Result<PeerStatePayload, PayloadError> {
        match payload.first() {
            Some(&PEER_SNAPSHOT_TAG) => {}
            Some(&tag) => return Err(PayloadError::UnknownTag(tag)),
            None => {
                return Err(PayloadError::BadLength {
                    ftype: FrameType::Peer,
                    expected: PEER_SNAPSHOT_LEN,
                    got: 0,
                })
            }
        }
        expect_len(FrameType::Peer, payload, PEER_SNAPSHOT_LEN)?;
        let f = |i: usize| f32_at(payload, 1 + 4 * i);
        Ok(PeerStatePayload {
            position: [f(0), f(1), f(2)],
            velocity: [f(3), f(4), f(5)],
            t_ms: u32_at(payload, 25),
        })
    }
}

/// Sim-time in whole milliseconds as carried on the wire.
pub fn to_millis(t: f64) -> u32 {
    (t * 1000.0).round().clamp(0.0, f64::from(u32::MAX)) as u32
}
