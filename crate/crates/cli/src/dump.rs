//! Human-readable frame listings.

use std::fmt::Write;

use blimp_core::protocol::payload::{parse_command, Ack, Announce, HeightResp, PeerStatePayload, TelemetryPayload};
use blimp_core::protocol::{decode_prefix, Frame, FrameError, FrameType, Parse, HEADER_LEN};

/// Describe every frame in `bytes`.
pub fn dump(bytes: &[u8]) -> Result<String, FrameError> {
    let mut out = String::new();
    let mut rest = bytes;
    while !rest.is_empty() {
        match decode_prefix(rest) {
            Parse::Frame(frame, used) => {
                if !out.is_empty() {
                    out.push('\n');
                }
                let crc = u16::from_le_bytes([rest[used - 2], rest[used - 1]]);
                describe(&mut out, &frame, crc);
                rest = &rest[used..];
            }
            Parse::Incomplete(needed) => {
                return Err(FrameError::LengthOverrun { needed, available: rest.len() });
            }
            Parse::Invalid(e) => return Err(e),
        }
    }
    Ok(out)
}

fn describe(out: &mut String, frame: &Frame, crc: u16) {
    let _ = writeln!(out, "type      {} ({:#04x})", frame.ftype, frame.ftype.code());
    let _ = writeln!(out, "drone     {}", frame.drone_id);
    let _ = writeln!(out, "seq       {}", frame.seq);
    let _ = writeln!(out, "length    {} (+{HEADER_LEN} header, +2 crc)", frame.payload.len());
    let _ = writeln!(out, "crc       {crc:#06x} ok");
    let body = match frame.ftype {
        FrameType::Cmd => parse_command(frame).map(|c| match c.duration_ms {
            Some(ms) => format!("opcode    {}\nduration  {ms} ms", c.opcode),
            None => format!("opcode    {}", c.opcode),
        }),
        FrameType::Ack => Ack::parse(frame).map(|a| format!("status    {:?}\nt         {} ms", a.status, a.t_ms)),
        FrameType::Announce => Announce::parse(frame)
            .map(|a| format!("status    {:?}\ndrones    {}\nt         {} ms", a.status, a.drone_count, a.t_ms)),
        FrameType::HeightResp => {
            HeightResp::parse(frame).map(|h| format!("height    {} mm\nt         {} ms", h.height_mm, h.t_ms))
        }
        FrameType::Telemetry => TelemetryPayload::parse(frame).map(|t| {
            format!(
                "t         {} ms\nposition  {:?}\nvelocity  {:?}\nheading   {}\nheight    {}",
                t.t_ms, t.position, t.velocity, t.heading, t.height
            )
        }),
        FrameType::Peer => Ok(match PeerStatePayload::parse(&frame.payload) {
            Ok(p) => format!("state     pos {:?} vel {:?} at {} ms", p.position, p.velocity, p.t_ms),
            Err(_) => format!("payload   {}", hex::encode(&frame.payload)),
        }),
        FrameType::Discover | FrameType::HeightReq => Ok(if frame.payload.is_empty() {
            String::new()
        } else {
            format!("payload   {}", hex::encode(&frame.payload))
        }),
    };
    match body {
        Ok(text) if text.is_empty() => {}
        Ok(text) => {
            out.push_str(&text);
            out.push('\n');
        }
        Err(e) => {
            let _ = writeln!(out, "payload   {} ({e})", hex::encode(&frame.payload));
        }
    }
}

/// Accepts spaces, colons, and an optional `0x`.
pub fn parse_hex(text: &str) -> Result<Vec<u8>, hex::FromHexError> {
    let text = text.trim();
    let text = text.strip_prefix("0x").unwrap_or(text);
    let cleaned: String = text.chars().filter(|c| !c.is_whitespace() && *c != ':').collect();
    hex::decode(cleaned)
}
