use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::crc16_ccitt_false;

pub const MAGIC: [u8; 2] = [0x42, 0x44];
pub const VERSION: u8 = 0x01;
pub const MAX_PAYLOAD: usize = 512;
/// magic + version + type + drone + seq + len
pub const HEADER_LEN: usize = 9;
pub const TRAILER_LEN: usize = 2;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum FrameType {
    Cmd,
    Ack,
    Telemetry,
    Peer,
    Discover,
    Announce,
    HeightReq,
    HeightResp,
}

impl FrameType {
    pub const ALL: [FrameType; 8] = [
        FrameType::Cmd,
        FrameType::Ack,
        FrameType::Telemetry,
        FrameType::Peer,
        FrameType::Discover,
        FrameType::Announce,
        FrameType::HeightReq,
        FrameType::HeightResp,
    ];

    pub fn code(self) -> u8 {
        match self {
            FrameType::Cmd => 0x10,
            FrameType::Ack => 0x11,
            FrameType::Telemetry => 0x20,
            FrameType::Peer => 0x30,
            FrameType::Discover => 0x40,
            FrameType::Announce => 0x41,
            FrameType::HeightReq => 0x50,
            FrameType::HeightResp => 0x51,
        }
    }

    pub fn from_code(code: u8) -> Option<FrameType> {
        FrameType::ALL.into_iter().find(|t| t.code() == code)
    }
}

impl fmt::Display for FrameType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let name = match self {
            FrameType::Cmd => "CMD",
            FrameType::Ack => "ACK",
            FrameType::Telemetry => "TELEMETRY",
            FrameType::Peer => "PEER",
            FrameType::Discover => "DISCOVER",
            FrameType::Announce => "ANNOUNCE",
            FrameType::HeightReq => "HEIGHT_REQ",
            FrameType::HeightResp => "HEIGHT_RESP",
        };
        f.write_str(name)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Frame {
    pub ftype: FrameType,
    pub drone_id: u8,
    pub seq: u16,
    pub payload: Vec<u8>,
}

impl Frame {
    pub fn new(ftype: FrameType, drone_id: u8, seq: u16, payload: Vec<u8>) -> Self {
        Frame { ftype, drone_id, seq, payload }
    }

    pub fn encoded_len(&self) -> usize {
        HEADER_LEN + self.payload.len() + TRAILER_LEN
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Error)]
pub enum FrameError {
    #[error("magic mismatch: expected 42 44, got {0:02X} {1:02X}")]
    MagicMismatch(u8, u8),
    #[error("unsupported protocol version {0:#04x}")]
    VersionUnsupported(u8),
    #[error("length overrun: frame needs {needed} bytes, have {available}")]
    LengthOverrun { needed: usize, available: usize },
    #[error("crc mismatch: computed {computed:#06x}, frame carries {carried:#06x}")]
    CrcMismatch { computed: u16, carried: u16 },
    #[error("unknown frame type {0:#04x}")]
    UnknownType(u8),
    #[error("{0} trailing bytes after frame")]
    TrailingBytes(usize),
    #[error("payload of {0} bytes exceeds 512")]
    PayloadTooLong(usize),
}

pub fn encode_frame(frame: &Frame) -> Result<Vec<u8>, FrameError> {
    let len = frame.payload.len();
    if len > MAX_PAYLOAD {
        return Err(FrameError::PayloadTooLong(len));
    }
    let mut out = Vec::with_capacity(frame.encoded_len());
    out.extend_from_slice(&MAGIC);
    out.push(VERSION);
    out.push(frame.ftype.code());
    out.push(frame.drone_id);
    out.extend_from_slice(&frame.seq.to_le_bytes());
    out.extend_from_slice(&(len as u16).to_le_bytes());
    out.extend_from_slice(&frame.payload);
    let crc = crc16_ccitt_false(&out);
    out.extend_from_slice(&crc.to_le_bytes());
    Ok(out)
}

/// Outcome of parsing the front of a byte stream.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Parse {
    /// A frame and the number of bytes it occupied.
    Frame(Frame, usize),
    /// More bytes are needed; holds the total frame size when known.
    Incomplete(usize),
    Invalid(FrameError),
}

/// Parse one frame from the front of `buf`, leaving any remainder untouched.
pub fn decode_prefix(buf: &[u8]) -> Parse {
    if buf.len() < HEADER_LEN {
        // reject bad magic/version as early as the bytes allow
        if buf.len() >= 2 && buf[..2] != MAGIC {
            return Parse::Invalid(FrameError::MagicMismatch(buf[0], buf[1]));
        }
        return Parse::Incomplete(HEADER_LEN);
    }
    if buf[..2] != MAGIC {
        return Parse::Invalid(FrameError::MagicMismatch(buf[0], buf[1]));
    }
    if buf[2] != VERSION {
        return Parse::Invalid(FrameError::VersionUnsupported(buf[2]));
    }
    let payload_len = usize::from(u16::from_le_bytes([buf[7], buf[8]]));
    let needed = HEADER_LEN + payload_len + TRAILER_LEN;
    if payload_len > MAX_PAYLOAD {
        return Parse::Invalid(FrameError::LengthOverrun { needed, available: buf.len() });
    }
    if buf.len() < needed {
        return Parse::Incomplete(needed);
    }
    let body_end = HEADER_LEN + payload_len;
    let computed = crc16_ccitt_false(&buf[..body_end]);
    let carried = u16::from_le_bytes([buf[body_end], buf[body_end + 1]]);
    if computed != carried {
        return Parse::Invalid(FrameError::CrcMismatch { computed, carried });
    }
    let Some(ftype) = FrameType::from_code(buf[3]) else {
        return Parse::Invalid(FrameError::UnknownType(buf[3]));
    };
    let frame = Frame {
        ftype,
        drone_id: buf[4],
        seq: u16::from_le_bytes([buf[5], buf[6]]),
        payload: buf[HEADER_LEN..body_end].to_vec(),
    };
    Parse::Frame(frame, needed)
}

/// Decode a buffer holding exactly one frame.
pub fn decode_frame(bytes: &[u8]) -> Result<Frame, FrameError> {
    match decode_prefix(bytes) {
        Parse::Frame(frame, used) if used == bytes.len() => Ok(frame),
        Parse::Frame(_, used) => Err(FrameError::TrailingBytes(bytes.len() - used)),
        Parse::Incomplete(needed) => {
            Err(FrameError::LengthOverrun { needed, available: bytes.len() })
        }
        Parse::Invalid(err) => Err(err),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn discover_layout() {
        let bytes = encode_frame(&Frame::new(FrameType::Discover, 0, 0, vec![])).unwrap();
        assert_eq!(&bytes[..9], &[0x42, 0x44, 0x01, 0x40, 0x00, 0x00, 0x00, 0x00, 0x00]);
        assert_eq!(bytes.len(), 11);
        let crc = crc16_ccitt_false(&bytes[..9]);
        assert_eq!(&bytes[9..], &crc.to_le_bytes());
    }

    #[test]
    fn truncated_header_is_length_overrun() {
        let bytes = encode_frame(&Frame::new(FrameType::Discover, 0, 0, vec![])).unwrap();
        for cut in 0..bytes.len() {
            assert!(matches!(
                decode_frame(&bytes[..cut]),
                Err(FrameError::LengthOverrun { .. })
            ));
        }
    }

    #[test]
    fn distinct_errors() {
        let good = encode_frame(&Frame::new(FrameType::Ack, 2, 9, vec![0, 0, 0, 0, 0])).unwrap();

        let mut bad = good.clone();
        bad[0] = 0x00;
        assert!(matches!(decode_frame(&bad), Err(FrameError::MagicMismatch(0x00, 0x44))));

        let mut bad = good.clone();
        bad[2] = 0x02;
        assert_eq!(decode_frame(&bad), Err(FrameError::VersionUnsupported(0x02)));

        let mut bad = good.clone();
        bad[7] = 0x01;
        bad[8] = 0x02; // 513
        assert!(matches!(decode_frame(&bad), Err(FrameError::LengthOverrun { .. })));

        let mut bad = good.clone();
        *bad.last_mut().unwrap() ^= 0xFF;
        assert!(matches!(decode_frame(&bad), Err(FrameError::CrcMismatch { .. })));

        // unknown type with a valid crc
        let mut bad = good[..good.len() - 2].to_vec();
        bad[3] = 0x99;
        let crc = crc16_ccitt_false(&bad);
        bad.extend_from_slice(&crc.to_le_bytes());
        assert_eq!(decode_frame(&bad), Err(FrameError::UnknownType(0x99)));

        let mut extra = good.clone();
        extra.push(0);
        assert_eq!(decode_frame(&extra), Err(FrameError::TrailingBytes(1)));
    }

    #[test]
    fn payload_limit() {
        assert!(encode_frame(&Frame::new(FrameType::Peer, 1, 1, vec![0; 512])).is_ok());
        assert_eq!(
            encode_frame(&Frame::new(FrameType::Peer, 1, 1, vec![0; 513])),
            Err(FrameError::PayloadTooLong(513))
        );
    }

    #[test]
    fn prefix_leaves_remainder() {
        let a = encode_frame(&Frame::new(FrameType::HeightReq, 1, 1, vec![])).unwrap();
        let b = encode_frame(&Frame::new(FrameType::HeightReq, 1, 2, vec![])).unwrap();
        let joined = [a.clone(), b].concat();
        match decode_prefix(&joined) {
            Parse::Frame(f, used) => {
                assert_eq!(f.seq, 1);
                assert_eq!(used, a.len());
            }
            other => panic!("unexpected {other:?}"),
        }
        assert_eq!(decode_prefix(&a[..5]), Parse::Incomplete(HEADER_LEN));
        assert_eq!(decode_prefix(&a[..10]), Parse::Incomplete(11));
    }
}
