//! Binary framing for ground↔drone and drone↔drone traffic.
//!
//! Every frame is `magic(2) version(1) type(1) drone(1) seq(2) len(2)
//! payload(len) crc(2)`, little-endian, with a CRC-16/CCITT-FALSE trailer
//! computed over everything before it. See `docs/protocol.md`.

mod crc;
mod frame;
pub mod payload;
mod seq;

#[cfg(feature = "codec")]
mod codec;

pub use crc::crc16_ccitt_false;
pub use frame::{
    decode_frame, decode_prefix, encode_frame, Frame, FrameError, FrameType, Parse, HEADER_LEN,
    MAGIC, MAX_PAYLOAD, TRAILER_LEN, VERSION,
};
pub use seq::{circular_distance, SeqClass, SeqTracker, SeqVerdict, SEQ_WINDOW};

#[cfg(feature = "codec")]
pub use codec::FrameCodec;
