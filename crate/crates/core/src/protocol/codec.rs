use bytes::{Buf, BytesMut};
use tokio_util::codec::{Decoder, Encoder};

use super::{decode_prefix, encode_frame, Frame, FrameError, Parse, MAGIC};

/// Stream codec for a byte transport.
///
/// Corrupt input is surfaced as an `Err` item rather than a stream error;
/// the decoder then skips ahead to the next magic and keeps going.
#[derive(Debug, Default, Clone, Copy)]
pub struct FrameCodec;

impl Decoder for FrameCodec {
    type Item = Result<Frame, FrameError>;
    type Error = std::io::Error;

    fn decode(&mut self, src: &mut BytesMut) -> Result<Option<Self::Item>, Self::Error> {
        match decode_prefix(src) {
            Parse::Frame(frame, used) => {
                src.advance(used);
                Ok(Some(Ok(frame)))
            }
            Parse::Incomplete(needed) => {
                src.reserve(needed.saturating_sub(src.len()));
                Ok(None)
            }
            Parse::Invalid(err) => {
                let skip = src[1..]
                    .windows(2)
                    .position(|w| w == MAGIC)
                    .map(|p| p + 1)
                    .unwrap_or(src.len().saturating_sub(1).max(1));
                src.advance(skip.min(src.len()));
                Ok(Some(Err(err)))
            }
        }
    }
}

impl Encoder<Frame> for FrameCodec {
    type Error = std::io::Error;

    fn encode(&mut self, item: Frame, dst: &mut BytesMut) -> Result<(), Self::Error> {
        let bytes = encode_frame(&item)
            .map_err(|e| std::io::Error::new(std::io::ErrorKind::InvalidInput, e))?;
        dst.extend_from_slice(&bytes);
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::protocol::FrameType;

    #[test]
    fn resyncs_after_garbage() {
        let good = encode_frame(&Frame::new(FrameType::HeightReq, 1, 7, vec![])).unwrap();
        let mut buf = BytesMut::new();
        buf.extend_from_slice(&[0xAA, 0x42, 0x00]);
        buf.extend_from_slice(&good);
        let mut codec = FrameCodec;
        let mut frames = Vec::new();
        let mut errors = 0;
        while let Some(item) = codec.decode(&mut buf).unwrap() {
            match item {
                Ok(f) => frames.push(f),
                Err(_) => errors += 1,
            }
        }
        assert!(errors >= 1);
        assert_eq!(frames.len(), 1);
        assert_eq!(frames[0].seq, 7);
        assert!(buf.is_empty());
    }

    #[test]
    fn waits_for_more_bytes() {
        let good = encode_frame(&Frame::new(FrameType::Cmd, 1, 7, vec![7])).unwrap();
        let mut buf = BytesMut::from(&good[..6]);
        assert!(FrameCodec.decode(&mut buf).unwrap().is_none());
        buf.extend_from_slice(&good[6..]);
        assert!(matches!(FrameCodec.decode(&mut buf).unwrap(), Some(Ok(_))));
    }
}
