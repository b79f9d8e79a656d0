use std::collections::HashMap;

use super::FrameType;

/// How far ahead of the last accepted sequence number a frame may be.
pub const SEQ_WINDOW: u16 = 1024;

/// Frames are sequenced independently per class.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum SeqClass {
    Command,
    Query,
    Peer,
    Telemetry,
    Control,
}

impl From<FrameType> for SeqClass {
    fn from(ftype: FrameType) -> Self {
        match ftype {
            FrameType::Cmd | FrameType::Ack => SeqClass::Command,
            FrameType::HeightReq | FrameType::HeightResp => SeqClass::Query,
            FrameType::Peer => SeqClass::Peer,
            FrameType::Telemetry => SeqClass::Telemetry,
            FrameType::Discover | FrameType::Announce => SeqClass::Control,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SeqVerdict {
    Accept,
    Duplicate,
    Stale,
}

/// Forward distance from `from` to `to` on the 16-bit circle.
pub fn circular_distance(from: u16, to: u16) -> u16 {
    to.wrapping_sub(from)
}

/// Per-connection replay guard. The first frame of each class is accepted
/// unconditionally; afterwards only numbers 1..=1024 ahead are.
#[derive(Debug, Default, Clone)]
pub struct SeqTracker {
    last: HashMap<(u8, SeqClass), u16>,
}

impl SeqTracker {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn last(&self, drone_id: u8, class: SeqClass) -> Option<u16> {
        self.last.get(&(drone_id, class)).copied()
    }

    /// Classify without recording.
    pub fn check(&self, drone_id: u8, class: SeqClass, seq: u16) -> SeqVerdict {
        match self.last(drone_id, class) {
            None => SeqVerdict::Accept,
            Some(last) => match circular_distance(last, seq) {
                0 => SeqVerdict::Duplicate,
                d if d <= SEQ_WINDOW => SeqVerdict::Accept,
                _ => SeqVerdict::Stale,
            },
        }
    }

    pub fn accept_seq(&mut self, drone_id: u8, class: SeqClass, seq: u16) -> SeqVerdict {
        let verdict = self.check(drone_id, class, seq);
        if verdict == SeqVerdict::Accept {
            self.last.insert((drone_id, class), seq);
        }
        verdict
    }
}
