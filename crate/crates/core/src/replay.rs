//! Line-delimited JSON replay logs.
//!
//! A log is a header line, then one line per accepted input stamped with the
//! step it was applied before, then an optional end line carrying the final
//! state hash. Replaying feeds the inputs into a fresh [`World`] at the same
//! steps and recomputes the hash.

use std::fmt;
use std::io::{self, BufRead, Write};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::arena::{validate_arena, Arena, ArenaDoc};
use crate::world::{Applied, Input, World, WorldConfig, WorldError, WorldEvent};

pub const LOG_FORMAT: &str = "blimp-replay";
pub const LOG_VERSION: u32 = 1;
/// Bumped whenever stepping semantics change in a way that alters hashes.
pub const PHYSICS_VERSION: u32 = 1;

/// 64-bit hash rendered as `0x` + 16 hex digits.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct StateHash(pub u64);

impl fmt::Display for StateHash {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "0x{:016x}", self.0)
    }
}

impl std::str::FromStr for StateHash {
    type Err = std::num::ParseIntError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let digits = s.strip_prefix("0x").or_else(|| s.strip_prefix("0X")).unwrap_or(s);
        u64::from_str_radix(digits, 16).map(StateHash)
    }
}

impl Serialize for StateHash {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for StateHash {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReplayHeader {
    pub format: String,
    pub version: u32,
    pub physics_version: u32,
    pub seed: u64,
    pub world: WorldConfig,
    pub arena: ArenaDoc,
    pub arena_hash: StateHash,
}

impl ReplayHeader {
    pub fn new(world: &WorldConfig, arena: &Arena) -> Self {
        ReplayHeader {
            format: LOG_FORMAT.into(),
            version: LOG_VERSION,
            physics_version: PHYSICS_VERSION,
            seed: world.seed,
            world: world.clone(),
            arena: arena.doc().clone(),
            arena_hash: StateHash(arena.content_hash()),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InputRecord {
    pub step: u64,
    pub t: f64,
    pub input: Input,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EndRecord {
    pub step: u64,
    pub t: f64,
    pub hash: StateHash,
}

/// One line of a log file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "record", rename_all = "snake_case")]
pub enum LogLine {
    Header(ReplayHeader),
    Input(InputRecord),
    End(EndRecord),
}

impl LogLine {
    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("log lines serialize")
    }
}

#[derive(Debug, Error)]
pub enum ReplayError {
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("log has no header line")]
    MissingHeader,
    #[error("header mismatch: {0}")]
    HeaderMismatch(String),
    #[error("line {line}: sim-time {t} goes backwards (previous {previous})")]
    NonMonotonic { line: usize, t: f64, previous: f64 },
    #[error("line {line}: step {step} does not match t = {t}")]
    StepMismatch { line: usize, step: u64, t: f64 },
    #[error("line {line}: input rejected on replay: {source}")]
    Rejected { line: usize, source: WorldError },
    #[error("invalid arena in header: {0:?}")]
    Arena(Vec<String>),
    #[error(transparent)]
    World(#[from] WorldError),
    #[error(transparent)]
    Io(#[from] io::Error),
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReplayLog {
    pub header: ReplayHeader,
    pub inputs: Vec<InputRecord>,
    pub end: Option<EndRecord>,
}

impl ReplayLog {
    pub fn new(world: &WorldConfig, arena: &Arena) -> Self {
        ReplayLog { header: ReplayHeader::new(world, arena), inputs: Vec::new(), end: None }
    }

    pub fn lines(&self) -> impl Iterator<Item = LogLine> + '_ {
        std::iter::once(LogLine::Header(self.header.clone()))
            .chain(self.inputs.iter().cloned().map(LogLine::Input))
            .chain(self.end.map(LogLine::End))
    }

    pub fn write_jsonl<W: Write>(&self, mut out: W) -> io::Result<()> {
        for line in self.lines() {
            writeln!(out, "{}", line.to_json())?;
        }
        Ok(())
    }

    pub fn to_jsonl(&self) -> String {
        let mut buf = Vec::new();
        self.write_jsonl(&mut buf).expect("writing to a Vec");
        String::from_utf8(buf).expect("json is utf-8")
    }

    /// Parse a log. Ordering is checked here; semantic checks happen in [`replay`].
    pub fn read_jsonl<R: BufRead>(reader: R) -> Result<ReplayLog, ReplayError> {
        let mut header = None;
        let mut inputs = Vec::new();
        let mut end = None;
        let mut previous_t = f64::NEG_INFINITY;
        for (idx, line) in reader.lines().enumerate() {
            let line_no = idx + 1;
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let parsed: LogLine = serde_json::from_str(&line)
                .map_err(|e| ReplayError::Parse { line: line_no, message: e.to_string() })?;
            let t = match &parsed {
                LogLine::Header(_) => None,
                LogLine::Input(r) => Some(r.t),
                LogLine::End(r) => Some(r.t),
            };
            if let Some(t) = t {
                if t < previous_t {
                    return Err(ReplayError::NonMonotonic { line: line_no, t, previous: previous_t });
                }
                previous_t = t;
            }
            match parsed {
                LogLine::Header(h) if header.is_none() && line_no == 1 => header = Some(h),
                LogLine::Header(_) => {
                    return Err(ReplayError::Parse { line: line_no, message: "unexpected header".into() })
                }
                _ if header.is_none() => return Err(ReplayError::MissingHeader),
                LogLine::Input(r) if end.is_none() => inputs.push(r),
                LogLine::End(r) if end.is_none() => end = Some(r),
                _ => {
                    return Err(ReplayError::Parse { line: line_no, message: "record after end".into() })
                }
            }
        }
        let header = header.ok_or(ReplayError::MissingHeader)?;
        Ok(ReplayLog { header, inputs, end })
    }

    pub fn parse(text: &str) -> Result<ReplayLog, ReplayError> {
        Self::read_jsonl(text.as_bytes())
    }
}

/// Check the header against this build and rebuild the arena it describes.
pub fn check_header(header: &ReplayHeader) -> Result<Arena, ReplayError> {
    if header.format != LOG_FORMAT {
        return Err(ReplayError::HeaderMismatch(format!("format {:?}", header.format)));
    }
    if header.version != LOG_VERSION {
        return Err(ReplayError::HeaderMismatch(format!(
            "log version {} (this build reads {LOG_VERSION})",
            header.version
        )));
    }
    if header.physics_version != PHYSICS_VERSION {
        return Err(ReplayError::HeaderMismatch(format!(
            "physics version {} (this build is {PHYSICS_VERSION})",
            header.physics_version
        )));
    }
    if header.seed != header.world.seed {
        return Err(ReplayError::HeaderMismatch("seed disagrees with world config".into()));
    }
    let arena = validate_arena(header.arena.clone()).map_err(ReplayError::Arena)?;
    if StateHash(arena.content_hash()) != header.arena_hash {
        return Err(ReplayError::HeaderMismatch("arena hash does not match arena".into()));
    }
    Ok(arena)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ReplayOutcome {
    pub final_step: u64,
    pub final_hash: StateHash,
    /// The hash the live run wrote in its end line, if any.
    pub recorded_hash: Option<StateHash>,
}

impl ReplayOutcome {
    pub fn matches_recording(&self) -> bool {
        self.recorded_hash == Some(self.final_hash)
    }
}

/// Re-run a log from scratch.
pub fn replay(log: &ReplayLog) -> Result<ReplayOutcome, ReplayError> {
    let arena = check_header(&log.header)?;
    let dt = log.header.world.physics.dt;
    let mut world = World::new(log.header.world.clone(), arena)?;
    for (i, record) in log.inputs.iter().enumerate() {
        // header is line 1
        let line = i + 2;
        check_step(record.step, record.t, dt, line)?;
        if record.step < world.step_index() {
            return Err(ReplayError::NonMonotonic {
                line,
                t: record.t,
                previous: world.time(),
            });
        }
        world.run_until(record.step)?;
        world
            .apply(&record.input)
            .map_err(|source| ReplayError::Rejected { line, source })?;
    }
    if let Some(end) = &log.end {
        check_step(end.step, end.t, dt, log.inputs.len() + 2)?;
        world.run_until(end.step)?;
    }
    Ok(ReplayOutcome {
        final_step: world.step_index(),
        final_hash: StateHash(world.state_hash()),
        recorded_hash: log.end.map(|e| e.hash),
    })
}

fn check_step(step: u64, t: f64, dt: f64, line: usize) -> Result<(), ReplayError> {
    if (step as f64 * dt - t).abs() > 1e-6 {
        return Err(ReplayError::StepMismatch { line, step, t });
    }
    Ok(())
}

/// A world that logs every accepted input.
pub struct RecordedRun {
    world: World,
    log: ReplayLog,
}

impl RecordedRun {
    pub fn new(config: WorldConfig, arena: Arena) -> Result<Self, WorldError> {
        let log = ReplayLog::new(&config, &arena);
        Ok(RecordedRun { world: World::new(config, arena)?, log })
    }

    pub fn world(&self) -> &World {
        &self.world
    }

    /// Scenario setup outside the input stream. Only valid before the first
    /// step; anything changed here must be reproducible from the config.
    pub fn world_mut(&mut self) -> &mut World {
        &mut self.world
    }

    pub fn apply(&mut self, input: Input) -> Result<Applied, WorldError> {
        let applied = self.world.apply(&input)?;
        self.log.inputs.push(InputRecord { step: self.world.step_index(), t: self.world.time(), input });
        Ok(applied)
    }

    pub fn step(&mut self) -> Result<Vec<WorldEvent>, WorldError> {
        self.world.step()
    }

    pub fn run_until(&mut self, step: u64) -> Result<(), WorldError> {
        self.world.run_until(step)
    }

    /// Seal the log with the current step and hash.
    pub fn finish(mut self) -> (World, ReplayLog) {
        self.log.end = Some(EndRecord {
            step: self.world.step_index(),
            t: self.world.time(),
            hash: StateHash(self.world.state_hash()),
        });
        (self.world, self.log)
    }
}
