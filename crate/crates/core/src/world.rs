//! The simulated fleet stepped at a fixed rate.
//!
//! All external inputs enter through [`World::apply`] and take effect on
//! step boundaries, so a run is fully determined by its seed, config, arena,
//! and the `(step, input)` sequence. Network effects (latency, PEER loss) are
//! scheduled in sim-time using a seeded stream.

use std::collections::{BTreeMap, VecDeque};
use std::hash::Hasher;

use fnv::FnvHasher;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::arena::{
    check_collision, resolve_contacts, update_progress, Arena, Contact, CourseProgress,
};
use crate::dynamics::{self, DroneState, DynamicsError, PhysicsParams, Vec3};
use crate::flock::{
    avoidance_accel, blend, flock_accel, flock_to_channels, neighbors, FlockParams, PeerSnapshot,
};
use crate::protocol::payload::{
    to_millis, PeerStatePayload, TelemetryPayload, FLAG_FLOCK_MODE, FLAG_HOLD_ENGAGED,
};
use crate::protocol::MAX_PAYLOAD;
use crate::runtime::{
    self, AltitudeHold, Channel, Channels, HoldGains, Nack, Opcode, SensorParams, TimedCommand,
};

/// RNG stream reserved for the relay; drone `i` uses stream `i`.
pub const LINK_STREAM: u64 = 0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LinkModel {
    /// Fixed one-hop delay applied to commands, queries, and PEER copies.
    pub latency_ms: u32,
    /// Per-copy drop probability for PEER frames only.
    pub loss_prob: f64,
}

impl Default for LinkModel {
    fn default() -> Self {
        LinkModel { latency_ms: 20, loss_prob: 0.0 }
    }
}

impl LinkModel {
    /// Settings for the flocking capstone.
    pub fn lossy() -> Self {
        LinkModel { latency_ms: 50, loss_prob: 0.1 }
    }

    pub fn latency_steps(&self, dt: f64) -> u64 {
        (f64::from(self.latency_ms) / 1000.0 / dt).round() as u64
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct WorldConfig {
    pub seed: u64,
    pub drones: u8,
    pub physics: PhysicsParams,
    pub hold: HoldGains,
    pub sensor: SensorParams,
    pub link: LinkModel,
    pub flock: FlockParams,
    /// Physics steps between telemetry snapshots.
    pub telemetry_every: u32,
}

impl Default for WorldConfig {
    fn default() -> Self {
        WorldConfig {
            seed: 42,
            drones: 3,
            physics: PhysicsParams::default(),
            hold: HoldGains::default(),
            sensor: SensorParams::default(),
            link: LinkModel::default(),
            flock: FlockParams::default(),
            telemetry_every: 5,
        }
    }
}

impl WorldConfig {
    pub fn validate(&self) -> Vec<String> {
        let mut errors = self.physics.validate();
        errors.extend(self.flock.validate());
        if self.drones == 0 || self.drones == u8::MAX {
            errors.push("drones must be in 1..=254".into());
        }
        if !(0.0..=1.0).contains(&self.link.loss_prob) {
            errors.push("link.loss_prob must be in [0, 1]".into());
        }
        if !(self.sensor.quantum > 0.0) || !(self.sensor.noise_sd >= 0.0) {
            errors.push("sensor.quantum must be > 0 and noise_sd >= 0".into());
        }
        if self.telemetry_every == 0 {
            errors.push("telemetry_every must be >= 1".into());
        }
        errors
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum WorldError {
    #[error("unknown drone {0}")]
    UnknownDrone(u8),
    #[error("payload of {0} bytes exceeds 512")]
    PayloadTooLong(usize),
    #[error("drone {0} already has a trial in progress")]
    TrialActive(u8),
    #[error("drone {0} has no trial in progress")]
    NoTrial(u8),
    #[error("invalid world config: {0:?}")]
    InvalidConfig(Vec<String>),
    #[error(transparent)]
    Dynamics(#[from] DynamicsError),
}

/// Everything that can influence a run from outside. These are what a
/// replay log records.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Input {
    Command { drone: u8, cmd: TimedCommand },
    HeightQuery { drone: u8 },
    Peer { src: u8, dst: Option<u8>, payload: Vec<u8> },
    FlockMode { drone: u8, enabled: bool },
    RaceArm { drone: u8 },
    RaceAbort { drone: u8 },
}

/// Immediate result of [`World::apply`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Applied {
    /// Scheduled; the outcome arrives later as an event with this ticket.
    Ticket(u64),
    /// PEER copies that survived the loss draw.
    Relayed(usize),
    Done,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ChannelSummary {
    pub vertical: Option<Opcode>,
    pub yaw: Option<Opcode>,
    pub lateral: Option<Opcode>,
}

impl From<&Channels> for ChannelSummary {
    fn from(ch: &Channels) -> Self {
        ChannelSummary {
            vertical: ch.active_opcode(Channel::Vertical),
            yaw: ch.active_opcode(Channel::Yaw),
            lateral: ch.active_opcode(Channel::Lateral),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TelemetrySnapshot {
    pub drone_id: u8,
    pub t: f64,
    pub position: [f64; 3],
    pub velocity: [f64; 3],
    pub heading: f64,
    pub yaw_rate: f64,
    pub height_sensor: f64,
    pub channels: ChannelSummary,
    pub hold_engaged: bool,
    pub flock_mode: bool,
    pub next_hoop: Option<usize>,
}

impl TelemetrySnapshot {
    pub fn to_payload(&self) -> TelemetryPayload {
        let f = |v: [f64; 3]| [v[0] as f32, v[1] as f32, v[2] as f32];
        let op = |o: Option<Opcode>| o.map_or(0, Opcode::code);
        let mut flags = 0;
        if self.hold_engaged {
            flags |= FLAG_HOLD_ENGAGED;
        }
        if self.flock_mode {
            flags |= FLAG_FLOCK_MODE;
        }
        TelemetryPayload {
            t_ms: to_millis(self.t),
            position: f(self.position),
            velocity: f(self.velocity),
            heading: self.heading as f32,
            yaw_rate: self.yaw_rate as f32,
            height: self.height_sensor as f32,
            vertical_op: op(self.channels.vertical),
            yaw_op: op(self.channels.yaw),
            lateral_op: op(self.channels.lateral),
            flags,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "event", rename_all = "snake_case")]
pub enum WorldEvent {
    CommandApplied { ticket: u64, drone: u8, seq: u16, opcode: Opcode, result: Result<(), Nack>, t: f64 },
    HeightRead { ticket: u64, drone: u8, height: f64, t: f64 },
    PeerDelivered { src: u8, dst: u8, payload: Vec<u8>, t: f64 },
    Telemetry { t: f64, snapshots: Vec<TelemetrySnapshot> },
    Contact { drone: u8, contacts: Vec<Contact>, t: f64 },
    RaceArmed { drone: u8, t: f64 },
    HoopCrossed { drone: u8, hoop: usize, t: f64 },
    TrialFinished { drone: u8, start_t: f64, finish_t: f64 },
    TrialAborted { drone: u8, t: f64 },
}

#[derive(Debug, Clone)]
enum Pending {
    Command { ticket: u64, drone: u8, cmd: TimedCommand },
    Height { ticket: u64, drone: u8 },
    Peer { src: u8, dst: u8, payload: Vec<u8> },
}

#[derive(Debug, Clone)]
pub struct Drone {
    pub id: u8,
    pub state: DroneState,
    pub channels: Channels,
    pub hold: AltitudeHold,
    pub flock_mode: bool,
    pub progress: Option<CourseProgress>,
    /// Newest snapshot received from each peer.
    pub peers: BTreeMap<u8, PeerSnapshot>,
    rng: ChaCha8Rng,
}

impl Drone {
    pub fn is_racing(&self) -> bool {
        self.progress.as_ref().is_some_and(|p| !p.finished())
    }
}

pub struct World {
    config: WorldConfig,
    arena: Arena,
    drones: Vec<Drone>,
    step: u64,
    link_rng: ChaCha8Rng,
    /// Keyed by delivery step; each bucket is FIFO.
    pending: BTreeMap<u64, VecDeque<Pending>>,
    next_ticket: u64,
}

impl World {
    pub fn new(config: WorldConfig, arena: Arena) -> Result<World, WorldError> {
        let errors = config.validate();
        if !errors.is_empty() {
            return Err(WorldError::InvalidConfig(errors));
        }
        let drones = (1..=config.drones)
            .map(|id| {
                let spawn = arena.spawn_for(usize::from(id - 1));
                let state = DroneState::at_rest(Vec3::from(spawn.position), spawn.heading);
                Drone {
                    id,
                    state,
                    channels: Channels::default(),
                    hold: AltitudeHold::engaged_at(state.position.z, config.hold),
                    flock_mode: false,
                    progress: None,
                    peers: BTreeMap::new(),
                    rng: stream_rng(config.seed, u64::from(id)),
                }
            })
            .collect();
        Ok(World {
            link_rng: stream_rng(config.seed, LINK_STREAM),
            config,
            arena,
            drones,
            step: 0,
            pending: BTreeMap::new(),
            next_ticket: 0,
        })
    }

    pub fn config(&self) -> &WorldConfig {
        &self.config
    }

    pub fn arena(&self) -> &Arena {
        &self.arena
    }

    pub fn step_index(&self) -> u64 {
        self.step
    }

    pub fn time(&self) -> f64 {
        self.step as f64 * self.config.physics.dt
    }

    pub fn drones(&self) -> &[Drone] {
        &self.drones
    }

    pub fn drone(&self, id: u8) -> Result<&Drone, WorldError> {
        self.index(id).map(|i| &self.drones[i])
    }

    /// Direct state access for scenario setup. Not an input: anything done
    /// here is invisible to replay logs.
    pub fn drone_mut(&mut self, id: u8) -> Result<&mut Drone, WorldError> {
        let i = self.index(id)?;
        Ok(&mut self.drones[i])
    }

    fn index(&self, id: u8) -> Result<usize, WorldError> {
        let i = usize::from(id).wrapping_sub(1);
        if i < self.drones.len() {
            Ok(i)
        } else {
            Err(WorldError::UnknownDrone(id))
        }
    }

    fn schedule(&mut self, item: Pending) {
        let at = self.step + self.config.link.latency_steps(self.config.physics.dt);
        self.pending.entry(at).or_default().push_back(item);
    }

    fn ticket(&mut self) -> u64 {
        let t = self.next_ticket;
        self.next_ticket += 1;
        t
    }

    /// Feed one external input at the current step.
    pub fn apply(&mut self, input: &Input) -> Result<Applied, WorldError> {
        match input {
            Input::Command { drone, cmd } => {
                self.index(*drone)?;
                let ticket = self.ticket();
                self.schedule(Pending::Command { ticket, drone: *drone, cmd: *cmd });
                Ok(Applied::Ticket(ticket))
            }
            Input::HeightQuery { drone } => {
                self.index(*drone)?;
                let ticket = self.ticket();
                self.schedule(Pending::Height { ticket, drone: *drone });
                Ok(Applied::Ticket(ticket))
            }
            Input::Peer { src, dst, payload } => {
                self.relay_peer(*src, *dst, payload).map(Applied::Relayed)
            }
            Input::FlockMode { drone, enabled } => {
                let d = self.drone_mut(*drone)?;
                if d.flock_mode != *enabled {
                    d.flock_mode = *enabled;
                    d.channels = Channels::default();
                    d.hold.engage(d.state.position.z);
                }
                Ok(Applied::Done)
            }
            Input::RaceArm { drone } => {
                let now = self.time();
                let arena = self.arena.clone();
                let d = self.drone_mut(*drone)?;
                if d.is_racing() {
                    return Err(WorldError::TrialActive(*drone));
                }
                d.progress = Some(CourseProgress::armed(&arena, now));
                Ok(Applied::Done)
            }
            Input::RaceAbort { drone } => {
                let d = self.drone_mut(*drone)?;
                if !d.is_racing() {
                    return Err(WorldError::NoTrial(*drone));
                }
                d.progress = None;
                Ok(Applied::Done)
            }
        }
    }

    /// Fan a PEER payload out through the lossy relay. Each copy gets its own
    /// loss draw from the link stream, in ascending destination order.
    pub fn relay_peer(&mut self, src: u8, dst: Option<u8>, payload: &[u8]) -> Result<usize, WorldError> {
        self.index(src)?;
        if payload.len() > MAX_PAYLOAD {
            return Err(WorldError::PayloadTooLong(payload.len()));
        }
        let targets: Vec<u8> = match dst {
            Some(d) => {
                self.index(d)?;
                vec![d]
            }
            None => self.drones.iter().map(|d| d.id).filter(|&id| id != src).collect(),
        };
        let mut delivered = 0;
        for dst in targets {
            let draw: f64 = self.link_rng.random();
            if draw < self.config.link.loss_prob {
                continue;
            }
            delivered += 1;
            self.schedule(Pending::Peer { src, dst, payload: payload.to_vec() });
        }
        Ok(delivered)
    }

    /// Advance one physics step and report what happened during it.
    pub fn step(&mut self) -> Result<Vec<WorldEvent>, WorldError> {
        let mut events = Vec::new();
        let now = self.time();
        let physics = self.config.physics;

        if let Some(due) = self.pending.remove(&self.step) {
            for item in due {
                self.deliver(item, now, &mut events);
            }
        }

        for i in 0..self.drones.len() {
            let thrust = self.control(i, now);
            let d = &mut self.drones[i];
            d.state.thrust = thrust.clamped(&physics);
            let before = d.state.position;
            let mut next = dynamics::step(&d.state, &physics)?;
            next.time = (self.step + 1) as f64 * physics.dt;
            let contacts = check_collision(&next, &self.arena);
            if !contacts.is_empty() {
                resolve_contacts(&mut next, &contacts, &self.arena);
                events.push(WorldEvent::Contact { drone: d.id, contacts, t: next.time });
            }
            d.state = next;
            if let Some(progress) = d.progress.as_mut().filter(|p| !p.finished()) {
                if let Some(hoop) = update_progress(progress, &self.arena, (&before, &next.position), next.time) {
                    events.push(WorldEvent::HoopCrossed { drone: d.id, hoop, t: next.time });
                    if let (Some(start_t), Some(finish_t)) = (progress.start_t, progress.finish_t) {
                        events.push(WorldEvent::TrialFinished { drone: d.id, start_t, finish_t });
                    }
                }
            }
        }

        self.step += 1;
        if self.step % u64::from(self.config.telemetry_every) == 0 {
            let t = self.time();
            let snapshots = (0..self.drones.len()).map(|i| self.snapshot(i)).collect();
            events.push(WorldEvent::Telemetry { t, snapshots });
            self.broadcast_flock_state()?;
        }
        Ok(events)
    }

    /// Step until the world reaches `step`, discarding events.
    pub fn run_until(&mut self, step: u64) -> Result<(), WorldError> {
        while self.step < step {
            self.step()?;
        }
        Ok(())
    }

    fn deliver(&mut self, item: Pending, now: f64, events: &mut Vec<WorldEvent>) {
        match item {
            Pending::Command { ticket, drone, cmd } => {
                let i = usize::from(drone - 1);
                let d = &mut self.drones[i];
                let result = runtime::enqueue(&mut d.channels, &mut d.hold, &cmd, now, d.state.position.z);
                events.push(WorldEvent::CommandApplied {
                    ticket,
                    drone,
                    seq: cmd.seq,
                    opcode: cmd.opcode,
                    result,
                    t: now,
                });
            }
            Pending::Height { ticket, drone } => {
                let sensor = self.config.sensor;
                let d = &mut self.drones[usize::from(drone - 1)];
                let height = runtime::read_height(&d.state, sensor.quantum, sensor.noise_sd, &mut d.rng);
                events.push(WorldEvent::HeightRead { ticket, drone, height, t: now });
            }
            Pending::Peer { src, dst, payload } => {
                if let Ok(snap) = PeerStatePayload::parse(&payload) {
                    let f = |v: [f32; 3]| Vec3::new(f64::from(v[0]), f64::from(v[1]), f64::from(v[2]));
                    let incoming = PeerSnapshot {
                        drone_id: src,
                        position: f(snap.position),
                        velocity: f(snap.velocity),
                        stamped: f64::from(snap.t_ms) / 1000.0,
                        received: now,
                    };
                    let d = &mut self.drones[usize::from(dst - 1)];
                    let newer = d.peers.get(&src).is_none_or(|old| old.stamped <= incoming.stamped);
                    if newer {
                        d.peers.insert(src, incoming);
                    }
                }
                events.push(WorldEvent::PeerDelivered { src, dst, payload, t: now });
            }
        }
    }

    fn control(&mut self, i: usize, now: f64) -> dynamics::ChannelThrust {
        let physics = self.config.physics;
        let flock = self.config.flock;
        let d = &mut self.drones[i];
        if !d.flock_mode {
            return runtime::tick(&mut d.channels, &mut d.hold, &d.state, &physics, now);
        }
        let me = PeerSnapshot::of(d.id, &d.state);
        let fresh: Vec<PeerSnapshot> = d.peers.values().filter(|s| s.is_fresh(now)).copied().collect();
        let near = neighbors(&me, &fresh, now, &flock);
        let accel = blend(avoidance_accel(&me, &fresh, &flock), flock_accel(&me, &near, &flock), &flock);
        let hover = d.hold.update(&d.state, &physics);
        flock_to_channels(&accel, &d.state, &physics, &flock, hover)
    }

    fn snapshot(&mut self, i: usize) -> TelemetrySnapshot {
        let sensor = self.config.sensor;
        let d = &mut self.drones[i];
        let height_sensor = runtime::read_height(&d.state, sensor.quantum, sensor.noise_sd, &mut d.rng);
        TelemetrySnapshot {
            drone_id: d.id,
            t: d.state.time,
            position: d.state.position.into(),
            velocity: d.state.velocity.into(),
            heading: d.state.heading,
            yaw_rate: d.state.yaw_rate,
            height_sensor,
            channels: ChannelSummary::from(&d.channels),
            hold_engaged: d.hold.engaged,
            flock_mode: d.flock_mode,
            next_hoop: d.progress.as_ref().map(|p| p.next_hoop),
        }
    }

    fn broadcast_flock_state(&mut self) -> Result<(), WorldError> {
        let senders: Vec<(u8, Vec<u8>)> = self
            .drones
            .iter()
            .filter(|d| d.flock_mode)
            .map(|d| {
                let f = |v: Vec3| [v.x as f32, v.y as f32, v.z as f32];
                let payload = PeerStatePayload {
                    position: f(d.state.position),
                    velocity: f(d.state.velocity),
                    t_ms: to_millis(d.state.time),
                };
                (d.id, payload.to_payload())
            })
            .collect();
        for (src, payload) in senders {
            self.relay_peer(src, None, &payload)?;
        }
        Ok(())
    }

    /// FNV-1a 64 over the canonical little-endian encoding of the fleet.
    /// The exact byte order is documented in `docs/replay.md`.
    pub fn state_hash(&self) -> u64 {
        let mut bytes = Vec::with_capacity(256 * self.drones.len() + 8);
        bytes.extend_from_slice(&self.step.to_le_bytes());
        for d in &self.drones {
            bytes.push(d.id);
            let s = &d.state;
            let floats = [
                s.position.x, s.position.y, s.position.z,
                s.velocity.x, s.velocity.y, s.velocity.z,
                s.heading, s.yaw_rate,
                s.thrust.vertical, s.thrust.yaw, s.thrust.lateral,
                s.time,
                d.hold.target_z, d.hold.integral,
            ];
            for v in floats {
                bytes.extend_from_slice(&v.to_bits().to_le_bytes());
            }
            bytes.push(u8::from(d.hold.engaged));
            for ch in d.channels.iter() {
                match ch.active {
                    Some(a) => {
                        bytes.push(a.opcode.code());
                        bytes.extend_from_slice(&a.expires_at.to_bits().to_le_bytes());
                    }
                    None => {
                        bytes.push(0);
                        bytes.extend_from_slice(&0u64.to_le_bytes());
                    }
                }
            }
            bytes.push(u8::from(d.flock_mode));
            let next_hoop = d.progress.as_ref().map_or(u64::MAX, |p| p.next_hoop as u64);
            bytes.extend_from_slice(&next_hoop.to_le_bytes());
        }
        let mut h = FnvHasher::default();
        h.write(&bytes);
        h.finish()
    }
}

/// ChaCha8 seeded from `seed` on the given stream.
pub fn stream_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

#[cfg(test)]
mod tests {
    use super::*;

    fn world(config: WorldConfig) -> World {
        World::new(config, Arena::sample()).unwrap()
    }

    #[test]
    fn ids_are_one_based() {
        let w = world(WorldConfig::default());
        assert_eq!(w.drones().iter().map(|d| d.id).collect::<Vec<_>>(), vec![1, 2, 3]);
        assert!(matches!(w.drone(0), Err(WorldError::UnknownDrone(0))));
        assert!(matches!(w.drone(250), Err(WorldError::UnknownDrone(250))));
    }

    #[test]
    fn commands_arrive_after_latency() {
        let mut w = world(WorldConfig::default());
        let cmd = TimedCommand::timed(Opcode::Up, 1000, 1);
        assert_eq!(w.apply(&Input::Command { drone: 1, cmd }).unwrap(), Applied::Ticket(0));
        assert!(w.step().unwrap().iter().all(|e| !matches!(e, WorldEvent::CommandApplied { .. })));
        assert!(w.step().unwrap().iter().all(|e| !matches!(e, WorldEvent::CommandApplied { .. })));
        let events = w.step().unwrap();
        assert!(events.iter().any(|e| matches!(
            e,
            WorldEvent::CommandApplied { ticket: 0, seq: 1, result: Ok(()), .. }
        )));
    }

    #[test]
    fn telemetry_every_fifth_step() {
        let mut w = world(WorldConfig::default());
        let mut frames = 0;
        for _ in 0..100 {
            frames += w
                .step()
                .unwrap()
                .iter()
                .filter(|e| matches!(e, WorldEvent::Telemetry { .. }))
                .count();
        }
        assert_eq!(frames, 20);
    }

    #[test]
    fn broadcast_excludes_sender() {
        let mut w = world(WorldConfig { link: LinkModel { latency_ms: 0, loss_prob: 0.0 }, ..Default::default() });
        assert_eq!(w.relay_peer(1, None, b"hi").unwrap(), 2);
        let events = w.step().unwrap();
        let dsts: Vec<u8> = events
            .iter()
            .filter_map(|e| match e {
                WorldEvent::PeerDelivered { dst, .. } => Some(*dst),
                _ => None,
            })
            .collect();
        assert_eq!(dsts, vec![2, 3]);

        let mut w = world(WorldConfig { link: LinkModel { latency_ms: 0, loss_prob: 1.0 }, ..Default::default() });
        assert_eq!(w.relay_peer(1, None, b"hi").unwrap(), 0);
        assert!(matches!(w.relay_peer(1, Some(9), b"x"), Err(WorldError::UnknownDrone(9))));
        assert!(matches!(w.relay_peer(1, None, &[0; 513]), Err(WorldError::PayloadTooLong(513))));
    }

    #[test]
    fn race_arm_rules() {
        let mut w = world(WorldConfig::default());
        w.apply(&Input::RaceArm { drone: 1 }).unwrap();
        assert_eq!(w.apply(&Input::RaceArm { drone: 1 }), Err(WorldError::TrialActive(1)));
        w.apply(&Input::RaceAbort { drone: 1 }).unwrap();
        assert_eq!(w.apply(&Input::RaceAbort { drone: 1 }), Err(WorldError::NoTrial(1)));
    }

    #[test]
    fn identical_runs_hash_identically() {
        let run = || {
            let mut w = world(WorldConfig::default());
            w.apply(&Input::Command { drone: 2, cmd: TimedCommand::timed(Opcode::Forward, 1500, 1) }).unwrap();
            w.run_until(300).unwrap();
            w.state_hash()
        };
        assert_eq!(run(), run());
        let idle = {
            let mut w = world(WorldConfig::default());
            w.run_until(300).unwrap();
            w.state_hash()
        };
        assert_ne!(run(), idle);
    }
}
