//! The single task that owns the world. Everything else talks to it by
//! sending closures over a channel, so world access is never shared.

use std::collections::{BTreeMap, HashMap};
use std::path::PathBuf;
use std::sync::Arc;
use std::time::Duration;

use blimp_core::arena::ArenaDoc;
use blimp_core::console::{
    CommandReply, CommandRequest, CreateSession, FlockRequest, HeightReply, Pacing, RaceEvent, RaceRow, RelayReply,
    SessionInfo, Status,
};
use blimp_core::protocol::payload::AckStatus;
use blimp_core::protocol::{SeqClass, SeqVerdict};
use blimp_core::replay::{EndRecord, InputRecord, LogLine, ReplayHeader, StateHash};
use blimp_core::runtime::{Nack, Opcode, TimedCommand};
use blimp_core::world::{Applied, Input, TelemetrySnapshot, World, WorldEvent};
use tokio::sync::{mpsc, oneshot};
use tokio::time::MissedTickBehavior;
use tokio_util::sync::CancellationToken;

use crate::error::GatewayError;
use crate::runs::RunWriter;
use crate::session::{Outbound, Scope, SessionId, Sessions};

/// Steps taken between request drains when running flat out.
const FAST_BATCH: u64 = 100;
const REQUEST_QUEUE: usize = 256;

/// A reply that is either known now or arrives once the drone acts.
pub enum Deferred<T> {
    Ready(T),
    Later(oneshot::Receiver<T>),
}

impl<T> Deferred<T> {
    pub async fn resolve(self) -> Result<T, GatewayError> {
        match self {
            Deferred::Ready(v) => Ok(v),
            Deferred::Later(rx) => rx.await.map_err(|_| GatewayError::ShuttingDown),
        }
    }
}

/// How a run ended.
#[derive(Debug, Clone, PartialEq)]
pub struct RunSummary {
    pub step: u64,
    pub t: f64,
    pub hash: StateHash,
    pub log_path: Option<PathBuf>,
    pub error: Option<String>,
}

struct CommandWaiter {
    drone: u8,
    seq: Option<u16>,
    reply: oneshot::Sender<CommandReply>,
}

pub struct Station {
    world: World,
    sessions: Sessions,
    pacing: Pacing,
    stop_at: Option<u64>,
    writer: Option<RunWriter>,
    commands: HashMap<u64, CommandWaiter>,
    heights: HashMap<u64, oneshot::Sender<HeightReply>>,
    /// Pilot label captured when each trial was armed.
    trials: BTreeMap<u8, Option<String>>,
    races: Vec<RaceRow>,
    /// Most recent telemetry round; taking a fresh one would draw sensor noise.
    last_telemetry: Arc<Vec<TelemetrySnapshot>>,
    finished: bool,
    error: Option<String>,
}

impl Station {
    /// `history` seeds the leaderboard; `duration` is in sim-seconds.
    pub fn new(
        world: World,
        pacing: Pacing,
        duration: Option<f64>,
        writer: Option<RunWriter>,
        history: Vec<RaceRow>,
    ) -> Station {
        let dt = world.config().physics.dt;
        let stop_at = duration.map(|d| (d / dt).round() as u64);
        if let Some(w) = &writer {
            w.log(&LogLine::Header(ReplayHeader::new(world.config(), world.arena())));
        }
        Station {
            sessions: Sessions::new(world.config().drones),
            world,
            pacing,
            stop_at,
            writer,
            commands: HashMap::new(),
            heights: HashMap::new(),
            trials: BTreeMap::new(),
            races: history,
            last_telemetry: Arc::default(),
            finished: false,
            error: None,
        }
    }

    pub fn world(&self) -> &World {
        &self.world
    }

    pub fn is_finished(&self) -> bool {
        self.finished
    }

    /// Apply an input and log it if the world accepted it.
    fn apply(&mut self, input: Input) -> Result<Applied, GatewayError> {
        let step = self.world.step_index();
        let t = self.world.time();
        let applied = self.world.apply(&input)?;
        if let Some(w) = &self.writer {
            w.log(&LogLine::Input(InputRecord { step, t, input }));
        }
        Ok(applied)
    }

    fn check_seq(&mut self, id: SessionId, drone: u8, class: SeqClass, seq: u16) -> Result<(), GatewayError> {
        let session = self.sessions.get_mut(id)?;
        match session.seq.accept_seq(drone, class, seq) {
            SeqVerdict::Accept => Ok(()),
            SeqVerdict::Duplicate => Err(GatewayError::Duplicate { drone, seq }),
            SeqVerdict::Stale => Err(GatewayError::Stale { drone, seq }),
        }
    }

    pub fn open_session(
        &mut self,
        req: CreateSession,
        scope: Scope,
        outbound: Option<mpsc::Sender<Outbound>>,
    ) -> SessionInfo {
        let id = self.sessions.create(req.role, req.name, req.subscribe, scope, outbound);
        self.sessions.get(id).expect("just created").info()
    }

    pub fn close_session(&mut self, id: SessionId) -> Result<(), GatewayError> {
        self.sessions.close(id).map(|_| ())
    }

    pub fn session(&self, id: SessionId) -> Result<SessionInfo, GatewayError> {
        Ok(self.sessions.get(id)?.info())
    }

    /// `as_pilot: None` claims exactly when the session is a pilot.
    pub fn attach(&mut self, id: SessionId, drone: u8, as_pilot: Option<bool>) -> Result<SessionInfo, GatewayError> {
        let role = self.sessions.get(id)?.role;
        let claim = as_pilot.unwrap_or(role == blimp_core::console::Role::Pilot);
        self.sessions.attach(id, drone, claim)?;
        self.session(id)
    }

    pub fn detach(&mut self, id: SessionId, drone: u8) -> Result<SessionInfo, GatewayError> {
        self.sessions.detach(id, drone)?;
        self.session(id)
    }

    pub fn subscribe(&mut self, id: SessionId, on: bool) -> Result<SessionInfo, GatewayError> {
        self.sessions.get_mut(id)?.subscribed = on;
        self.session(id)
    }

    /// Route a command. With `sequenced`, `cmd.seq` goes through the
    /// session's replay guard first; a repeat is acknowledged as a duplicate
    /// and not executed again.
    pub fn command(
        &mut self,
        id: SessionId,
        drone: u8,
        cmd: TimedCommand,
        sequenced: bool,
    ) -> Result<Deferred<CommandReply>, GatewayError> {
        self.sessions.require_pilot(id, drone)?;
        let seq = sequenced.then_some(cmd.seq);
        if sequenced {
            match self.check_seq(id, drone, SeqClass::Command, cmd.seq) {
                Err(GatewayError::Duplicate { .. }) => {
                    let t = self.world.time();
                    return Ok(Deferred::Ready(CommandReply { drone, status: AckStatus::Duplicate, t, seq }));
                }
                other => other?,
            }
        }
        let Applied::Ticket(ticket) = self.apply(Input::Command { drone, cmd })? else {
            unreachable!("commands are always scheduled")
        };
        let (tx, rx) = oneshot::channel();
        self.commands.insert(ticket, CommandWaiter { drone, seq, reply: tx });
        Ok(Deferred::Later(rx))
    }

    /// A drone-port CMD whose opcode byte was not recognised. The pilot
    /// check still applies; the drone then nacks.
    pub fn unknown_opcode(&mut self, id: SessionId, drone: u8, seq: u16) -> Result<CommandReply, GatewayError> {
        self.sessions.require_pilot(id, drone)?;
        self.check_seq(id, drone, SeqClass::Command, seq)?;
        Ok(CommandReply { drone, status: AckStatus::NackOpcode, t: self.world.time(), seq: Some(seq) })
    }

    pub fn console_command(&mut self, id: SessionId, req: &CommandRequest) -> Result<Deferred<CommandReply>, GatewayError> {
        let (opcode, duration_ms) = req.resolve().map_err(|e| GatewayError::Invalid(e.to_string()))?;
        let seq = req.seq.unwrap_or(0);
        let cmd = match (opcode, duration_ms) {
            (Opcode::Off, _) | (_, None) => TimedCommand::off(seq),
            (op, Some(ms)) => TimedCommand::timed(op, ms, seq),
        };
        self.command(id, req.drone, cmd, req.seq.is_some())
    }

    pub fn height(&mut self, id: SessionId, drone: u8, seq: Option<u16>) -> Result<Deferred<HeightReply>, GatewayError> {
        self.sessions.require_reader(id, drone)?;
        if let Some(seq) = seq {
            self.check_seq(id, drone, SeqClass::Query, seq)?;
        }
        let Applied::Ticket(ticket) = self.apply(Input::HeightQuery { drone })? else {
            unreachable!("height queries are always scheduled")
        };
        let (tx, rx) = oneshot::channel();
        self.heights.insert(ticket, tx);
        Ok(Deferred::Later(rx))
    }

    pub fn relay(
        &mut self,
        id: SessionId,
        src: u8,
        dst: Option<u8>,
        payload: Vec<u8>,
        seq: Option<u16>,
    ) -> Result<RelayReply, GatewayError> {
        self.sessions.require_pilot(id, src)?;
        if let Some(d) = dst {
            self.sessions.check_drone(d)?;
        }
        if let Some(seq) = seq {
            self.check_seq(id, src, SeqClass::Peer, seq)?;
        }
        match self.apply(Input::Peer { src, dst, payload })? {
            Applied::Relayed(delivered) => Ok(RelayReply { delivered }),
            _ => unreachable!("relays report copies"),
        }
    }

    pub fn flock(&mut self, id: SessionId, req: FlockRequest) -> Result<(), GatewayError> {
        self.sessions.require_controller(id, req.drone)?;
        self.apply(Input::FlockMode { drone: req.drone, enabled: req.enabled })?;
        Ok(())
    }

    pub fn race_arm(&mut self, id: SessionId, drone: u8) -> Result<(), GatewayError> {
        self.sessions.require_controller(id, drone)?;
        self.apply(Input::RaceArm { drone })?;
        let pilot = self
            .sessions
            .pilot_of(drone)
            .and_then(|s| self.sessions.get(s).ok())
            .map(|s| s.label());
        self.trials.insert(drone, pilot.clone());
        let t = self.world.time();
        self.broadcast(RaceEvent::Armed { drone, pilot, t });
        Ok(())
    }

    pub fn race_abort(&mut self, id: SessionId, drone: u8) -> Result<RaceRow, GatewayError> {
        self.sessions.require_controller(id, drone)?;
        let start_t = self.world.drone(drone)?.progress.as_ref().and_then(|p| p.start_t);
        self.apply(Input::RaceAbort { drone })?;
        let row = self.dnf_row(drone, start_t);
        self.broadcast(RaceEvent::Aborted { row: row.clone() });
        Ok(row)
    }

    fn dnf_row(&mut self, drone: u8, start_t: Option<f64>) -> RaceRow {
        let row = RaceRow {
            drone_id: drone,
            pilot: self.trials.remove(&drone).flatten(),
            start_t,
            finish_t: None,
            dnf: true,
        };
        self.record_race(row.clone());
        row
    }

    fn record_race(&mut self, row: RaceRow) {
        if let Some(w) = &self.writer {
            w.race(&row);
        }
        self.races.push(row);
    }

    pub fn races(&self) -> Vec<RaceRow> {
        self.races.clone()
    }

    pub fn arena(&self) -> ArenaDoc {
        self.world.arena().doc().clone()
    }

    pub fn status(&self) -> Status {
        Status {
            t: self.world.time(),
            step: self.world.step_index(),
            drones: self.world.config().drones,
            pacing: self.pacing,
            hash: StateHash(self.world.state_hash()),
            sessions: self.sessions.len(),
            pilots: self.sessions.pilots(),
            pending: self.commands.len() + self.heights.len(),
            log_path: self.writer.as_ref().map(|w| w.log_path().display().to_string()),
            telemetry: self.last_telemetry.to_vec(),
        }
    }

    /// Manual pacing only.
    pub fn step_n(&mut self, n: u64) -> Result<Status, GatewayError> {
        if self.pacing != Pacing::Manual {
            return Err(GatewayError::NotManual);
        }
        for _ in 0..n {
            if self.finished {
                break;
            }
            self.step_once();
        }
        Ok(self.status())
    }

    fn broadcast(&mut self, event: RaceEvent) {
        for s in self.sessions.iter_mut().filter(|s| s.subscribed && s.scope == Scope::All) {
            s.push(Outbound::Race(event.clone()));
        }
    }

    pub fn step_once(&mut self) {
        if self.finished {
            return;
        }
        match self.world.step() {
            Ok(events) => {
                for e in events {
                    self.dispatch(e);
                }
            }
            Err(e) => {
                tracing::error!("simulation stopped: {e}");
                self.error = Some(e.to_string());
                self.finished = true;
                return;
            }
        }
        if self.stop_at.is_some_and(|s| self.world.step_index() >= s) {
            self.finished = true;
        }
    }

    fn dispatch(&mut self, event: WorldEvent) {
        match event {
            WorldEvent::CommandApplied { ticket, result, t, .. } => {
                if let Some(w) = self.commands.remove(&ticket) {
                    let status = match result {
                        Ok(()) => AckStatus::Ok,
                        Err(Nack::Bounds) => AckStatus::NackBounds,
                        Err(Nack::UnknownOpcode) => AckStatus::NackOpcode,
                    };
                    let _ = w.reply.send(CommandReply { drone: w.drone, status, t, seq: w.seq });
                }
            }
            WorldEvent::HeightRead { ticket, drone, height, t } => {
                if let Some(tx) = self.heights.remove(&ticket) {
                    let _ = tx.send(HeightReply { drone, height, t });
                }
            }
            WorldEvent::PeerDelivered { src, dst, payload, .. } => {
                for s in self.sessions.iter_mut().filter(|s| s.scope == Scope::Attached && s.attached.contains(&dst)) {
                    s.push(Outbound::Peer { src, dst, payload: payload.clone() });
                }
            }
            WorldEvent::Telemetry { t, snapshots } => {
                let all = Arc::new(snapshots);
                self.last_telemetry = all.clone();
                for s in self.sessions.iter_mut().filter(|s| s.subscribed) {
                    let snapshots = match s.scope {
                        Scope::All => all.clone(),
                        Scope::Attached if s.attached.is_empty() => continue,
                        Scope::Attached => {
                            Arc::new(all.iter().filter(|x| s.attached.contains(&x.drone_id)).copied().collect())
                        }
                    };
                    s.push(Outbound::Telemetry { t, snapshots });
                }
            }
            WorldEvent::HoopCrossed { drone, hoop, t } => self.broadcast(RaceEvent::Split { drone, hoop, t }),
            WorldEvent::TrialFinished { drone, start_t, finish_t } => {
                let row = RaceRow {
                    drone_id: drone,
                    pilot: self.trials.remove(&drone).flatten(),
                    start_t: Some(start_t),
                    finish_t: Some(finish_t),
                    dnf: false,
                };
                self.record_race(row.clone());
                self.broadcast(RaceEvent::Finished { row });
            }
            WorldEvent::Contact { .. } | WorldEvent::RaceArmed { .. } | WorldEvent::TrialAborted { .. } => {}
        }
    }

    /// Close out the run: unfinished trials become DNF rows and the log gets
    /// its end record. Blocks until the files are flushed.
    pub fn finish(mut self) -> RunSummary {
        let racing: Vec<(u8, Option<f64>)> = self
            .world
            .drones()
            .iter()
            .filter(|d| d.is_racing())
            .map(|d| (d.id, d.progress.as_ref().and_then(|p| p.start_t)))
            .collect();
        for (drone, start_t) in racing {
            let row = self.dnf_row(drone, start_t);
            self.broadcast(RaceEvent::Aborted { row });
        }
        let end = EndRecord {
            step: self.world.step_index(),
            t: self.world.time(),
            hash: StateHash(self.world.state_hash()),
        };
        let mut summary = RunSummary { step: end.step, t: end.t, hash: end.hash, log_path: None, error: self.error.take() };
        if let Some(w) = self.writer.take() {
            w.log(&LogLine::End(end));
            summary.log_path = Some(w.log_path().to_path_buf());
            if let Err(e) = w.finish() {
                summary.error.get_or_insert(format!("writing run files: {e}"));
            }
        }
        summary
    }
}

type Job = Box<dyn FnOnce(&mut Station) + Send>;

/// Cheap to clone; every method is one round trip to the sim task.
#[derive(Clone)]
pub struct SimHandle {
    tx: mpsc::Sender<Job>,
}

impl SimHandle {
    pub async fn exec<T, F>(&self, f: F) -> Result<T, GatewayError>
    where
        T: Send + 'static,
        F: FnOnce(&mut Station) -> T + Send + 'static,
    {
        let (tx, rx) = oneshot::channel();
        let job: Job = Box::new(move |station| {
            let _ = tx.send(f(station));
        });
        self.tx.send(job).await.map_err(|_| GatewayError::ShuttingDown)?;
        rx.await.map_err(|_| GatewayError::ShuttingDown)
    }

    /// Like [`exec`](Self::exec) for operations that already return a result.
    pub async fn call<T, F>(&self, f: F) -> Result<T, GatewayError>
    where
        T: Send + 'static,
        F: FnOnce(&mut Station) -> Result<T, GatewayError> + Send + 'static,
    {
        self.exec(f).await?
    }

    pub async fn open_session(
        &self,
        req: CreateSession,
        scope: Scope,
        outbound: Option<mpsc::Sender<Outbound>>,
    ) -> Result<SessionInfo, GatewayError> {
        self.exec(move |s| s.open_session(req, scope, outbound)).await
    }

    pub async fn close_session(&self, id: SessionId) -> Result<(), GatewayError> {
        self.call(move |s| s.close_session(id)).await
    }

    pub async fn session(&self, id: SessionId) -> Result<SessionInfo, GatewayError> {
        self.call(move |s| s.session(id)).await
    }

    pub async fn attach(&self, id: SessionId, drone: u8, as_pilot: Option<bool>) -> Result<SessionInfo, GatewayError> {
        self.call(move |s| s.attach(id, drone, as_pilot)).await
    }

    pub async fn detach(&self, id: SessionId, drone: u8) -> Result<SessionInfo, GatewayError> {
        self.call(move |s| s.detach(id, drone)).await
    }

    pub async fn subscribe(&self, id: SessionId, on: bool) -> Result<SessionInfo, GatewayError> {
        self.call(move |s| s.subscribe(id, on)).await
    }

    /// Submit a sequenced drone-port command. Returns once the sim has
    /// accepted or refused it; the ACK itself may still be pending.
    pub async fn submit_command(
        &self,
        id: SessionId,
        drone: u8,
        cmd: TimedCommand,
    ) -> Result<Deferred<CommandReply>, GatewayError> {
        self.call(move |s| s.command(id, drone, cmd, true)).await
    }

    pub async fn command(&self, id: SessionId, req: CommandRequest) -> Result<CommandReply, GatewayError> {
        self.call(move |s| s.console_command(id, &req)).await?.resolve().await
    }

    pub async fn submit_height(
        &self,
        id: SessionId,
        drone: u8,
        seq: Option<u16>,
    ) -> Result<Deferred<HeightReply>, GatewayError> {
        self.call(move |s| s.height(id, drone, seq)).await
    }

    pub async fn height(&self, id: SessionId, drone: u8) -> Result<HeightReply, GatewayError> {
        self.submit_height(id, drone, None).await?.resolve().await
    }

    pub async fn relay(
        &self,
        id: SessionId,
        src: u8,
        dst: Option<u8>,
        payload: Vec<u8>,
        seq: Option<u16>,
    ) -> Result<RelayReply, GatewayError> {
        self.call(move |s| s.relay(id, src, dst, payload, seq)).await
    }

    pub async fn flock(&self, id: SessionId, req: FlockRequest) -> Result<(), GatewayError> {
        self.call(move |s| s.flock(id, req)).await
    }

    pub async fn race_arm(&self, id: SessionId, drone: u8) -> Result<(), GatewayError> {
        self.call(move |s| s.race_arm(id, drone)).await
    }

    pub async fn race_abort(&self, id: SessionId, drone: u8) -> Result<RaceRow, GatewayError> {
        self.call(move |s| s.race_abort(id, drone)).await
    }

    pub async fn races(&self) -> Result<Vec<RaceRow>, GatewayError> {
        self.exec(|s| s.races()).await
    }

    pub async fn status(&self) -> Result<Status, GatewayError> {
        self.exec(|s| s.status()).await
    }

    pub async fn arena(&self) -> Result<ArenaDoc, GatewayError> {
        self.exec(|s| s.arena()).await
    }

    pub async fn step(&self, steps: u64) -> Result<Status, GatewayError> {
        self.call(move |s| s.step_n(steps)).await
    }
}

/// Spawnable loop body. Returns when the duration elapses, the world
/// fails, or `shutdown` fires.
pub async fn run(mut station: Station, mut rx: mpsc::Receiver<Job>, shutdown: CancellationToken) -> RunSummary {
    match station.pacing {
        Pacing::RealTime => {
            let dt = Duration::from_secs_f64(station.world.config().physics.dt);
            let mut tick = tokio::time::interval(dt);
            tick.set_missed_tick_behavior(MissedTickBehavior::Burst);
            while !station.finished {
                tokio::select! {
                    biased;
                    _ = shutdown.cancelled() => break,
                    job = rx.recv() => match job {
                        Some(job) => job(&mut station),
                        None => break,
                    },
                    _ = tick.tick() => station.step_once(),
                }
            }
        }
        Pacing::Fast => {
            while !station.finished && !shutdown.is_cancelled() {
                loop {
                    match rx.try_recv() {
                        Ok(job) => job(&mut station),
                        Err(mpsc::error::TryRecvError::Empty) => break,
                        Err(mpsc::error::TryRecvError::Disconnected) => return finish(station).await,
                    }
                }
                for _ in 0..FAST_BATCH {
                    station.step_once();
                }
                tokio::task::yield_now().await;
            }
        }
        Pacing::Manual => {
            while !station.finished {
                tokio::select! {
                    biased;
                    _ = shutdown.cancelled() => break,
                    job = rx.recv() => match job {
                        Some(job) => job(&mut station),
                        None => break,
                    },
                }
            }
        }
    }
    finish(station).await
}

async fn finish(station: Station) -> RunSummary {
    tokio::task::spawn_blocking(move || station.finish()).await.expect("finishing the run panicked")
}

pub fn channel() -> (SimHandle, mpsc::Receiver<Job>) {
    let (tx, rx) = mpsc::channel(REQUEST_QUEUE);
    (SimHandle { tx }, rx)
}
