//! Connected clients and who may fly what.

use std::collections::{BTreeMap, BTreeSet};
use std::sync::Arc;

use blimp_core::console::{RaceEvent, Role, SessionInfo};
use blimp_core::protocol::SeqTracker;
use blimp_core::world::TelemetrySnapshot;
use tokio::sync::mpsc;

use crate::error::GatewayError;

pub type SessionId = u64;

/// Which drones a session hears about.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Scope {
    /// Only drones it has attached to (drone-port connections).
    Attached,
    /// The whole fleet (console connections).
    All,
}

/// Pushed from the sim loop to a connection.
#[derive(Debug, Clone)]
pub enum Outbound {
    Telemetry { t: f64, snapshots: Arc<Vec<TelemetrySnapshot>> },
    Peer { src: u8, dst: u8, payload: Vec<u8> },
    Race(RaceEvent),
}

#[derive(Debug)]
pub struct Session {
    pub id: SessionId,
    pub role: Role,
    pub name: Option<String>,
    pub attached: BTreeSet<u8>,
    pub subscribed: bool,
    pub scope: Scope,
    pub seq: SeqTracker,
    outbound: Option<mpsc::Sender<Outbound>>,
    /// Messages dropped because the connection fell behind.
    pub dropped: u64,
}

impl Session {
    pub fn label(&self) -> String {
        self.name.clone().unwrap_or_else(|| format!("session-{}", self.id))
    }

    pub fn info(&self) -> SessionInfo {
        SessionInfo {
            session: self.id,
            role: self.role,
            name: self.name.clone(),
            attached: self.attached.iter().copied().collect(),
            subscribed: self.subscribed,
        }
    }

    /// Never blocks; a full queue drops the message.
    pub fn push(&mut self, msg: Outbound) {
        if let Some(tx) = &self.outbound {
            if tx.try_send(msg).is_err() {
                self.dropped += 1;
            }
        }
    }

    pub fn hears(&self, drone: u8) -> bool {
        self.scope == Scope::All || self.attached.contains(&drone)
    }
}

#[derive(Debug)]
pub struct Sessions {
    next_id: SessionId,
    drones: u8,
    sessions: BTreeMap<SessionId, Session>,
    pilots: BTreeMap<u8, SessionId>,
}

impl Sessions {
    pub fn new(drones: u8) -> Self {
        Sessions { next_id: 1, drones, sessions: BTreeMap::new(), pilots: BTreeMap::new() }
    }

    pub fn len(&self) -> usize {
        self.sessions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sessions.is_empty()
    }

    pub fn create(
        &mut self,
        role: Role,
        name: Option<String>,
        subscribed: bool,
        scope: Scope,
        outbound: Option<mpsc::Sender<Outbound>>,
    ) -> SessionId {
        let id = self.next_id;
        self.next_id += 1;
        let session = Session {
            id,
            role,
            name,
            attached: BTreeSet::new(),
            subscribed,
            scope,
            seq: SeqTracker::new(),
            outbound,
            dropped: 0,
        };
        self.sessions.insert(id, session);
        id
    }

    /// Remove a session and release every drone it was piloting.
    pub fn close(&mut self, id: SessionId) -> Result<Session, GatewayError> {
        let session = self.sessions.remove(&id).ok_or(GatewayError::UnknownSession(id))?;
        self.pilots.retain(|_, s| *s != id);
        Ok(session)
    }

    pub fn get(&self, id: SessionId) -> Result<&Session, GatewayError> {
        self.sessions.get(&id).ok_or(GatewayError::UnknownSession(id))
    }

    pub fn get_mut(&mut self, id: SessionId) -> Result<&mut Session, GatewayError> {
        self.sessions.get_mut(&id).ok_or(GatewayError::UnknownSession(id))
    }

    pub fn iter_mut(&mut self) -> impl Iterator<Item = &mut Session> {
        self.sessions.values_mut()
    }

    pub fn check_drone(&self, drone: u8) -> Result<(), GatewayError> {
        if drone == 0 || drone > self.drones {
            return Err(GatewayError::UnknownDrone(drone));
        }
        Ok(())
    }

    pub fn pilot_of(&self, drone: u8) -> Option<SessionId> {
        self.pilots.get(&drone).copied()
    }

    pub fn pilots(&self) -> Vec<(u8, SessionId)> {
        self.pilots.iter().map(|(d, s)| (*d, *s)).collect()
    }

    /// Attach to a drone. With `as_pilot` the claim is exclusive; a second
    /// pilot gets `Conflict`. Only pilot sessions may claim.
    pub fn attach(&mut self, id: SessionId, drone: u8, as_pilot: bool) -> Result<(), GatewayError> {
        self.check_drone(drone)?;
        let role = self.get(id)?.role;
        if as_pilot {
            if role != Role::Pilot {
                return Err(GatewayError::Forbidden(format!("{role:?} sessions cannot pilot")));
            }
            match self.pilots.get(&drone) {
                Some(&other) if other != id => return Err(GatewayError::Conflict(drone)),
                _ => {
                    self.pilots.insert(drone, id);
                }
            }
        }
        self.get_mut(id)?.attached.insert(drone);
        Ok(())
    }

    pub fn detach(&mut self, id: SessionId, drone: u8) -> Result<(), GatewayError> {
        self.check_drone(drone)?;
        let session = self.get_mut(id)?;
        if !session.attached.remove(&drone) {
            return Err(GatewayError::NotAttached(drone));
        }
        if self.pilots.get(&drone) == Some(&id) {
            self.pilots.remove(&drone);
        }
        Ok(())
    }

    pub fn require_pilot(&mut self, id: SessionId, drone: u8) -> Result<&mut Session, GatewayError> {
        self.check_drone(drone)?;
        self.get(id)?;
        if self.pilots.get(&drone) != Some(&id) {
            return Err(GatewayError::NotPilot(drone));
        }
        self.get_mut(id)
    }

    /// Race control and flock mode: any operator, or the drone's own pilot.
    pub fn require_controller(&mut self, id: SessionId, drone: u8) -> Result<&mut Session, GatewayError> {
        self.check_drone(drone)?;
        match self.get(id)?.role {
            Role::Operator => self.get_mut(id),
            Role::Pilot => self.require_pilot(id, drone),
            Role::Observer => Err(GatewayError::Forbidden("observers are read-only".into())),
        }
    }

    /// Reads that touch the sim (height queries): anyone attached, or any
    /// console session.
    pub fn require_reader(&mut self, id: SessionId, drone: u8) -> Result<&mut Session, GatewayError> {
        self.check_drone(drone)?;
        let session = self.get_mut(id)?;
        if !session.hears(drone) {
            return Err(GatewayError::NotAttached(drone));
        }
        Ok(session)
    }
}
