//! Simulation and protocol core for a classroom blimp ground station.
//!
//! - [`dynamics`]: three-channel buoyant craft physics at a fixed step.
//! - [`runtime`]: timed commands, altitude hold, and the height ranger.
//! - [`protocol`]: the binary frame format, payloads, and sequence guard.
//! - [`arena`]: hoops, obstacles, contacts, and time-trial progress.
//! - [`flock`]: boids and closest-approach avoidance on relayed snapshots.
//! - [`world`]: the deterministic fleet, relay, and telemetry cadence.
//! - [`replay`]: line-delimited logs that reproduce a run bit for bit.
//! - [`console`]: JSON documents for the console port.

pub mod arena;
pub mod config;
pub mod console;
pub mod dynamics;
pub mod flock;
pub mod protocol;
pub mod replay;
pub mod runtime;
pub mod world;

pub use dynamics::{DroneState, PhysicsParams, Vec3};
pub use runtime::{Opcode, TimedCommand};
pub use world::{Input, World, WorldConfig, WorldEvent};
