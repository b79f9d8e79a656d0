//! Clients for the blimp gateway.
//!
//! [`DroneClient`] speaks the binary frame protocol on the drone port.
//! [`ConsoleClient`] wraps the JSON API on the console port.

mod console;
mod drone;

pub use console::ConsoleClient;
pub use drone::{duration_ms, AttachMode, CommandOutcome, Drone, DroneClient, REPLY_TIMEOUT};

use blimp_core::protocol::payload::{AckStatus, PayloadError};

#[derive(Debug, thiserror::Error)]
pub enum ClientError {
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error("no reply within the timeout")]
    Timeout,
    #[error("drone refused the request: {0:?}")]
    Refused(AckStatus),
    #[error("duration {0} s is outside 0.001..=60 s")]
    InvalidDuration(f64),
    #[error("connection closed")]
    Closed,
    #[error("bad reply: {0}")]
    Protocol(#[from] PayloadError),
    #[error(transparent)]
    Http(#[from] reqwest::Error),
    #[error("{status} {code}: {message}")]
    Api { status: u16, code: String, message: String },
}
