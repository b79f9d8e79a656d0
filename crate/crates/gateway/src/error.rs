use blimp_core::protocol::payload::AckStatus;
use blimp_core::world::WorldError;
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum GatewayError {
    #[error("unknown session {0}")]
    UnknownSession(u64),
    #[error("unknown drone {0}")]
    UnknownDrone(u8),
    #[error("drone {0} already has a pilot")]
    Conflict(u8),
    #[error("session is not the pilot of drone {0}")]
    NotPilot(u8),
    #[error("drone {0} is not attached to this session")]
    NotAttached(u8),
    #[error("{0}")]
    Forbidden(String),
    #[error("sequence number {seq} for drone {drone} was already seen")]
    Duplicate { drone: u8, seq: u16 },
    #[error("stale sequence number {seq} for drone {drone}")]
    Stale { drone: u8, seq: u16 },
    #[error("drone {0} already has a trial in progress")]
    TrialActive(u8),
    #[error("drone {0} has no trial in progress")]
    NoTrial(u8),
    #[error("invalid request: {0}")]
    Invalid(String),
    #[error("stepping is only available with manual pacing")]
    NotManual,
    #[error("simulation is shutting down")]
    ShuttingDown,
}

impl GatewayError {
    /// Stable machine-readable code for JSON error bodies.
    pub fn code(&self) -> &'static str {
        match self {
            GatewayError::UnknownSession(_) => "unknown_session",
            GatewayError::UnknownDrone(_) => "unknown_drone",
            GatewayError::Conflict(_) => "conflict",
            GatewayError::NotPilot(_) => "not_pilot",
            GatewayError::NotAttached(_) => "not_attached",
            GatewayError::Forbidden(_) => "forbidden",
            GatewayError::Duplicate { .. } => "duplicate",
            GatewayError::Stale { .. } => "stale",
            GatewayError::TrialActive(_) => "trial_active",
            GatewayError::NoTrial(_) => "no_trial",
            GatewayError::Invalid(_) => "invalid",
            GatewayError::NotManual => "not_manual",
            GatewayError::ShuttingDown => "shutting_down",
        }
    }

    /// Status byte used when the error has to travel back as an ACK frame.
    pub fn ack_status(&self) -> AckStatus {
        match self {
            GatewayError::UnknownDrone(_) => AckStatus::UnknownDrone,
            GatewayError::Conflict(_) => AckStatus::Conflict,
            GatewayError::NotPilot(_)
            | GatewayError::NotAttached(_)
            | GatewayError::Forbidden(_)
            | GatewayError::UnknownSession(_) => AckStatus::NotPilot,
            GatewayError::Duplicate { .. } => AckStatus::Duplicate,
            GatewayError::Stale { .. } => AckStatus::NackStale,
            _ => AckStatus::Malformed,
        }
    }

    pub fn http_status(&self) -> u16 {
        match self {
            GatewayError::UnknownSession(_) | GatewayError::UnknownDrone(_) => 404,
            GatewayError::NotPilot(_) | GatewayError::Forbidden(_) => 403,
            GatewayError::Invalid(_) => 400,
            GatewayError::ShuttingDown => 503,
            _ => 409,
        }
    }
}

impl From<WorldError> for GatewayError {
    fn from(e: WorldError) -> Self {
        match e {
            WorldError::UnknownDrone(d) => GatewayError::UnknownDrone(d),
            WorldError::TrialActive(d) => GatewayError::TrialActive(d),
            WorldError::NoTrial(d) => GatewayError::NoTrial(d),
            other => GatewayError::Invalid(other.to_string()),
        }
    }
}
