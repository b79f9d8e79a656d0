//! The console port: REST under `/api` and a JSON WebSocket at `/ws`.

use axum::extract::ws::{Message, WebSocket, WebSocketUpgrade};
use axum::extract::{Path, State};
use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use blimp_core::console::{
    ClientBody, ClientMessage, CommandRequest, CreateSession, DroneRef, ErrorBody, FlockRequest, RelayRequest,
    ServerMessage, SessionInfo, StepRequest, SubscribeRequest,
};
use serde::Serialize;
use serde_json::Value;
use tokio::sync::mpsc;

use crate::error::GatewayError;
use crate::session::{Outbound, Scope, SessionId};
use crate::sim::SimHandle;

const OUTBOUND_QUEUE: usize = 256;

pub struct ApiError(pub GatewayError);

impl From<GatewayError> for ApiError {
    fn from(e: GatewayError) -> Self {
        ApiError(e)
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        let status = StatusCode::from_u16(self.0.http_status()).unwrap_or(StatusCode::INTERNAL_SERVER_ERROR);
        let body = ErrorBody { code: self.0.code().into(), message: self.0.to_string() };
        (status, Json(body)).into_response()
    }
}

type ApiResult<T> = Result<Json<T>, ApiError>;

pub fn router(sim: SimHandle) -> Router {
    Router::new()
        .route("/api/status", get(status))
        .route("/api/arena", get(arena))
        .route("/api/races", get(races))
        .route("/api/step", post(step))
        .route("/api/sessions", post(create_session))
        .route("/api/sessions/{id}", get(session).delete(close_session))
        .route("/api/sessions/{id}/attach", post(attach))
        .route("/api/sessions/{id}/detach", post(detach))
        .route("/api/sessions/{id}/subscribe", post(subscribe))
        .route("/api/sessions/{id}/command", post(command))
        .route("/api/sessions/{id}/height", post(height))
        .route("/api/sessions/{id}/relay", post(relay))
        .route("/api/sessions/{id}/flock", post(flock))
        .route("/api/sessions/{id}/races/arm", post(race_arm))
        .route("/api/sessions/{id}/races/abort", post(race_abort))
        .route("/ws", get(ws_upgrade))
        .with_state(sim)
}

async fn status(State(sim): State<SimHandle>) -> ApiResult<blimp_core::console::Status> {
    Ok(Json(sim.status().await?))
}

async fn arena(State(sim): State<SimHandle>) -> ApiResult<blimp_core::arena::ArenaDoc> {
    Ok(Json(sim.arena().await?))
}

async fn races(State(sim): State<SimHandle>) -> ApiResult<Vec<blimp_core::console::RaceRow>> {
    Ok(Json(sim.races().await?))
}

async fn step(State(sim): State<SimHandle>, Json(req): Json<StepRequest>) -> ApiResult<blimp_core::console::Status> {
    Ok(Json(sim.step(req.steps).await?))
}

/// REST sessions get no push channel; they poll `/api/status`.
async fn create_session(State(sim): State<SimHandle>, Json(req): Json<CreateSession>) -> Result<(StatusCode, Json<SessionInfo>), ApiError> {
    let info = sim.open_session(req, Scope::All, None).await?;
    Ok((StatusCode::CREATED, Json(info)))
}

async fn session(State(sim): State<SimHandle>, Path(id): Path<SessionId>) -> ApiResult<SessionInfo> {
    Ok(Json(sim.session(id).await?))
}

async fn close_session(State(sim): State<SimHandle>, Path(id): Path<SessionId>) -> Result<StatusCode, ApiError> {
    sim.close_session(id).await?;
    Ok(StatusCode::NO_CONTENT)
}

async fn attach(State(sim): State<SimHandle>, Path(id): Path<SessionId>, Json(r): Json<DroneRef>) -> ApiResult<SessionInfo> {
    Ok(Json(sim.attach(id, r.drone, None).await?))
}

async fn detach(State(sim): State<SimHandle>, Path(id): Path<SessionId>, Json(r): Json<DroneRef>) -> ApiResult<SessionInfo> {
    Ok(Json(sim.detach(id, r.drone).await?))
}

async fn subscribe(
    State(sim): State<SimHandle>,
    Path(id): Path<SessionId>,
    Json(r): Json<SubscribeRequest>,
) -> ApiResult<SessionInfo> {
    Ok(Json(sim.subscribe(id, r.on).await?))
}

async fn command(
    State(sim): State<SimHandle>,
    Path(id): Path<SessionId>,
    Json(r): Json<CommandRequest>,
) -> ApiResult<blimp_core::console::CommandReply> {
    Ok(Json(sim.command(id, r).await?))
}

async fn height(
    State(sim): State<SimHandle>,
    Path(id): Path<SessionId>,
    Json(r): Json<DroneRef>,
) -> ApiResult<blimp_core::console::HeightReply> {
    Ok(Json(sim.height(id, r.drone).await?))
}

async fn relay(
    State(sim): State<SimHandle>,
    Path(id): Path<SessionId>,
    Json(r): Json<RelayRequest>,
) -> ApiResult<blimp_core::console::RelayReply> {
    let payload = hex::decode(&r.payload).map_err(|e| GatewayError::Invalid(format!("payload: {e}")))?;
    Ok(Json(sim.relay(id, r.src, r.dst, payload, None).await?))
}

async fn flock(State(sim): State<SimHandle>, Path(id): Path<SessionId>, Json(r): Json<FlockRequest>) -> Result<StatusCode, ApiError> {
    sim.flock(id, r).await?;
    Ok(StatusCode::NO_CONTENT)
}

async fn race_arm(State(sim): State<SimHandle>, Path(id): Path<SessionId>, Json(r): Json<DroneRef>) -> Result<StatusCode, ApiError> {
    sim.race_arm(id, r.drone).await?;
    Ok(StatusCode::NO_CONTENT)
}

async fn race_abort(
    State(sim): State<SimHandle>,
    Path(id): Path<SessionId>,
    Json(r): Json<DroneRef>,
) -> ApiResult<blimp_core::console::RaceRow> {
    Ok(Json(sim.race_abort(id, r.drone).await?))
}

async fn ws_upgrade(State(sim): State<SimHandle>, ws: WebSocketUpgrade) -> Response {
    ws.on_upgrade(move |socket| ws_session(socket, sim))
}

async fn send(socket: &mut WebSocket, msg: &ServerMessage) -> bool {
    let text = serde_json::to_string(msg).expect("server messages serialize");
    socket.send(Message::Text(text.into())).await.is_ok()
}

fn error_message(id: Option<u64>, e: &GatewayError) -> ServerMessage {
    ServerMessage::Error { id, error: ErrorBody { code: e.code().into(), message: e.to_string() } }
}

fn parse(msg: Message) -> Option<Result<ClientMessage, String>> {
    match msg {
        Message::Text(text) => Some(serde_json::from_str(&text).map_err(|e| e.to_string())),
        Message::Binary(bytes) => Some(serde_json::from_slice(&bytes).map_err(|e| e.to_string())),
        _ => None,
    }
}

async fn ws_session(mut socket: WebSocket, sim: SimHandle) {
    // the first text message must be a hello
    let hello = loop {
        match socket.recv().await {
            Some(Ok(Message::Close(_))) | None | Some(Err(_)) => return,
            Some(Ok(msg)) => match parse(msg) {
                None => continue,
                Some(Ok(ClientMessage { body: ClientBody::Hello(req), .. })) => break req,
                Some(Ok(m)) => {
                    let e = GatewayError::Invalid("first message must be hello".into());
                    send(&mut socket, &error_message(m.id, &e)).await;
                }
                Some(Err(e)) => {
                    send(&mut socket, &error_message(None, &GatewayError::Invalid(e))).await;
                }
            },
        }
    };
    let (out_tx, mut out_rx) = mpsc::channel(OUTBOUND_QUEUE);
    let Ok(info) = sim.open_session(hello, Scope::All, Some(out_tx)).await else {
        return;
    };
    let id = info.session;
    let welcome = match sim.exec(|s| (s.world().config().drones, s.world().time())).await {
        Ok((drones, t)) => ServerMessage::Welcome { session: info, drones, t },
        Err(_) => return,
    };
    if send(&mut socket, &welcome).await {
        loop {
            tokio::select! {
                incoming = socket.recv() => {
                    let msg = match incoming {
                        Some(Ok(Message::Close(_))) | None | Some(Err(_)) => break,
                        Some(Ok(msg)) => msg,
                    };
                    let reply = match parse(msg) {
                        None => continue,
                        Some(Err(e)) => error_message(None, &GatewayError::Invalid(e)),
                        Some(Ok(m)) => match dispatch(&sim, id, m.body).await {
                            Ok(data) => ServerMessage::Reply { id: m.id, data },
                            Err(e) => error_message(m.id, &e),
                        },
                    };
                    if !send(&mut socket, &reply).await {
                        break;
                    }
                }
                out = out_rx.recv() => {
                    let msg = match out {
                        Some(Outbound::Telemetry { t, snapshots }) => ServerMessage::Telemetry { t, drones: snapshots.to_vec() },
                        Some(Outbound::Race(event)) => ServerMessage::Race(event),
                        Some(Outbound::Peer { .. }) => continue,
                        None => break,
                    };
                    if !send(&mut socket, &msg).await {
                        break;
                    }
                }
            }
        }
    }
    let _ = sim.close_session(id).await;
}

fn json<T: Serialize>(v: T) -> Value {
    serde_json::to_value(v).expect("replies serialize")
}

/// One WebSocket request. Mirrors the REST routes.
async fn dispatch(sim: &SimHandle, id: SessionId, body: ClientBody) -> Result<Value, GatewayError> {
    Ok(match body {
        ClientBody::Hello(_) => return Err(GatewayError::Invalid("already greeted".into())),
        ClientBody::Attach(r) => json(sim.attach(id, r.drone, None).await?),
        ClientBody::Detach(r) => json(sim.detach(id, r.drone).await?),
        ClientBody::Command(r) => json(sim.command(id, r).await?),
        ClientBody::Height(r) => json(sim.height(id, r.drone).await?),
        ClientBody::Relay(r) => {
            let payload = hex::decode(&r.payload).map_err(|e| GatewayError::Invalid(format!("payload: {e}")))?;
            json(sim.relay(id, r.src, r.dst, payload, None).await?)
        }
        ClientBody::Flock(r) => {
            sim.flock(id, r).await?;
            Value::Null
        }
        ClientBody::Subscribe(r) => json(sim.subscribe(id, r.on).await?),
        ClientBody::RaceArm(r) => {
            sim.race_arm(id, r.drone).await?;
            Value::Null
        }
        ClientBody::RaceAbort(r) => json(sim.race_abort(id, r.drone).await?),
        ClientBody::Races => json(sim.races().await?),
        ClientBody::Status => json(sim.status().await?),
        ClientBody::Arena => json(sim.arena().await?),
        ClientBody::Step(r) => json(sim.step(r.steps).await?),
    })
}
