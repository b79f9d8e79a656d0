//! Console-port client over HTTP/JSON.

use blimp_core::arena::ArenaDoc;
use blimp_core::console::{
    CommandReply, CommandRequest, CreateSession, DroneRef, ErrorBody, FlockRequest, HeightReply, RaceRow, RelayReply,
    RelayRequest, Role, SessionInfo, Status, StepRequest,
};
use reqwest::{Method, Response};
use serde::de::DeserializeOwned;
use serde::Serialize;

use crate::ClientError;

#[derive(Debug, Clone)]
pub struct ConsoleClient {
    http: reqwest::Client,
    base: String,
}

async fn check(resp: Response) -> Result<Response, ClientError> {
    let status = resp.status();
    if status.is_success() {
        return Ok(resp);
    }
    let text = resp.text().await?;
    let body = serde_json::from_str::<ErrorBody>(&text)
        .unwrap_or_else(|_| ErrorBody { code: "http".into(), message: text });
    Err(ClientError::Api { status: status.as_u16(), code: body.code, message: body.message })
}

impl ConsoleClient {
    /// `base` is e.g. `http://127.0.0.1:7788`.
    pub fn new(base: impl Into<String>) -> Self {
        let base = base.into().trim_end_matches('/').to_string();
        ConsoleClient { http: reqwest::Client::new(), base }
    }

    async fn send<B: Serialize>(&self, method: Method, path: &str, body: Option<&B>) -> Result<Response, ClientError> {
        let mut req = self.http.request(method, format!("{}{path}", self.base));
        if let Some(body) = body {
            req = req.json(body);
        }
        check(req.send().await?).await
    }

    async fn get<T: DeserializeOwned>(&self, path: &str) -> Result<T, ClientError> {
        Ok(self.send::<()>(Method::GET, path, None).await?.json().await?)
    }

    async fn post<B: Serialize, T: DeserializeOwned>(&self, path: &str, body: &B) -> Result<T, ClientError> {
        Ok(self.send(Method::POST, path, Some(body)).await?.json().await?)
    }

    async fn post_empty<B: Serialize>(&self, path: &str, body: &B) -> Result<(), ClientError> {
        self.send(Method::POST, path, Some(body)).await?;
        Ok(())
    }

    pub async fn status(&self) -> Result<Status, ClientError> {
        self.get("/api/status").await
    }

    pub async fn arena(&self) -> Result<ArenaDoc, ClientError> {
        self.get("/api/arena").await
    }

    pub async fn races(&self) -> Result<Vec<RaceRow>, ClientError> {
        self.get("/api/races").await
    }

    /// Advance a manually paced sim.
    pub async fn step(&self, steps: u64) -> Result<Status, ClientError> {
        self.post("/api/step", &StepRequest { steps }).await
    }

    pub async fn open(&self, role: Role, name: Option<&str>) -> Result<SessionInfo, ClientError> {
        let req = CreateSession { role, name: name.map(str::to_string), subscribe: false };
        self.post("/api/sessions", &req).await
    }

    pub async fn session(&self, session: u64) -> Result<SessionInfo, ClientError> {
        self.get(&format!("/api/sessions/{session}")).await
    }

    pub async fn close(&self, session: u64) -> Result<(), ClientError> {
        self.send::<()>(Method::DELETE, &format!("/api/sessions/{session}"), None).await?;
        Ok(())
    }

    pub async fn attach(&self, session: u64, drone: u8) -> Result<SessionInfo, ClientError> {
        self.post(&format!("/api/sessions/{session}/attach"), &DroneRef { drone }).await
    }

    pub async fn detach(&self, session: u64, drone: u8) -> Result<SessionInfo, ClientError> {
        self.post(&format!("/api/sessions/{session}/detach"), &DroneRef { drone }).await
    }

    /// Resolves once the drone has applied (or refused) the command.
    pub async fn command(&self, session: u64, req: &CommandRequest) -> Result<CommandReply, ClientError> {
        self.post(&format!("/api/sessions/{session}/command"), req).await
    }

    pub async fn height(&self, session: u64, drone: u8) -> Result<HeightReply, ClientError> {
        self.post(&format!("/api/sessions/{session}/height"), &DroneRef { drone }).await
    }

    pub async fn relay(&self, session: u64, src: u8, dst: Option<u8>, payload: &[u8]) -> Result<RelayReply, ClientError> {
        let req = RelayRequest { src, dst, payload: payload.iter().map(|b| format!("{b:02x}")).collect() };
        self.post(&format!("/api/sessions/{session}/relay"), &req).await
    }

    pub async fn flock(&self, session: u64, drone: u8, enabled: bool) -> Result<(), ClientError> {
        self.post_empty(&format!("/api/sessions/{session}/flock"), &FlockRequest { drone, enabled }).await
    }

    pub async fn race_arm(&self, session: u64, drone: u8) -> Result<(), ClientError> {
        self.post_empty(&format!("/api/sessions/{session}/races/arm"), &DroneRef { drone }).await
    }

    pub async fn race_abort(&self, session: u64, drone: u8) -> Result<RaceRow, ClientError> {
        self.post(&format!("/api/sessions/{session}/races/abort"), &DroneRef { drone }).await
    }
}
