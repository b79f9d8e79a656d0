//! Drone-port client: the binary protocol over TCP.

use std::collections::HashMap;
use std::sync::{Arc, Mutex};
use std::time::Duration;

use blimp_core::console::seconds_to_ms;
use blimp_core::protocol::payload::{command_frame, Ack, AckStatus, Announce, HeightResp, TelemetryPayload};
use blimp_core::protocol::{Frame, FrameCodec, FrameType, SeqClass};
use blimp_core::runtime::{Opcode, TimedCommand, MAX_DURATION_MS};
use futures::stream::SplitSink;
use futures::{SinkExt, StreamExt};
use tokio::net::{TcpStream, ToSocketAddrs};
use tokio::sync::{mpsc, oneshot, watch};
use tokio_util::codec::Framed;

use crate::ClientError;

/// How long to wait for an ACK, ANNOUNCE, or HEIGHT_RESP.
pub const REPLY_TIMEOUT: Duration = Duration::from_secs(2);

type Key = (FrameType, u8, u16);
type Sink = SplitSink<Framed<TcpStream, FrameCodec>, Frame>;

#[derive(Default)]
struct Shared {
    waiting: HashMap<Key, oneshot::Sender<Frame>>,
    telemetry: HashMap<u8, watch::Sender<Option<TelemetryPayload>>>,
    peers: HashMap<u8, mpsc::UnboundedSender<(u8, Vec<u8>)>>,
    seq: HashMap<(u8, SeqClass), u16>,
}

/// One TCP connection to the gateway.
#[derive(Clone)]
pub struct DroneClient {
    sink: Arc<tokio::sync::Mutex<Sink>>,
    shared: Arc<Mutex<Shared>>,
    timeout: Duration,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AttachMode {
    Pilot,
    Observer,
}

/// Which kind of reply a request expects.
fn reply_type(sent: FrameType) -> FrameType {
    match sent {
        FrameType::Discover => FrameType::Announce,
        FrameType::HeightReq => FrameType::HeightResp,
        _ => FrameType::Ack,
    }
}

impl DroneClient {
    pub async fn connect(addr: impl ToSocketAddrs) -> Result<DroneClient, ClientError> {
        let stream = TcpStream::connect(addr).await?;
        stream.set_nodelay(true)?;
        let (sink, mut frames) = Framed::new(stream, FrameCodec).split();
        let shared = Arc::new(Mutex::new(Shared::default()));
        let reader = shared.clone();
        tokio::spawn(async move {
            while let Some(Ok(item)) = frames.next().await {
                let Ok(frame) = item else { continue };
                route(&reader, frame);
            }
            // dropping the waiters wakes everyone with `Closed`
            let mut s = reader.lock().unwrap();
            s.waiting.clear();
            s.peers.clear();
        });
        Ok(DroneClient { sink: Arc::new(tokio::sync::Mutex::new(sink)), shared, timeout: REPLY_TIMEOUT })
    }

    pub fn with_timeout(mut self, timeout: Duration) -> Self {
        self.timeout = timeout;
        self
    }

    fn next_seq(&self, drone: u8, class: SeqClass) -> u16 {
        let mut s = self.shared.lock().unwrap();
        let seq = s.seq.entry((drone, class)).or_insert(0);
        *seq = seq.wrapping_add(1);
        *seq
    }

    pub async fn send(&self, frame: Frame) -> Result<(), ClientError> {
        self.sink.lock().await.send(frame).await?;
        Ok(())
    }

    /// Send and wait for the matching reply. Errors carried in an ACK come
    /// back as [`ClientError::Refused`].
    pub async fn request(&self, frame: Frame) -> Result<Frame, ClientError> {
        let key = (reply_type(frame.ftype), frame.drone_id, frame.seq);
        let (tx, rx) = oneshot::channel();
        // an error ACK can answer any request
        let ack_key = (FrameType::Ack, frame.drone_id, frame.seq);
        let (ack_tx, ack_rx) = oneshot::channel();
        {
            let mut s = self.shared.lock().unwrap();
            s.waiting.insert(key, tx);
            if key != ack_key {
                s.waiting.insert(ack_key, ack_tx);
            }
        }
        self.send(frame).await?;
        let reply = tokio::time::timeout(self.timeout, async {
            if key == ack_key {
                return rx.await;
            }
            tokio::select! {
                r = rx => r,
                r = ack_rx => r,
            }
        })
        .await;
        let mut s = self.shared.lock().unwrap();
        s.waiting.remove(&key);
        s.waiting.remove(&ack_key);
        drop(s);
        let frame = reply.map_err(|_| ClientError::Timeout)?.map_err(|_| ClientError::Closed)?;
        if frame.ftype == FrameType::Ack && key.0 != FrameType::Ack {
            let ack = Ack::parse(&frame)?;
            return Err(ClientError::Refused(ack.status));
        }
        Ok(frame)
    }

    /// Fleet size and current sim-time.
    pub async fn discover(&self) -> Result<Announce, ClientError> {
        let seq = self.next_seq(0, SeqClass::Control);
        let reply = self.request(Frame::new(FrameType::Discover, 0, seq, vec![])).await?;
        Ok(Announce::parse(&reply)?)
    }

    pub async fn attach(&self, drone: u8, mode: AttachMode) -> Result<Drone, ClientError> {
        let (watch_tx, watch_rx) = watch::channel(None);
        let (peer_tx, peer_rx) = mpsc::unbounded_channel();
        {
            let mut s = self.shared.lock().unwrap();
            s.telemetry.entry(drone).or_insert(watch_tx);
            s.peers.insert(drone, peer_tx);
        }
        let telemetry = self.shared.lock().unwrap().telemetry[&drone].subscribe();
        drop(watch_rx);
        let seq = self.next_seq(drone, SeqClass::Control);
        let payload = match mode {
            AttachMode::Pilot => vec![],
            AttachMode::Observer => vec![0x01],
        };
        let reply = self.request(Frame::new(FrameType::Discover, drone, seq, payload)).await?;
        let announce = Announce::parse(&reply)?;
        if announce.status != AckStatus::Ok {
            return Err(ClientError::Refused(announce.status));
        }
        Ok(Drone {
            client: self.clone(),
            id: drone,
            blocking: true,
            telemetry,
            peers: Arc::new(tokio::sync::Mutex::new(peer_rx)),
        })
    }
}

fn route(shared: &Mutex<Shared>, frame: Frame) {
    let mut s = shared.lock().unwrap();
    match frame.ftype {
        FrameType::Telemetry => {
            if let (Some(tx), Ok(t)) = (s.telemetry.get(&frame.drone_id), TelemetryPayload::parse(&frame)) {
                tx.send_replace(Some(t));
            }
        }
        FrameType::Peer => {
            // the frame names the sender; hand it to every attached drone
            for tx in s.peers.values() {
                let _ = tx.send((frame.drone_id, frame.payload.clone()));
            }
        }
        ftype => {
            if let Some(tx) = s.waiting.remove(&(ftype, frame.drone_id, frame.seq)) {
                let _ = tx.send(frame);
            }
        }
    }
}

/// What a command produced.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct CommandOutcome {
    pub status: AckStatus,
    /// Sim-time (ms) at which the drone applied it.
    pub applied_ms: u32,
    pub duration_ms: u32,
}

/// A drone attached on a [`DroneClient`].
pub struct Drone {
    client: DroneClient,
    id: u8,
    blocking: bool,
    telemetry: watch::Receiver<Option<TelemetryPayload>>,
    peers: Arc<tokio::sync::Mutex<mpsc::UnboundedReceiver<(u8, Vec<u8>)>>>,
}

/// Seconds to a command duration, refusing what the drone would nack.
pub fn duration_ms(seconds: f64) -> Result<u32, ClientError> {
    match seconds_to_ms(seconds) {
        Some(ms) if (1..=MAX_DURATION_MS).contains(&ms) => Ok(ms),
        _ => Err(ClientError::InvalidDuration(seconds)),
    }
}

impl Drone {
    pub fn id(&self) -> u8 {
        self.id
    }

    /// With blocking on (the default) a timed command returns only once the
    /// sim clock, as seen in telemetry, has passed its end.
    pub fn set_blocking(&mut self, blocking: bool) {
        self.blocking = blocking;
    }

    pub async fn up(&mut self, seconds: f64) -> Result<CommandOutcome, ClientError> {
        self.timed(Opcode::Up, seconds).await
    }

    pub async fn down(&mut self, seconds: f64) -> Result<CommandOutcome, ClientError> {
        self.timed(Opcode::Down, seconds).await
    }

    pub async fn forward(&mut self, seconds: f64) -> Result<CommandOutcome, ClientError> {
        self.timed(Opcode::Forward, seconds).await
    }

    pub async fn backward(&mut self, seconds: f64) -> Result<CommandOutcome, ClientError> {
        self.timed(Opcode::Backward, seconds).await
    }

    pub async fn turn_left(&mut self, seconds: f64) -> Result<CommandOutcome, ClientError> {
        self.timed(Opcode::TurnLeft, seconds).await
    }

    pub async fn turn_right(&mut self, seconds: f64) -> Result<CommandOutcome, ClientError> {
        self.timed(Opcode::TurnRight, seconds).await
    }

    pub async fn off(&mut self) -> Result<CommandOutcome, ClientError> {
        let seq = self.client.next_seq(self.id, SeqClass::Command);
        self.send_command(TimedCommand::off(seq)).await
    }

    pub async fn timed(&mut self, opcode: Opcode, seconds: f64) -> Result<CommandOutcome, ClientError> {
        if opcode == Opcode::Off {
            return self.off().await;
        }
        let ms = duration_ms(seconds)?;
        let seq = self.client.next_seq(self.id, SeqClass::Command);
        let outcome = self.send_command(TimedCommand::timed(opcode, ms, seq)).await?;
        if self.blocking {
            self.wait_until_ms(outcome.applied_ms.saturating_add(ms)).await?;
        }
        Ok(outcome)
    }

    async fn send_command(&mut self, cmd: TimedCommand) -> Result<CommandOutcome, ClientError> {
        let reply = self.client.request(command_frame(self.id, &cmd)).await?;
        let ack = Ack::parse(&reply)?;
        if !ack.status.is_accepted() {
            return Err(ClientError::Refused(ack.status));
        }
        Ok(CommandOutcome { status: ack.status, applied_ms: ack.t_ms, duration_ms: cmd.duration_ms.unwrap_or(0) })
    }

    /// Quantised height in metres.
    pub async fn height(&self) -> Result<f64, ClientError> {
        let seq = self.client.next_seq(self.id, SeqClass::Query);
        let reply = self.client.request(Frame::new(FrameType::HeightReq, self.id, seq, vec![])).await?;
        Ok(HeightResp::parse(&reply)?.meters())
    }

    pub fn latest_telemetry(&self) -> Option<TelemetryPayload> {
        *self.telemetry.borrow()
    }

    /// Wait for telemetry stamped at or after `t_ms`.
    pub async fn wait_until_ms(&mut self, t_ms: u32) -> Result<TelemetryPayload, ClientError> {
        let t = self
            .telemetry
            .wait_for(|t| t.is_some_and(|t| t.t_ms >= t_ms))
            .await
            .map_err(|_| ClientError::Closed)?;
        Ok(t.expect("checked above"))
    }

    /// Broadcast a payload to the other drones as this one.
    pub async fn send_peer(&self, payload: Vec<u8>) -> Result<(), ClientError> {
        let seq = self.client.next_seq(self.id, SeqClass::Peer);
        self.client.send(Frame::new(FrameType::Peer, self.id, seq, payload)).await
    }

    /// Next `(sender, payload)` relayed to this connection.
    pub async fn recv_peer(&self) -> Option<(u8, Vec<u8>)> {
        self.peers.lock().await.recv().await
    }
}
