//! The drone port: binary frames over TCP, one session per connection.

use std::collections::HashMap;
use std::net::SocketAddr;

use blimp_core::console::{CreateSession, Role};
use blimp_core::protocol::payload::{parse_command, to_millis, Ack, AckStatus, Announce, HeightResp, PayloadError};
use blimp_core::protocol::{Frame, FrameCodec, FrameType};
use futures::{SinkExt, StreamExt};
use tokio::net::{TcpListener, TcpStream};
use tokio::sync::mpsc;
use tokio_util::codec::{FramedRead, FramedWrite};
use tokio_util::sync::CancellationToken;

use crate::error::GatewayError;
use crate::session::{Outbound, Scope, SessionId};
use crate::sim::SimHandle;

const OUTBOUND_QUEUE: usize = 256;
const REPLY_QUEUE: usize = 64;

/// DISCOVER payload byte asking for a read-only attach.
pub const ATTACH_OBSERVER: u8 = 0x01;

pub async fn serve(listener: TcpListener, sim: SimHandle, shutdown: CancellationToken) {
    loop {
        tokio::select! {
            _ = shutdown.cancelled() => break,
            accepted = listener.accept() => match accepted {
                Ok((stream, peer)) => {
                    let _ = stream.set_nodelay(true);
                    tokio::spawn(connection(stream, peer, sim.clone(), shutdown.clone()));
                }
                Err(e) => tracing::warn!("drone port accept: {e}"),
            },
        }
    }
}

async fn connection(stream: TcpStream, peer: SocketAddr, sim: SimHandle, shutdown: CancellationToken) {
    let (read, write) = stream.into_split();
    let (out_tx, out_rx) = mpsc::channel(OUTBOUND_QUEUE);
    let (reply_tx, reply_rx) = mpsc::channel(REPLY_QUEUE);
    let req = CreateSession { role: Role::Pilot, name: Some(peer.to_string()), subscribe: true };
    let Ok(info) = sim.open_session(req, Scope::Attached, Some(out_tx)).await else {
        return;
    };
    let id = info.session;
    tracing::debug!(session = id, %peer, "drone port connected");

    let writer = tokio::spawn(write_frames(FramedWrite::new(write, FrameCodec), reply_rx, out_rx));
    let mut frames = FramedRead::new(read, FrameCodec);
    loop {
        let item = tokio::select! {
            _ = shutdown.cancelled() => break,
            item = frames.next() => item,
        };
        let frame = match item {
            None | Some(Err(_)) => break,
            Some(Ok(Ok(frame))) => frame,
            Some(Ok(Err(e))) => {
                tracing::debug!(session = id, "malformed frame: {e}");
                let _ = reply_tx.send(Ack { status: AckStatus::Malformed, t_ms: 0 }.frame(0, 0)).await;
                continue;
            }
        };
        if handle(&sim, id, frame, &reply_tx).await.is_err() {
            break;
        }
    }
    drop(reply_tx);
    let _ = sim.close_session(id).await;
    writer.abort();
    tracing::debug!(session = id, "drone port closed");
}

async fn now_ms(sim: &SimHandle) -> Result<u32, GatewayError> {
    sim.exec(|s| to_millis(s.world().time())).await
}

fn ack(status: AckStatus, t_ms: u32, drone: u8, seq: u16) -> Frame {
    Ack { status, t_ms }.frame(drone, seq)
}

/// Handle one inbound frame. `Err` only when the sim is gone.
async fn handle(sim: &SimHandle, id: SessionId, frame: Frame, replies: &mpsc::Sender<Frame>) -> Result<(), GatewayError> {
    let (drone, seq) = (frame.drone_id, frame.seq);
    let reply = match frame.ftype {
        FrameType::Discover => {
            let (status, count, t) = if drone == 0 {
                sim.exec(|s| (AckStatus::Ok, s.world().config().drones, s.world().time())).await?
            } else {
                let as_pilot = match frame.payload.as_slice() {
                    [] | [0x00] => Some(true),
                    [ATTACH_OBSERVER] => Some(false),
                    _ => None,
                };
                sim.exec(move |s| {
                    let status = match as_pilot {
                        Some(p) => s.attach(id, drone, Some(p)).map_or_else(|e| e.ack_status(), |_| AckStatus::Ok),
                        None => AckStatus::Malformed,
                    };
                    (status, s.world().config().drones, s.world().time())
                })
                .await?
            };
            let announce = Announce { status, drone_count: count, t_ms: to_millis(t) };
            Frame::new(FrameType::Announce, drone, seq, announce.to_payload())
        }
        FrameType::Cmd => match parse_command(&frame) {
            Ok(cmd) => match sim.submit_command(id, drone, cmd).await {
                Ok(pending) => {
                    let replies = replies.clone();
                    // the ACK waits for the drone; keep reading meanwhile
                    tokio::spawn(async move {
                        if let Ok(r) = pending.resolve().await {
                            let _ = replies.send(ack(r.status, to_millis(r.t), drone, seq)).await;
                        }
                    });
                    return Ok(());
                }
                Err(GatewayError::ShuttingDown) => return Err(GatewayError::ShuttingDown),
                Err(e) => ack(e.ack_status(), now_ms(sim).await?, drone, seq),
            },
            Err(PayloadError::UnknownOpcode(_)) => match sim.call(move |s| s.unknown_opcode(id, drone, seq)).await {
                Ok(r) => ack(r.status, to_millis(r.t), drone, seq),
                Err(GatewayError::ShuttingDown) => return Err(GatewayError::ShuttingDown),
                Err(e) => ack(e.ack_status(), now_ms(sim).await?, drone, seq),
            },
            Err(_) => ack(AckStatus::Malformed, now_ms(sim).await?, drone, seq),
        },
        FrameType::HeightReq => match sim.submit_height(id, drone, Some(seq)).await {
            Ok(pending) => {
                let replies = replies.clone();
                tokio::spawn(async move {
                    if let Ok(h) = pending.resolve().await {
                        let resp = HeightResp::from_meters(h.height, to_millis(h.t));
                        let _ = replies.send(Frame::new(FrameType::HeightResp, drone, seq, resp.to_payload())).await;
                    }
                });
                return Ok(());
            }
            Err(GatewayError::ShuttingDown) => return Err(GatewayError::ShuttingDown),
            Err(e) => ack(e.ack_status(), now_ms(sim).await?, drone, seq),
        },
        FrameType::Peer => match sim.relay(id, drone, None, frame.payload, Some(seq)).await {
            // fire-and-forget unless refused
            Ok(_) => return Ok(()),
            Err(GatewayError::ShuttingDown) => return Err(GatewayError::ShuttingDown),
            Err(e) => ack(e.ack_status(), now_ms(sim).await?, drone, seq),
        },
        FrameType::Ack | FrameType::Telemetry | FrameType::Announce | FrameType::HeightResp => {
            ack(AckStatus::Malformed, now_ms(sim).await?, drone, seq)
        }
    };
    replies.send(reply).await.map_err(|_| GatewayError::ShuttingDown)
}

async fn write_frames(
    mut sink: FramedWrite<tokio::net::tcp::OwnedWriteHalf, FrameCodec>,
    mut replies: mpsc::Receiver<Frame>,
    mut outbound: mpsc::Receiver<Outbound>,
) {
    let mut telemetry_seq: HashMap<u8, u16> = HashMap::new();
    let mut peer_seq: HashMap<u8, u16> = HashMap::new();
    let next = |map: &mut HashMap<u8, u16>, drone: u8| {
        let s = map.entry(drone).or_insert(0);
        *s = s.wrapping_add(1);
        *s
    };
    loop {
        let frames: Vec<Frame> = tokio::select! {
            biased;
            reply = replies.recv() => match reply {
                Some(f) => vec![f],
                None => break,
            },
            out = outbound.recv() => match out {
                Some(Outbound::Telemetry { snapshots, .. }) => snapshots
                    .iter()
                    .map(|s| {
                        let seq = next(&mut telemetry_seq, s.drone_id);
                        Frame::new(FrameType::Telemetry, s.drone_id, seq, s.to_payload().to_payload())
                    })
                    .collect(),
                Some(Outbound::Peer { src, dst, payload }) => {
                    vec![Frame::new(FrameType::Peer, src, next(&mut peer_seq, dst), payload)]
                }
                Some(Outbound::Race(_)) => continue,
                None => break,
            },
        };
        for f in frames {
            if sink.feed(f).await.is_err() {
                return;
            }
        }
        if sink.flush().await.is_err() {
            return;
        }
    }
}
