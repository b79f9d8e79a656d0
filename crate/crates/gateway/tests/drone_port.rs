mod common;

use std::time::Duration;

use blimp_core::protocol::payload::{command_frame, Ack, AckStatus, Announce, HeightResp, TelemetryPayload};
use blimp_core::protocol::{encode_frame, Frame, FrameType};
use blimp_core::runtime::{Opcode, TimedCommand};
use blimp_gateway::tcp::ATTACH_OBSERVER;

fn discover(drone: u8, payload: Vec<u8>) -> Frame {
    Frame::new(FrameType::Discover, drone, 1, payload)
}

async fn attach(conn: &mut common::Conn, drone: u8, payload: Vec<u8>) -> Announce {
    conn.send(discover(drone, payload)).await;
    let reply = conn.expect(FrameType::Announce).await;
    assert_eq!(reply.drone_id, drone);
    Announce::parse(&reply).unwrap()
}

#[tokio::test]
async fn discovery_reports_fleet_size() {
    let h = common::manual().await;
    let mut c = h.drone().await;
    let a = attach(&mut c, 0, vec![]).await;
    assert_eq!((a.status, a.drone_count, a.t_ms), (AckStatus::Ok, 3, 0));
}

#[tokio::test]
async fn pilot_attach_is_exclusive() {
    let h = common::manual().await;
    let mut first = h.drone().await;
    let mut second = h.drone().await;
    assert_eq!(attach(&mut first, 2, vec![]).await.status, AckStatus::Ok);
    assert_eq!(attach(&mut second, 2, vec![0x00]).await.status, AckStatus::Conflict);
    // observers can still watch
    assert_eq!(attach(&mut second, 2, vec![ATTACH_OBSERVER]).await.status, AckStatus::Ok);
    assert_eq!(attach(&mut second, 250, vec![]).await.status, AckStatus::UnknownDrone);

    // once the pilot disconnects the drone is free again
    drop(first);
    let mut third = h.drone().await;
    let mut status = AckStatus::Conflict;
    for _ in 0..50 {
        status = attach(&mut third, 2, vec![]).await.status;
        if status == AckStatus::Ok {
            break;
        }
        tokio::time::sleep(Duration::from_millis(20)).await;
    }
    assert_eq!(status, AckStatus::Ok);
}

#[tokio::test]
async fn command_is_acked_after_link_latency() {
    let h = common::manual().await;
    let mut c = h.drone().await;
    attach(&mut c, 3, vec![]).await;
    let cmd = TimedCommand::timed(Opcode::Up, 2000, 1);
    c.send(command_frame(3, &cmd)).await;
    c.sync().await;
    h.step(5).await;
    let frame = c.expect(FrameType::Ack).await;
    assert_eq!((frame.drone_id, frame.seq), (3, 1));
    let ack = Ack::parse(&frame).unwrap();
    assert_eq!(ack, Ack { status: AckStatus::Ok, t_ms: 20 });
}

#[tokio::test]
async fn duplicate_frame_runs_once() {
    let h = common::manual().await;
    let mut c = h.drone().await;
    attach(&mut c, 1, vec![]).await;
    let frame = command_frame(1, &TimedCommand::timed(Opcode::Forward, 1000, 7));
    c.send(frame.clone()).await;
    c.send(frame).await;
    c.sync().await;
    h.step(5).await;
    let acks: Vec<Ack> = [c.expect(FrameType::Ack).await, c.expect(FrameType::Ack).await]
        .iter()
        .map(|f| Ack::parse(f).unwrap())
        .collect();
    let mut statuses: Vec<AckStatus> = acks.iter().map(|a| a.status).collect();
    statuses.sort_by_key(|s| s.code());
    assert_eq!(statuses, vec![AckStatus::Ok, AckStatus::Duplicate]);
    // one command in the replay log
    let status = h.gateway.handle().status().await.unwrap();
    let snapshot = status.telemetry.iter().find(|s| s.drone_id == 1).unwrap();
    assert_eq!(snapshot.channels.lateral, Some(Opcode::Forward));
    let summary = h.gateway.stop().await;
    let log = std::fs::read_to_string(summary.log_path.unwrap()).unwrap();
    assert_eq!(log.matches("\"command\"").count(), 1);
}

#[tokio::test]
async fn stale_and_unauthorised_commands() {
    let h = common::manual().await;
    let mut c = h.drone().await;
    attach(&mut c, 1, vec![]).await;
    c.send(command_frame(1, &TimedCommand::timed(Opcode::Up, 500, 2000))).await;
    c.send(command_frame(1, &TimedCommand::timed(Opcode::Up, 500, 100))).await;
    let stale = c.expect(FrameType::Ack).await;
    assert_eq!((stale.seq, Ack::parse(&stale).unwrap().status), (100, AckStatus::NackStale));

    let mut watcher = h.drone().await;
    attach(&mut watcher, 1, vec![ATTACH_OBSERVER]).await;
    watcher.send(command_frame(1, &TimedCommand::off(1))).await;
    let refused = watcher.expect(FrameType::Ack).await;
    assert_eq!(Ack::parse(&refused).unwrap().status, AckStatus::NotPilot);
}

#[tokio::test]
async fn bounds_and_opcode_nacks() {
    let h = common::manual().await;
    let mut c = h.drone().await;
    attach(&mut c, 2, vec![]).await;
    c.send(command_frame(2, &TimedCommand::timed(Opcode::Down, 0, 1))).await;
    c.sync().await;
    h.step(3).await;
    assert_eq!(Ack::parse(&c.expect(FrameType::Ack).await).unwrap().status, AckStatus::NackBounds);

    c.send(Frame::new(FrameType::Cmd, 2, 2, vec![0x7F, 0xE8, 0x03, 0, 0])).await;
    assert_eq!(Ack::parse(&c.expect(FrameType::Ack).await).unwrap().status, AckStatus::NackOpcode);
}

#[tokio::test]
async fn corrupt_bytes_get_malformed_ack() {
    let h = common::manual().await;
    let mut c = h.drone().await;
    let mut bytes = encode_frame(&Frame::new(FrameType::HeightReq, 1, 1, vec![])).unwrap();
    let last = bytes.len() - 1;
    bytes[last] ^= 0xFF;
    c.send_raw(&bytes).await;
    let frame = c.expect(FrameType::Ack).await;
    assert_eq!((frame.drone_id, frame.seq), (0, 0));
    assert_eq!(Ack::parse(&frame).unwrap().status, AckStatus::Malformed);
    // and the connection keeps working
    assert_eq!(attach(&mut c, 0, vec![]).await.status, AckStatus::Ok);
}

#[tokio::test]
async fn height_round_trip() {
    let h = common::manual().await;
    let mut c = h.drone().await;
    attach(&mut c, 1, vec![]).await;
    h.step(100).await;
    c.send(Frame::new(FrameType::HeightReq, 1, 1, vec![])).await;
    c.sync().await;
    h.step(2).await;
    // the reading is taken from the state at the start of the delivery step
    let z = h.gateway.handle().exec(|s| s.world().drone(1).unwrap().state.position.z).await.unwrap();
    h.step(1).await;
    let frame = c.expect(FrameType::HeightResp).await;
    let resp = HeightResp::parse(&frame).unwrap();
    assert_eq!(frame.seq, 1);
    assert_eq!(resp.t_ms, 1020);
    // floored to 1 cm, carried in mm
    let expected_mm = ((z / 0.01 + 1e-9).floor() * 10.0).round() as u32;
    assert_eq!(resp.height_mm, expected_mm);
}

#[tokio::test]
async fn telemetry_only_for_attached_drones_at_20_hz() {
    let h = common::manual().await;
    let mut c = h.drone().await;
    attach(&mut c, 2, vec![ATTACH_OBSERVER]).await;
    h.step(100).await;
    let frames = c.drain(Duration::from_millis(200)).await;
    let telemetry: Vec<&Frame> = frames.iter().filter(|f| f.ftype == FrameType::Telemetry).collect();
    assert_eq!(telemetry.len(), 20);
    assert!(telemetry.iter().all(|f| f.drone_id == 2));
    let seqs: Vec<u16> = telemetry.iter().map(|f| f.seq).collect();
    assert_eq!(seqs, (1..=20).collect::<Vec<u16>>());
    let last = TelemetryPayload::parse(telemetry[19]).unwrap();
    assert_eq!(last.t_ms, 1000);

    // nothing attached, nothing sent
    let mut idle = h.drone().await;
    attach(&mut idle, 0, vec![]).await;
    h.step(100).await;
    assert!(idle.drain(Duration::from_millis(200)).await.is_empty());
}

#[tokio::test]
async fn peer_frames_fan_out_to_other_drones() {
    let h = common::manual().await;
    let mut sender = h.drone().await;
    let mut receiver = h.drone().await;
    attach(&mut sender, 1, vec![]).await;
    attach(&mut receiver, 3, vec![ATTACH_OBSERVER]).await;
    sender.send(Frame::new(FrameType::Peer, 1, 1, vec![0xAB, 0xCD])).await;
    sender.sync().await;
    h.step(3).await;
    let got = receiver.expect(FrameType::Peer).await;
    assert_eq!((got.drone_id, got.payload.as_slice()), (1, &[0xAB, 0xCD][..]));

    // relaying as a drone you do not pilot is refused
    receiver.send(Frame::new(FrameType::Peer, 3, 1, vec![1])).await;
    assert_eq!(Ack::parse(&receiver.expect(FrameType::Ack).await).unwrap().status, AckStatus::NotPilot);
}
