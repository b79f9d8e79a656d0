#![allow(dead_code)]

use std::collections::VecDeque;
use std::time::Duration;

use blimp_core::arena::Arena;
use blimp_core::config::{GatewayConfig, Ports};
use blimp_core::console::Pacing;
use blimp_core::protocol::{Frame, FrameCodec, FrameType};
use blimp_gateway::{Gateway, GatewayOptions};
use futures::{SinkExt, StreamExt};
use tempfile::TempDir;
use tokio::net::TcpStream;
use tokio_util::codec::Framed;

pub struct Harness {
    pub gateway: Gateway,
    pub runs: TempDir,
}

pub fn config(runs: &TempDir) -> GatewayConfig {
    GatewayConfig {
        ports: Ports { drone: 0, console: 0 },
        runs_dir: runs.path().to_path_buf(),
        real_time: false,
        ..Default::default()
    }
}

pub async fn start_with(pacing: Pacing, tweak: impl FnOnce(&mut GatewayConfig)) -> Harness {
    let runs = tempfile::tempdir().unwrap();
    let mut config = config(&runs);
    tweak(&mut config);
    let arena = config.load_arena().unwrap();
    let opts = GatewayOptions { pacing, ..GatewayOptions::new(config, arena) };
    let gateway = Gateway::start(opts).await.unwrap();
    Harness { gateway, runs }
}

pub async fn manual() -> Harness {
    start_with(Pacing::Manual, |_| {}).await
}

pub fn sample_arena() -> Arena {
    Arena::sample()
}

impl Harness {
    pub async fn step(&self, n: u64) {
        self.gateway.handle().step(n).await.unwrap();
    }

    pub async fn drone(&self) -> Conn {
        Conn { io: Framed::new(TcpStream::connect(self.gateway.drone_addr).await.unwrap(), FrameCodec), backlog: VecDeque::new() }
    }

    pub fn console_url(&self, path: &str) -> String {
        format!("http://{}{}", self.gateway.console_addr, path)
    }
}

/// A raw drone-port connection.
pub struct Conn {
    pub io: Framed<TcpStream, FrameCodec>,
    /// Frames skipped by `expect`, handed out first next time.
    backlog: VecDeque<Frame>,
}

impl Conn {
    pub async fn send(&mut self, frame: Frame) {
        self.io.send(frame).await.unwrap();
    }

    pub async fn send_raw(&mut self, bytes: &[u8]) {
        use tokio::io::AsyncWriteExt;
        self.io.get_mut().write_all(bytes).await.unwrap();
    }

    /// Next frame of the given type. Others are kept for later.
    pub async fn expect(&mut self, ftype: FrameType) -> Frame {
        if let Some(i) = self.backlog.iter().position(|f| f.ftype == ftype) {
            return self.backlog.remove(i).unwrap();
        }
        tokio::time::timeout(Duration::from_secs(5), async {
            loop {
                let frame = self.io.next().await.expect("connection open").unwrap().expect("valid frame");
                if frame.ftype == ftype {
                    return frame;
                }
                self.backlog.push_back(frame);
            }
        })
        .await
        .unwrap_or_else(|_| panic!("no {ftype} frame within 5 s"))
    }

    /// Frames are handled in order, so once a discovery round trip
    /// completes everything sent before it has reached the sim.
    pub async fn sync(&mut self) {
        self.send(Frame::new(FrameType::Discover, 0, 0, vec![])).await;
        self.expect(FrameType::Announce).await;
    }

    /// Every frame that arrives within `wait`.
    pub async fn drain(&mut self, wait: Duration) -> Vec<Frame> {
        let mut frames: Vec<Frame> = self.backlog.drain(..).collect();
        while let Ok(Some(item)) = tokio::time::timeout(wait, self.io.next()).await {
            frames.push(item.unwrap().unwrap());
        }
        frames
    }
}
