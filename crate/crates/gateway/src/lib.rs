//! Ground-station service. One task owns the simulated fleet; drone clients
//! speak binary frames on one port and consoles speak JSON on another.

pub mod error;
pub mod http;
pub mod runs;
pub mod session;
pub mod sim;
pub mod tcp;

use std::net::SocketAddr;
use std::path::PathBuf;

use blimp_core::arena::Arena;
use blimp_core::config::GatewayConfig;
use blimp_core::console::Pacing;
use blimp_core::world::{World, WorldError};
use thiserror::Error;
use tokio::net::TcpListener;
use tokio::task::JoinHandle;
use tokio_util::sync::CancellationToken;

pub use error::GatewayError;
pub use sim::{RunSummary, SimHandle};

#[derive(Debug, Error)]
pub enum StartError {
    #[error("invalid configuration:\n  {}", .0.join("\n  "))]
    Config(Vec<String>),
    #[error(transparent)]
    World(#[from] WorldError),
    #[error("cannot bind {addr}: {source}")]
    Bind { addr: String, source: std::io::Error },
    #[error("runs directory {path}: {source}")]
    Runs { path: PathBuf, source: std::io::Error },
}

pub struct GatewayOptions {
    pub config: GatewayConfig,
    pub arena: Arena,
    pub pacing: Pacing,
    /// Write the replay log and race rows under `config.runs_dir`.
    pub record: bool,
}

impl GatewayOptions {
    pub fn new(config: GatewayConfig, arena: Arena) -> Self {
        let pacing = if config.real_time { Pacing::RealTime } else { Pacing::Fast };
        GatewayOptions { config, arena, pacing, record: true }
    }
}

/// A running service.
pub struct Gateway {
    pub drone_addr: SocketAddr,
    pub console_addr: SocketAddr,
    pub log_path: Option<PathBuf>,
    sim: SimHandle,
    shutdown: CancellationToken,
    run: JoinHandle<RunSummary>,
    servers: Vec<JoinHandle<()>>,
}

async fn bind(host: &str, port: u16) -> Result<TcpListener, StartError> {
    let addr = format!("{host}:{port}");
    TcpListener::bind(&addr).await.map_err(|source| StartError::Bind { addr, source })
}

impl Gateway {
    /// Bind both ports and start the loop. Port 0 picks a free port.
    pub async fn start(opts: GatewayOptions) -> Result<Gateway, StartError> {
        let config = &opts.config;
        let problems = config.validate();
        if !problems.is_empty() {
            return Err(StartError::Config(problems));
        }
        let world = World::new(config.world_config(), opts.arena)?;
        let drone_listener = bind(&config.bind, config.ports.drone).await?;
        let console_listener = bind(&config.bind, config.ports.console).await?;
        let local = |l: &TcpListener| {
            l.local_addr().map_err(|source| StartError::Bind { addr: config.bind.clone(), source })
        };
        let drone_addr = local(&drone_listener)?;
        let console_addr = local(&console_listener)?;

        let runs_err = |source| StartError::Runs { path: config.runs_dir.clone(), source };
        let (writer, history) = if opts.record {
            let writer = runs::RunWriter::create(&config.runs_dir, config.seed).map_err(runs_err)?;
            let history = runs::read_races(writer.races_path()).map_err(runs_err)?;
            (Some(writer), history)
        } else {
            (None, Vec::new())
        };
        let log_path = writer.as_ref().map(|w| w.log_path().to_path_buf());

        let station = sim::Station::new(world, opts.pacing, config.duration, writer, history);
        let (handle, rx) = sim::channel();
        let shutdown = CancellationToken::new();
        let run = tokio::spawn(sim::run(station, rx, shutdown.clone()));
        let servers = vec![
            tokio::spawn(tcp::serve(drone_listener, handle.clone(), shutdown.clone())),
            tokio::spawn(serve_console(console_listener, handle.clone(), shutdown.clone())),
        ];
        tracing::info!(%drone_addr, %console_addr, pacing = ?opts.pacing, "gateway listening");
        Ok(Gateway { drone_addr, console_addr, log_path, sim: handle, shutdown, run, servers })
    }

    pub fn handle(&self) -> SimHandle {
        self.sim.clone()
    }

    /// Ask the loop to stop; [`wait`](Self::wait) returns once it has.
    pub fn shutdown(&self) {
        self.shutdown.cancel();
    }

    pub fn shutdown_token(&self) -> CancellationToken {
        self.shutdown.clone()
    }

    /// Wait for the run to end (duration, failure, or shutdown), then stop
    /// the listeners.
    pub async fn wait(self) -> RunSummary {
        let summary = self.run.await.expect("sim loop panicked");
        self.shutdown.cancel();
        for s in self.servers {
            let _ = s.await;
        }
        summary
    }

    pub async fn stop(self) -> RunSummary {
        self.shutdown();
        self.wait().await
    }
}

async fn serve_console(listener: TcpListener, sim: SimHandle, shutdown: CancellationToken) {
    let app = http::router(sim);
    let result = axum::serve(listener, app).with_graceful_shutdown(shutdown.cancelled_owned()).await;
    if let Err(e) = result {
        tracing::error!("console port: {e}");
    }
}
