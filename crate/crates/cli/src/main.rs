mod dump;

use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{anyhow, Context};
use blimp_client::{AttachMode, ConsoleClient, DroneClient};
use blimp_core::arena::parse_arena;
use blimp_core::config::{ConfigError, GatewayConfig};
use blimp_core::replay::{replay, ReplayError, ReplayLog, StateHash};
use blimp_core::runtime::Opcode;
use blimp_gateway::{Gateway, GatewayOptions, StartError};
use clap::{Args, Parser, Subcommand};

#[derive(Parser)]
#[command(name = "blimp", version, about = "Classroom blimp-drone ground station")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the gateway and simulator.
    Sim(SimArgs),
    /// Re-run a replay log and compare final state hashes.
    Replay {
        log: PathBuf,
        /// Hash to compare against; defaults to the one recorded in the log.
        #[arg(long)]
        expect_hash: Option<StateHash>,
    },
    /// Check an arena file.
    ValidateArena { file: PathBuf },
    /// Decode hex-encoded frames.
    FrameDump {
        /// Hex bytes; spaces and colons are ignored.
        #[arg(required = true, num_args = 1..)]
        hex: Vec<String>,
    },
    /// Print a running gateway's status.
    Status {
        #[arg(long, default_value = "http://127.0.0.1:7788")]
        console: String,
    },
    /// Print the race leaderboard.
    Races {
        #[arg(long, default_value = "http://127.0.0.1:7788")]
        console: String,
    },
    /// Fly a drone through a list of `verb:seconds` steps, e.g. `up:2 forward:1.5 off`.
    Fly {
        #[arg(long, default_value = "127.0.0.1:7787")]
        addr: String,
        #[arg(long)]
        drone: u8,
        #[arg(required = true, num_args = 1..)]
        steps: Vec<String>,
    },
}

#[derive(Args)]
struct SimArgs {
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    drones: Option<u8>,
    #[arg(long, conflicts_with = "fast")]
    real_time: bool,
    #[arg(long)]
    fast: bool,
    /// Stop after this many sim-seconds.
    #[arg(long)]
    duration: Option<f64>,
    #[arg(long)]
    arena: Option<PathBuf>,
    #[arg(long)]
    drone_port: Option<u16>,
    #[arg(long)]
    console_port: Option<u16>,
    #[arg(long)]
    runs_dir: Option<PathBuf>,
}

/// An error with the exit code it maps to.
struct Failure {
    code: u8,
    error: anyhow::Error,
}

const RUNTIME: u8 = 1;
const INVALID: u8 = 2;
const VERSION_MISMATCH: u8 = 3;

impl Failure {
    fn runtime(error: impl Into<anyhow::Error>) -> Self {
        Failure { code: RUNTIME, error: error.into() }
    }

    fn invalid(error: impl Into<anyhow::Error>) -> Self {
        Failure { code: INVALID, error: error.into() }
    }
}

type CliResult = Result<(), Failure>;

fn main() -> ExitCode {
    let cli = Cli::parse();
    tracing_subscriber::fmt()
        .with_writer(std::io::stderr)
        .with_env_filter(
            tracing_subscriber::EnvFilter::try_from_default_env().unwrap_or_else(|_| "warn".into()),
        )
        .init();
    let result = match cli.command {
        Command::ValidateArena { file } => validate_arena(&file),
        Command::FrameDump { hex } => frame_dump(&hex.join(" ")),
        Command::Replay { log, expect_hash } => replay_log(&log, expect_hash),
        command => {
            let rt = match tokio::runtime::Runtime::new() {
                Ok(rt) => rt,
                Err(e) => return fail(Failure::runtime(e)),
            };
            rt.block_on(run_async(command))
        }
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => fail(f),
    }
}

fn fail(f: Failure) -> ExitCode {
    eprintln!("error: {:#}", f.error);
    ExitCode::from(f.code)
}

async fn run_async(command: Command) -> CliResult {
    match command {
        Command::Sim(args) => sim(args).await,
        Command::Status { console } => {
            let status = ConsoleClient::new(console).status().await.map_err(Failure::runtime)?;
            println!("{}", serde_json::to_string_pretty(&status).map_err(Failure::runtime)?);
            Ok(())
        }
        Command::Races { console } => {
            let mut rows = ConsoleClient::new(console).races().await.map_err(Failure::runtime)?;
            rows.sort_by(|a, b| match (a.trial_time(), b.trial_time()) {
                (Some(x), Some(y)) => x.total_cmp(&y),
                (Some(_), None) => std::cmp::Ordering::Less,
                (None, Some(_)) => std::cmp::Ordering::Greater,
                (None, None) => std::cmp::Ordering::Equal,
            });
            for row in rows {
                let pilot = row.pilot.as_deref().unwrap_or("-");
                match row.trial_time() {
                    Some(t) => println!("drone {:>3}  {pilot:<20} {t:.2} s", row.drone_id),
                    None => println!("drone {:>3}  {pilot:<20} DNF", row.drone_id),
                }
            }
            Ok(())
        }
        Command::Fly { addr, drone, steps } => fly(&addr, drone, &steps).await,
        _ => unreachable!("handled synchronously"),
    }
}

fn validate_arena(file: &PathBuf) -> CliResult {
    let text = std::fs::read_to_string(file)
        .with_context(|| format!("cannot read {}", file.display()))
        .map_err(Failure::invalid)?;
    match parse_arena(&text) {
        Ok(_) => {
            println!("OK");
            Ok(())
        }
        Err(errors) => Err(Failure::invalid(anyhow!("invalid arena:\n  {}", errors.join("\n  ")))),
    }
}

fn frame_dump(hex: &str) -> CliResult {
    let bytes = dump::parse_hex(hex).map_err(|e| Failure::invalid(anyhow!("invalid hex: {e}")))?;
    let text = dump::dump(&bytes).map_err(Failure::invalid)?;
    print!("{text}");
    Ok(())
}

fn replay_log(path: &PathBuf, expect: Option<StateHash>) -> CliResult {
    let file = std::fs::File::open(path)
        .with_context(|| format!("cannot read {}", path.display()))
        .map_err(Failure::invalid)?;
    let log = ReplayLog::read_jsonl(std::io::BufReader::new(file)).map_err(Failure::invalid)?;
    let outcome = match replay(&log) {
        Ok(outcome) => outcome,
        Err(e @ ReplayError::HeaderMismatch(_)) => {
            let code = if log.header.format == blimp_core::replay::LOG_FORMAT { VERSION_MISMATCH } else { INVALID };
            return Err(Failure { code, error: e.into() });
        }
        Err(e @ (ReplayError::Io(_) | ReplayError::World(_))) => return Err(Failure::runtime(e)),
        Err(e) => return Err(Failure::invalid(e)),
    };
    println!("steps {}", outcome.final_step);
    println!("hash  {}", outcome.final_hash);
    let Some(expected) = expect.or(outcome.recorded_hash) else {
        return Err(Failure::runtime(anyhow!("log has no end record; pass --expect-hash")));
    };
    if expected != outcome.final_hash {
        return Err(Failure::runtime(anyhow!("hash mismatch: expected {expected}, replay gave {}", outcome.final_hash)));
    }
    println!("match");
    Ok(())
}

fn load_config(args: &SimArgs) -> Result<GatewayConfig, Failure> {
    let mut config = match &args.config {
        Some(path) => GatewayConfig::load(path).map_err(Failure::invalid)?,
        None => GatewayConfig::default(),
    };
    if let Some(seed) = args.seed {
        config.seed = seed;
    }
    if let Some(drones) = args.drones {
        config.drones = drones;
    }
    if args.fast {
        config.real_time = false;
    }
    if args.real_time {
        config.real_time = true;
    }
    if let Some(d) = args.duration {
        config.duration = Some(d);
    }
    if let Some(path) = &args.arena {
        config.arena_path = Some(path.clone());
    }
    if let Some(p) = args.drone_port {
        config.ports.drone = p;
    }
    if let Some(p) = args.console_port {
        config.ports.console = p;
    }
    if let Some(dir) = &args.runs_dir {
        config.runs_dir = dir.clone();
    }
    Ok(config)
}

async fn sim(args: SimArgs) -> CliResult {
    let config = load_config(&args)?;
    let problems = config.validate();
    if !problems.is_empty() {
        return Err(Failure::invalid(ConfigError::Invalid(problems)));
    }
    let arena = config.load_arena().map_err(|e| match e {
        ConfigError::Io { .. } => Failure::runtime(e),
        e => Failure::invalid(e),
    })?;
    let gateway = Gateway::start(GatewayOptions::new(config, arena)).await.map_err(|e| match e {
        StartError::Config(_) => Failure::invalid(e),
        e => Failure::runtime(e),
    })?;
    eprintln!("drone port   {}", gateway.drone_addr);
    eprintln!("console port {}", gateway.console_addr);
    let token = gateway.shutdown_token();
    tokio::spawn(async move {
        if tokio::signal::ctrl_c().await.is_ok() {
            token.cancel();
        }
    });
    let summary = gateway.wait().await;
    println!("steps {}", summary.step);
    println!("hash  {}", summary.hash);
    if let Some(path) = &summary.log_path {
        println!("log   {}", path.display());
    }
    match summary.error {
        Some(e) => Err(Failure::runtime(anyhow!(e))),
        None => Ok(()),
    }
}

/// `up:2` or `off`.
fn parse_step(step: &str) -> Result<(Opcode, f64), Failure> {
    let (verb, secs) = match step.split_once(':') {
        Some((verb, secs)) => {
            let secs = secs.parse::<f64>().map_err(|e| Failure::invalid(anyhow!("{step}: {e}")))?;
            (verb, secs)
        }
        None => (step, 0.0),
    };
    let opcode = Opcode::from_verb(verb).ok_or_else(|| Failure::invalid(anyhow!("unknown verb {verb:?}")))?;
    if opcode.is_timed() {
        blimp_client::duration_ms(secs).map_err(Failure::invalid)?;
    }
    Ok((opcode, secs))
}

async fn fly(addr: &str, drone: u8, steps: &[String]) -> CliResult {
    let plan = steps.iter().map(|s| parse_step(s)).collect::<Result<Vec<_>, _>>()?;
    let client = DroneClient::connect(addr).await.map_err(Failure::runtime)?;
    let mut handle = client.attach(drone, AttachMode::Pilot).await.map_err(Failure::runtime)?;
    for (opcode, secs) in plan {
        let outcome = handle.timed(opcode, secs).await.map_err(Failure::runtime)?;
        println!("{opcode} {:?} at {} ms", outcome.status, outcome.applied_ms);
    }
    let height = handle.height().await.map_err(Failure::runtime)?;
    println!("height {height:.3} m");
    Ok(())
}
