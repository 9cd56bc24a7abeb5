//! Command-line entry points: `serve`, `scenario`, `replay`.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::{Arc, RwLock};

use clap::{Args, Parser, Subcommand};
use webrover_core::config::Config;
use webrover_core::daps::SampleStore;
use webrover_core::replay::replay;
use webrover_core::scenario::Scenario;
use webrover_core::sim::Simulator;
use webrover_core::simkernel::TrafficLog;
use webrover_service::{AppState, Speed};

/// Environment override for the listen address.
pub const LISTEN_ENV: &str = "WEBROVER_LISTEN";

pub mod exit {
    pub const OK: u8 = 0;
    /// Assertion failed or replay found violations.
    pub const FAILED: u8 = 1;
    /// Bad config, script or arguments.
    pub const BAD_INPUT: u8 = 2;
    /// Could not bind the listen address.
    pub const BIND: u8 = 3;
    /// I/O or simulator fault at runtime.
    pub const RUNTIME: u8 = 4;
}

#[derive(Debug, Parser)]
#[command(name = "webrover", version, about = "Emulated two-MCU rover with a web teleoperation service")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Run the simulator and the HTTP service.
    Serve {
        #[command(flatten)]
        common: Common,
        /// Listen address; overrides the env var and the config file.
        #[arg(long, env = LISTEN_ENV)]
        listen: Option<String>,
        #[arg(long, default_value = "real")]
        speed: Speed,
    },
    /// Run a timed command/assertion script headless at full speed.
    Scenario {
        script: PathBuf,
        #[command(flatten)]
        common: Common,
    },
    /// Check a bus-traffic or sample log offline.
    Replay {
        log: PathBuf,
        #[arg(long)]
        config: Option<PathBuf>,
    },
}

#[derive(Debug, Args)]
pub struct Common {
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Noise RNG seed.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Write bus traffic to this file.
    #[arg(long)]
    pub bus_log: Option<PathBuf>,
}

#[derive(Debug)]
pub struct Failure {
    pub code: u8,
    pub msg: String,
}

impl Failure {
    fn new(code: u8, msg: impl std::fmt::Display) -> Self {
        Self { code, msg: msg.to_string() }
    }
}

fn load_config(path: Option<&Path>) -> Result<Config, Failure> {
    let cfg = match path {
        Some(p) => Config::load(p),
        None => Ok(Config::default()),
    };
    cfg.map_err(|e| Failure::new(exit::BAD_INPUT, e))
}

fn resolve(common: &Common) -> Result<Config, Failure> {
    let mut cfg = load_config(common.config.as_deref())?;
    if let Some(seed) = common.seed {
        cfg.seed = seed;
    }
    if let Some(p) = &common.bus_log {
        cfg.bus_log = Some(p.clone());
    }
    cfg.validate().map_err(|e| Failure::new(exit::BAD_INPUT, e))?;
    Ok(cfg)
}

fn traffic_log(cfg: &Config, keep: bool) -> Result<TrafficLog, Failure> {
    let log = if keep { TrafficLog::in_memory() } else { TrafficLog::discard() };
    match &cfg.bus_log {
        None => Ok(log),
        Some(p) => {
            let f = File::create(p).map_err(|e| Failure::new(exit::RUNTIME, format!("{}: {e}", p.display())))?;
            Ok(log.with_writer(Box::new(BufWriter::new(f))))
        }
    }
}

fn open_store(cfg: &Config) -> Result<SampleStore, Failure> {
    match &cfg.data_dir {
        Some(dir) => SampleStore::open(dir).map_err(|e| Failure::new(exit::RUNTIME, e)),
        None => Ok(SampleStore::memory()),
    }
}

/// Runs a script and returns its printed report.
pub fn run_scenario(script: &Path, common: &Common) -> Result<(String, bool), Failure> {
    let cfg = resolve(common)?;
    let scenario = Scenario::load(script).map_err(|e| Failure::new(exit::BAD_INPUT, format!("{}: {e}", script.display())))?;
    let traffic = traffic_log(&cfg, false)?;
    let store = Arc::new(RwLock::new(SampleStore::memory()));
    let mut sim = Simulator::with_store(cfg, store, traffic).map_err(|e| Failure::new(exit::BAD_INPUT, e))?;
    let report = scenario.run_on(&mut sim).map_err(|e| Failure::new(exit::RUNTIME, e))?;
    sim.traffic_mut().flush().map_err(|e| Failure::new(exit::RUNTIME, e))?;
    Ok((report.to_string(), report.passed()))
}

pub fn run_replay(log: &Path, config: Option<&Path>) -> Result<(String, bool), Failure> {
    let cfg = load_config(config)?;
    let text = std::fs::read_to_string(log).map_err(|e| Failure::new(exit::RUNTIME, format!("{}: {e}", log.display())))?;
    let report = replay(&text, cfg.geometry, cfg.start_pose());
    Ok((report.to_string(), report.is_clean()))
}

async fn shutdown_signal() {
    #[cfg(unix)]
    {
        use tokio::signal::unix::{signal, SignalKind};
        match signal(SignalKind::terminate()) {
            Ok(mut term) => {
                tokio::select! {
                    _ = tokio::signal::ctrl_c() => {}
                    _ = term.recv() => {}
                }
            }
            Err(_) => {
                let _ = tokio::signal::ctrl_c().await;
            }
        }
    }
    #[cfg(not(unix))]
    {
        let _ = tokio::signal::ctrl_c().await;
    }
}

pub fn run_serve(common: &Common, listen: Option<String>, speed: Speed) -> Result<(), Failure> {
    let mut cfg = resolve(common)?;
    if let Some(l) = listen {
        cfg.listen = l;
    }
    let store = Arc::new(RwLock::new(open_store(&cfg)?));
    let traffic = traffic_log(&cfg, false)?;
    let listen = cfg.listen.clone();
    let sim = Simulator::with_store(cfg, store, traffic).map_err(|e| Failure::new(exit::BAD_INPUT, e))?;
    let rt = tokio::runtime::Runtime::new().map_err(|e| Failure::new(exit::RUNTIME, e))?;
    rt.block_on(async move {
        let listener = tokio::net::TcpListener::bind(&listen)
            .await
            .map_err(|e| Failure::new(exit::BIND, format!("cannot listen on {listen}: {e}")))?;
        let addr = listener.local_addr().map_err(|e| Failure::new(exit::BIND, e))?;
        println!("listening on http://{addr}");
        let _ = std::io::stdout().flush();
        webrover_service::serve(listener, AppState::new(sim), speed, shutdown_signal())
            .await
            .map_err(|e| Failure::new(exit::RUNTIME, e))
    })
}

pub fn run(cli: Cli) -> ExitCode {
    let result = match cli.command {
        Command::Serve { common, listen, speed } => run_serve(&common, listen, speed).map(|()| exit::OK),
        Command::Scenario { script, common } => run_scenario(&script, &common).map(|(report, ok)| {
            println!("{report}");
            if ok { exit::OK } else { exit::FAILED }
        }),
        Command::Replay { log, config } => run_replay(&log, config.as_deref()).map(|(report, ok)| {
            println!("{report}");
            if ok { exit::OK } else { exit::FAILED }
        }),
    };
    match result {
        Ok(code) => ExitCode::from(code),
        Err(f) => {
            eprintln!("error: {}", f.msg);
            ExitCode::from(f.code)
        }
    }
}
