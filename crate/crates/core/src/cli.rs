//! The `platform` command line.
//!
//! ```text
//! platform start --name SCADA --listen :7001 --agents "H1:opc-agent:device=winder"
//! platform join  --main 192.168.100.31:7001 --id host2 --agents "R2:operator:target=winder"
//! platform ps    --main 192.168.100.31:7001
//! platform demo  [--with-salvage] [--duration 30] [--trace-dir traces]
//! ```
//!
//! Exit codes: 0 ok, 1 usage, 2 connectivity, 3 configuration. Errors are
//! printed as `error: <ErrorName>: <detail>` on stderr. `PLATFORM_LOG` sets
//! the log filter (default `info`).

use std::path::{Path, PathBuf};
use std::time::Duration;

use clap::{Args, Parser, Subcommand};
use serde::Deserialize;
use thiserror::Error;
use tracing::info;

use crate::clock::unix_ms;
use crate::plc::config::fixtures;
use crate::plc::{DeviceDirectory, DeviceHandle, DeviceModel, PlcError};
use crate::runtime::{
    join_container_with, query_ps, start_main_container_with, AgentArgs, Container, ContainerConfig, RouteEntry,
    RuntimeError, DEFAULT_HEARTBEAT_MS,
};
use crate::scada::register_kinds;
use crate::sniffer::{CaptureSession, SnifferError};

#[derive(Debug, Parser)]
#[command(name = "platform", version, about = "Agent-based SCADA platform")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Boot the main container (and directory facilitator).
    Start(StartArgs),
    /// Join a running platform as a secondary container.
    Join(JoinArgs),
    /// List the agents of a running platform.
    Ps(PsArgs),
    /// Run the two-station demo topology with the sniffer on.
    Demo(DemoArgs),
}

#[derive(Debug, Args, Default)]
pub struct HostArgs {
    /// Device configuration file; repeatable. Defaults to the bundled stations.
    #[arg(long = "device", value_name = "PATH")]
    pub devices: Vec<PathBuf>,
    /// `Name:kind[:k=v,...]`; repeatable or `;`-separated.
    #[arg(long = "agents", value_name = "SPEC")]
    pub agents: Vec<String>,
    #[arg(long, value_name = "MS")]
    pub heartbeat_ms: Option<u64>,
    /// Capture traffic and write trace files here on shutdown.
    #[arg(long, value_name = "DIR")]
    pub trace_dir: Option<PathBuf>,
    /// Stop after this many seconds instead of waiting for a signal.
    #[arg(long, value_name = "SECS")]
    pub duration: Option<f64>,
}

#[derive(Debug, Args)]
pub struct StartArgs {
    #[arg(long)]
    pub name: Option<String>,
    /// `host:port` or `:port`.
    #[arg(long)]
    pub listen: Option<String>,
    /// TOML file with name, listen, devices, agents, heartbeat_ms,
    /// trace_dir. Flags win on conflict.
    #[arg(long, value_name = "PATH")]
    pub config: Option<PathBuf>,
    #[command(flatten)]
    pub host: HostArgs,
}

#[derive(Debug, Args)]
pub struct JoinArgs {
    #[arg(long, value_name = "HOST:PORT")]
    pub main: String,
    /// Container id; defaults to `container-<pid>`.
    #[arg(long)]
    pub id: Option<String>,
    #[arg(long, default_value = "SCADA")]
    pub name: String,
    #[command(flatten)]
    pub host: HostArgs,
}

#[derive(Debug, Args)]
pub struct PsArgs {
    #[arg(long, value_name = "HOST:PORT")]
    pub main: String,
    #[arg(long, default_value = "SCADA")]
    pub name: String,
}

#[derive(Debug, Args)]
pub struct DemoArgs {
    #[arg(long, default_value = "127.0.0.1:7001")]
    pub listen: String,
    /// Also run the salvage station and its OPC-Agent.
    #[arg(long)]
    pub with_salvage: bool,
    #[arg(long, value_name = "SECS")]
    pub duration: Option<f64>,
    #[arg(long, value_name = "DIR", default_value = "traces")]
    pub trace_dir: PathBuf,
    /// Gateway bind host for the operator agents (ports are ephemeral).
    #[arg(long, default_value = "127.0.0.1")]
    pub gateway_host: String,
}

#[derive(Debug, Error)]
pub enum CliError {
    #[error("Usage: {0}")]
    Usage(String),
    #[error("ConfigError: {0}")]
    Config(String),
    #[error(transparent)]
    Device(#[from] PlcError),
    #[error(transparent)]
    Runtime(#[from] RuntimeError),
    #[error(transparent)]
    Trace(#[from] SnifferError),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => 1,
            CliError::Config(_) | CliError::Device(_) => 3,
            CliError::Trace(_) => 2,
            CliError::Runtime(e) => match e {
                RuntimeError::InvalidArguments(_) | RuntimeError::UnknownAgentKind(_) => 1,
                _ => 2,
            },
        }
    }
}

/// One `--agents` entry.
#[derive(Clone, Debug, PartialEq)]
pub struct AgentSpec {
    pub name: String,
    pub kind: String,
    pub args: AgentArgs,
}

impl AgentSpec {
    /// `Name:kind[:k=v,...]`. A comma-separated piece without `=` belongs
    /// to the previous value, so item addresses like `db1,w0` survive.
    pub fn parse(text: &str) -> Result<AgentSpec, CliError> {
        let mut parts = text.trim().splitn(3, ':');
        let name = parts.next().unwrap_or_default().trim();
        let kind = parts.next().unwrap_or_default().trim();
        if name.is_empty() || kind.is_empty() {
            return Err(CliError::Usage(format!("agent spec {text:?}: expected Name:kind[:k=v,...]")));
        }
        let mut args = AgentArgs::new();
        let mut last: Option<String> = None;
        for piece in parts.next().unwrap_or_default().split(',').filter(|p| !p.is_empty()) {
            match piece.split_once('=') {
                Some((k, v)) => {
                    args.insert(k.trim().to_string(), v.to_string());
                    last = Some(k.trim().to_string());
                }
                None => match &last {
                    Some(k) => args.get_mut(k).expect("key inserted").push_str(&format!(",{piece}")),
                    None => return Err(CliError::Usage(format!("agent spec {text:?}: {piece:?} is not k=v"))),
                },
            }
        }
        Ok(AgentSpec { name: name.to_string(), kind: kind.to_string(), args })
    }

    pub fn parse_all(specs: &[String]) -> Result<Vec<AgentSpec>, CliError> {
        specs
            .iter()
            .flat_map(|s| s.split(';'))
            .filter(|s| !s.trim().is_empty())
            .map(AgentSpec::parse)
            .collect()
    }
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct PlatformFile {
    name: Option<String>,
    listen: Option<String>,
    #[serde(default)]
    devices: Vec<PathBuf>,
    #[serde(default)]
    agents: Vec<String>,
    heartbeat_ms: Option<u64>,
    trace_dir: Option<PathBuf>,
}

/// Parses arguments, runs, and returns the process exit code.
pub fn main() -> i32 {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    init_logging();
    let runtime = match tokio::runtime::Runtime::new() {
        Ok(rt) => rt,
        Err(e) => {
            eprintln!("error: Io: {e}");
            return 2;
        }
    };
    match runtime.block_on(run(cli)) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

fn init_logging() {
    let filter = tracing_subscriber::EnvFilter::try_from_env("PLATFORM_LOG")
        .unwrap_or_else(|_| tracing_subscriber::EnvFilter::new("info"));
    let _ = tracing_subscriber::fmt().with_env_filter(filter).with_writer(std::io::stderr).try_init();
}

pub async fn run(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Start(args) => start(args).await,
        Command::Join(args) => join(args).await,
        Command::Ps(args) => {
            for row in query_ps(&args.main, &args.name).await? {
                println!("{}", ps_line(&row));
            }
            Ok(())
        }
        Command::Demo(args) => demo(args).await,
    }
}

pub fn ps_line(row: &RouteEntry) -> String {
    format!("{} {} {} {}", row.local_name, row.kind, row.container, row.state)
}

/// Loads device files, or the bundled stations when none are given, and
/// starts their tick loops.
pub fn load_devices(paths: &[PathBuf]) -> Result<DeviceDirectory, CliError> {
    let devices = DeviceDirectory::new();
    let mut models = Vec::new();
    if paths.is_empty() {
        for (_, doc) in fixtures::all() {
            models.push(DeviceModel::load(doc, unix_ms())?);
        }
    } else {
        for p in paths {
            let doc = std::fs::read_to_string(p).map_err(|e| CliError::Config(format!("{}: {e}", p.display())))?;
            models.push(DeviceModel::load(&doc, unix_ms()).map_err(|e| match e {
                PlcError::SchemaViolation { path, message } => {
                    PlcError::SchemaViolation { path: format!("{}: {path}", p.display()), message }
                }
                other => other,
            })?);
        }
    }
    for m in models {
        devices.insert(DeviceHandle::spawn(m));
    }
    Ok(devices)
}

fn container_config(heartbeat_ms: Option<u64>) -> ContainerConfig {
    ContainerConfig {
        heartbeat: Duration::from_millis(heartbeat_ms.unwrap_or(DEFAULT_HEARTBEAT_MS).max(1)),
        ..ContainerConfig::default()
    }
}

async fn spawn_all(container: &Container, specs: &[AgentSpec]) -> Result<(), CliError> {
    for spec in specs {
        let aid = container.spawn_agent(&spec.name, &spec.kind, &spec.args).await?;
        println!("agent {aid} {} {}", spec.kind, container.id());
    }
    Ok(())
}

async fn wait_for_stop(duration: Option<f64>) {
    let timer = async {
        match duration {
            Some(secs) => tokio::time::sleep(Duration::from_secs_f64(secs.max(0.0))).await,
            None => std::future::pending().await,
        }
    };
    #[cfg(unix)]
    let term = async {
        match tokio::signal::unix::signal(tokio::signal::unix::SignalKind::terminate()) {
            Ok(mut s) => {
                s.recv().await;
            }
            Err(_) => std::future::pending().await,
        }
    };
    #[cfg(not(unix))]
    let term = std::future::pending::<()>();
    tokio::select! {
        _ = timer => {}
        _ = tokio::signal::ctrl_c() => info!("interrupted"),
        _ = term => info!("terminated"),
    }
}

fn write_trace(session: &CaptureSession, dir: &Path, stem: &str) -> Result<(), CliError> {
    for path in session.write_files(dir, stem)? {
        println!("trace {}", path.display());
    }
    Ok(())
}

async fn host(container: Container, devices: DeviceDirectory, host: &HostArgs, specs: &[AgentSpec], trace_dir: Option<PathBuf>) -> Result<(), CliError> {
    register_kinds(&container, &devices);
    let capture = match &trace_dir {
        Some(_) => Some(container.start_capture(None)?),
        None => None,
    };
    let spawned = spawn_all(&container, specs).await;
    if spawned.is_ok() {
        println!("ready");
        wait_for_stop(host.duration).await;
    }
    container.shutdown().await;
    devices.stop_all();
    if let (Some(session), Some(dir)) = (capture, trace_dir) {
        write_trace(&session, &dir, container.id())?;
    }
    spawned
}

async fn start(args: StartArgs) -> Result<(), CliError> {
    let file = match &args.config {
        Some(path) => {
            let text =
                std::fs::read_to_string(path).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
            toml::from_str::<PlatformFile>(&text).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?
        }
        None => PlatformFile::default(),
    };
    let name = args.name.or(file.name).unwrap_or_else(|| "SCADA".into());
    let listen = args.listen.or(file.listen).unwrap_or_else(|| ":7001".into());
    let device_paths = if args.host.devices.is_empty() { file.devices } else { args.host.devices.clone() };
    let agent_specs = if args.host.agents.is_empty() { file.agents } else { args.host.agents.clone() };
    let specs = AgentSpec::parse_all(&agent_specs)?;
    let devices = load_devices(&device_paths)?;
    let config = container_config(args.host.heartbeat_ms.or(file.heartbeat_ms));
    let container = match start_main_container_with(&name, &listen, config).await {
        Ok(c) => c,
        Err(e) => {
            devices.stop_all();
            return Err(e.into());
        }
    };
    println!("platform {name} listening on {}", container.listen_address());
    let trace_dir = args.host.trace_dir.clone().or(file.trace_dir);
    host(container, devices, &args.host, &specs, trace_dir).await
}

async fn join(args: JoinArgs) -> Result<(), CliError> {
    let specs = AgentSpec::parse_all(&args.host.agents)?;
    let devices = load_devices(&args.host.devices)?;
    let id = args.id.clone().unwrap_or_else(|| format!("container-{}", std::process::id()));
    let container = match join_container_with(&args.main, &id, &args.name, container_config(args.host.heartbeat_ms)).await {
        Ok(c) => c,
        Err(e) => {
            devices.stop_all();
            return Err(e.into());
        }
    };
    println!("joined {} as {id} via {}", args.name, args.main);
    host(container, devices, &args.host, &specs, args.host.trace_dir.clone()).await
}

/// The demo roster: two OPC-Agents (three with salvage) and three
/// operator agents, two on the winder and one on the wrapping station.
pub fn demo_specs(with_salvage: bool, gateway_host: &str) -> Vec<AgentSpec> {
    let gw = format!("gateway={gateway_host}:0");
    let mut text = vec![
        "WinderOpcAgent1:opc-agent:device=winder,service=winder".to_string(),
        "WrappingOpcAgent1:opc-agent:device=wrapping,service=wrapping".to_string(),
    ];
    if with_salvage {
        text.push("SalvageOpcAgent1:opc-agent:device=salvage,service=salvage".to_string());
    }
    text.push(format!("WinderRemoteAgent1:operator:target=winder,{gw}"));
    text.push(format!("WinderRemoteAgent2:operator:target=winder,{gw}"));
    text.push(format!("WrappingRemoteAgent2:operator:target=wrapping,{gw}"));
    AgentSpec::parse_all(&text).expect("demo specs are well-formed")
}

async fn demo(args: DemoArgs) -> Result<(), CliError> {
    let devices = load_devices(&[])?;
    if !args.with_salvage {
        if let Some(h) = devices.find("salvage") {
            devices.remove(&h.server_name());
        }
    }
    let container = match start_main_container_with("SCADA", &args.listen, ContainerConfig::default()).await {
        Ok(c) => c,
        Err(e) => {
            devices.stop_all();
            return Err(e.into());
        }
    };
    println!("platform SCADA listening on {}", container.listen_address());
    let host_args = HostArgs { duration: args.duration, ..HostArgs::default() };
    let specs = demo_specs(args.with_salvage, &args.gateway_host);
    register_kinds(&container, &devices);
    let session = container.start_capture(None)?;
    let spawned = spawn_all(&container, &specs).await;
    if spawned.is_ok() {
        println!("ready");
        wait_for_stop(host_args.duration).await;
    }
    container.shutdown().await;
    devices.stop_all();
    write_trace(&session, &args.trace_dir, "demo")?;
    spawned
}
