//! Implementation of the `wsn` subcommands.
//!
//! Each command takes its output streams as arguments and returns the
//! process exit code, so the binary is a thin wrapper and tests can drive
//! the commands in-process.

use std::fs;
use std::io::{self, Read, Write};
use std::net::{TcpStream, ToSocketAddrs};
use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::thread;
use std::time::Duration;

use thiserror::Error;
use wsn_core::basestation::write_latest;
use wsn_core::gateway::protocol::response_complete;
use wsn_core::gateway::{serve, ServiceHandle};
use wsn_core::{
    parse_run_config, parse_telemetry, run_simulation, Channel, ConfigError, Gateway, GatewayError, NodeId,
    PlotSeries, RunConfig, SimError, SimEvent, Snapshot, TelemetryError, TelemetryTail, TelemetryWriter,
};

pub const EXIT_OK: i32 = 0;
pub const EXIT_CONFIG: i32 = 1;
pub const EXIT_RUNTIME: i32 = 2;
pub const EXIT_SERVER_ERR: i32 = 3;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("cannot read {path}: {source}")]
    ReadConfig { path: PathBuf, source: io::Error },
    #[error("{path}: {source}")]
    Config { path: PathBuf, source: ConfigError },
    #[error(transparent)]
    Telemetry(#[from] TelemetryError),
    #[error(transparent)]
    Sim(#[from] SimError),
    #[error(transparent)]
    Gateway(#[from] GatewayError),
    #[error("{context}: {source}")]
    Io { context: String, source: io::Error },
    #[error("unknown node {0}")]
    UnknownNode(String),
    #[error("unknown channel {0}")]
    UnknownChannel(String),
    #[error("malformed log: {0}")]
    MalformedLog(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::ReadConfig { .. }
            | CliError::Config { .. }
            | CliError::UnknownNode(_)
            | CliError::UnknownChannel(_) => EXIT_CONFIG,
            _ => EXIT_RUNTIME,
        }
    }
}

fn io_err(context: impl Into<String>) -> impl FnOnce(io::Error) -> CliError {
    let context = context.into();
    move |source| CliError::Io { context, source }
}

pub fn load_config(path: &Path) -> Result<RunConfig, CliError> {
    let text = fs::read_to_string(path).map_err(|source| CliError::ReadConfig {
        path: path.to_path_buf(),
        source,
    })?;
    parse_run_config(&text).map_err(|source| CliError::Config {
        path: path.to_path_buf(),
        source,
    })
}

#[derive(Debug, Clone, Default)]
pub struct RunOptions {
    pub config: PathBuf,
    pub out: PathBuf,
    /// Bind address for the gateway; `None` runs without serving.
    pub serve: Option<String>,
    pub rewrite_latest: Option<PathBuf>,
    pub trace: Option<PathBuf>,
    /// Wall-clock pause after each round.
    pub pace: Duration,
    pub fsync: bool,
}

/// Started gateway of a live run.
pub struct LiveRun {
    pub handle: ServiceHandle,
}

/// Runs the simulation to completion. With `serve`, the gateway is started
/// first and its handle returned so the caller decides how long to keep it.
pub fn execute_run(opts: &RunOptions, stderr: &mut dyn Write) -> Result<Option<LiveRun>, CliError> {
    let cfg = load_config(&opts.config)?;
    let sim = &cfg.sim;
    let mut writer = TelemetryWriter::create(&opts.out, &sim.topology)?.with_sync(opts.fsync);
    let nodes: Vec<NodeId> = sim.topology.sensing_nodes().cloned().collect();

    let live = match &opts.serve {
        Some(addr) => {
            let gateway = Gateway::new(sim.topology.clone(), cfg.rules.clone(), Box::new(TelemetryTail::new(&opts.out)))?;
            let handle = serve(Arc::new(gateway), addr.as_str())?;
            let _ = writeln!(stderr, "gateway listening on {}", handle.local_addr());
            Some(LiveRun { handle })
        }
        None => None,
    };

    let mut trace = match &opts.trace {
        Some(path) => Some(io::BufWriter::new(
            fs::File::create(path).map_err(io_err(format!("cannot create {}", path.display())))?,
        )),
        None => None,
    };

    let mut sink = |snapshot: &Snapshot, events: &[SimEvent]| -> Result<(), wsn_core::netsim::SinkError> {
        writer.append(snapshot)?;
        if let Some(path) = &opts.rewrite_latest {
            write_latest(path, &nodes, snapshot)?;
        }
        if let Some(out) = trace.as_mut() {
            for e in events {
                writeln!(out, "{}", e.trace_line())?;
            }
        }
        if !opts.pace.is_zero() {
            thread::sleep(opts.pace);
        }
        Ok(())
    };
    let summary = run_simulation(sim, &mut sink)?;
    if let Some(mut out) = trace {
        out.flush().map_err(io_err("cannot write trace"))?;
    }
    let _ = writeln!(
        stderr,
        "rounds {} messages {} dropped {}",
        summary.rounds_run, summary.messages_sent, summary.messages_dropped
    );
    Ok(live)
}

/// `wsn run`: with a bind address, keeps serving after the simulation ends.
pub fn cmd_run(opts: &RunOptions, stderr: &mut dyn Write) -> i32 {
    match execute_run(opts, stderr) {
        Ok(None) => EXIT_OK,
        Ok(Some(live)) => {
            let _ = writeln!(stderr, "simulation finished, still serving");
            live.handle.wait();
            EXIT_OK
        }
        Err(e) => {
            let _ = writeln!(stderr, "error: {e}");
            e.exit_code()
        }
    }
}

/// Sends one request and returns the raw reply.
pub fn fetch(addr: &str, request: &str, timeout: Duration) -> io::Result<String> {
    let target = addr
        .to_socket_addrs()?
        .next()
        .ok_or_else(|| io::Error::new(io::ErrorKind::NotFound, format!("cannot resolve {addr}")))?;
    let mut stream = TcpStream::connect_timeout(&target, timeout)?;
    stream.set_read_timeout(Some(timeout))?;
    stream.write_all(format!("{request}\n").as_bytes())?;
    let mut reply = String::new();
    let mut buf = [0u8; 4096];
    while !response_complete(&reply) {
        let n = stream.read(&mut buf)?;
        if n == 0 {
            return Err(io::Error::new(io::ErrorKind::UnexpectedEof, "connection closed mid-response"));
        }
        reply.push_str(&String::from_utf8_lossy(&buf[..n]));
    }
    Ok(reply)
}

/// `wsn fetch`: prints the reply. Exit 3 on an `ERR` reply, 2 when the
/// gateway cannot be reached.
pub fn cmd_fetch(host: &str, port: u16, words: &[String], stdout: &mut dyn Write, stderr: &mut dyn Write) -> i32 {
    let request = words.join(" ");
    match fetch(&format!("{host}:{port}"), &request, Duration::from_secs(10)) {
        Ok(reply) => {
            let _ = stdout.write_all(reply.as_bytes());
            if reply.starts_with("ERR") {
                EXIT_SERVER_ERR
            } else {
                EXIT_OK
            }
        }
        Err(e) => {
            let _ = writeln!(stderr, "error: cannot reach {host}:{port}: {e}");
            EXIT_RUNTIME
        }
    }
}

pub fn plot_data(telemetry: &Path, node: &str, channel: &str, stderr: &mut dyn Write) -> Result<String, CliError> {
    let bytes = fs::read(telemetry).map_err(io_err(format!("cannot read {}", telemetry.display())))?;
    let parsed = parse_telemetry(&bytes).map_err(|e| CliError::MalformedLog(e.to_string()))?;
    if let Some(partial) = &parsed.partial {
        let _ = writeln!(
            stderr,
            "warning: ignoring partial round at line {} ({} records)",
            partial.line, partial.records
        );
    }
    let node = NodeId::new(node).map_err(|_| CliError::UnknownNode(node.to_string()))?;
    let channel: Channel = channel
        .parse()
        .map_err(|_| CliError::UnknownChannel(channel.to_string()))?;
    let series = PlotSeries::extract(&parsed.snapshots, &parsed.nodes, &node, channel).map_err(|e| match e {
        wsn_core::plot::PlotError::UnknownNode(n) => CliError::UnknownNode(n),
        wsn_core::plot::PlotError::UnknownChannel(c) => CliError::UnknownChannel(c),
    })?;
    Ok(series.to_csv())
}

/// `wsn plotdata`: `round,value` CSV on stdout.
pub fn cmd_plotdata(telemetry: &Path, node: &str, channel: &str, stdout: &mut dyn Write, stderr: &mut dyn Write) -> i32 {
    match plot_data(telemetry, node, channel, stderr) {
        Ok(csv) => {
            if let Err(e) = stdout.write_all(csv.as_bytes()) {
                let _ = writeln!(stderr, "error: {e}");
                return EXIT_RUNTIME;
            }
            EXIT_OK
        }
        Err(e) => {
            let _ = writeln!(stderr, "error: {e}");
            e.exit_code()
        }
    }
}
