use std::io;
use std::path::PathBuf;
use std::process::ExitCode;
use std::time::Duration;

use clap::{Parser, Subcommand};
use wsn_cli::{cmd_fetch, cmd_plotdata, cmd_run, RunOptions};
use wsn_core::gateway::DEFAULT_PORT;

#[derive(Parser)]
#[command(name = "wsn", version, about = "Tree-topology sensor network simulator and gateway")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a simulation, writing the telemetry log
    Run {
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Serve the growing log to clients and keep serving afterwards
        #[arg(long)]
        serve: bool,
        #[arg(long, default_value_t = DEFAULT_PORT)]
        port: u16,
        #[arg(long, default_value = "127.0.0.1")]
        host: String,
        /// Also keep a file holding only the newest round
        #[arg(long)]
        rewrite_latest: Option<PathBuf>,
        /// Write the event trace here
        #[arg(long)]
        trace: Option<PathBuf>,
        /// Wall-clock milliseconds to wait after each round
        #[arg(long, default_value_t = 0)]
        pace_ms: u64,
        /// fdatasync the log after every round
        #[arg(long)]
        fsync: bool,
    },
    /// Send one request to a gateway and print the reply
    Fetch {
        #[arg(long, default_value = "127.0.0.1")]
        host: String,
        #[arg(long, default_value_t = DEFAULT_PORT)]
        port: u16,
        /// SNAPSHOT | NODE <id> | CLUSTER <head_id> | ALERTS | PING
        #[arg(required = true, num_args = 1..)]
        request: Vec<String>,
    },
    /// Print one node's channel from a telemetry log as round,value CSV
    Plotdata {
        telemetry: PathBuf,
        #[arg(long)]
        node: String,
        #[arg(long)]
        channel: String,
    },
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let mut stdout = io::stdout().lock();
    let mut stderr = io::stderr();
    let code = match cli.command {
        Command::Run {
            config,
            out,
            serve,
            port,
            host,
            rewrite_latest,
            trace,
            pace_ms,
            fsync,
        } => {
            let opts = RunOptions {
                config,
                out,
                serve: serve.then(|| format!("{host}:{port}")),
                rewrite_latest,
                trace,
                pace: Duration::from_millis(pace_ms),
                fsync,
            };
            cmd_run(&opts, &mut stderr)
        }
        Command::Fetch { host, port, request } => cmd_fetch(&host, port, &request, &mut stdout, &mut stderr),
        Command::Plotdata {
            telemetry,
            node,
            channel,
        } => cmd_plotdata(&telemetry, &node, &channel, &mut stdout, &mut stderr),
    };
    ExitCode::from(code as u8)
}
