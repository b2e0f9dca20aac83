//! Helpers shared by the CLI test targets.
#![allow(dead_code)]

use std::io::{BufRead, BufReader};
use std::net::SocketAddr;
use std::path::{Path, PathBuf};
use std::process::{Child, Command, Output, Stdio};
use std::sync::mpsc;
use std::thread;
use std::time::Duration;

pub const LAB_CONFIG: &str = "\
radio 30 0.0
cluster N1 1.1 1.2
cluster N2 2.1 2.2
seed 1
env TEMP_C 25.0 walk 0.05
env LIGHT_RAW 512 walk 2
rounds 100
";

pub fn wsn() -> Command {
    Command::new(env!("CARGO_BIN_EXE_wsn"))
}

pub fn write(dir: &Path, name: &str, contents: &str) -> PathBuf {
    let path = dir.join(name);
    std::fs::write(&path, contents).unwrap();
    path
}

pub fn run_wsn(args: &[&str]) -> Output {
    wsn().args(args).output().expect("spawn wsn")
}

/// A `wsn run --serve` child process. Killed on drop.
pub struct LiveServer {
    pub child: Child,
    pub addr: SocketAddr,
    pub stderr_lines: mpsc::Receiver<String>,
}

impl LiveServer {
    pub fn start(config: &Path, out: &Path, pace_ms: u64) -> LiveServer {
        let mut child = wsn()
            .arg("run")
            .arg(config)
            .arg("--out")
            .arg(out)
            .args(["--serve", "--port", "0", "--pace-ms", &pace_ms.to_string()])
            .stdout(Stdio::null())
            .stderr(Stdio::piped())
            .spawn()
            .expect("spawn wsn run");
        let stderr = child.stderr.take().unwrap();
        let (tx, rx) = mpsc::channel();
        thread::spawn(move || {
            for line in BufReader::new(stderr).lines().map_while(Result::ok) {
                if tx.send(line).is_err() {
                    break;
                }
            }
        });
        let addr = loop {
            let line = rx
                .recv_timeout(Duration::from_secs(10))
                .expect("server did not report its address");
            if let Some(addr) = line.strip_prefix("gateway listening on ") {
                break addr.parse().unwrap();
            }
        };
        LiveServer {
            child,
            addr,
            stderr_lines: rx,
        }
    }

    /// Blocks until the simulation part of the run has finished.
    pub fn wait_for_simulation(&self, timeout: Duration) -> bool {
        let deadline = std::time::Instant::now() + timeout;
        while let Some(left) = deadline.checked_duration_since(std::time::Instant::now()) {
            match self.stderr_lines.recv_timeout(left) {
                Ok(line) if line.contains("still serving") => return true,
                Ok(_) => continue,
                Err(_) => return false,
            }
        }
        false
    }
}

impl Drop for LiveServer {
    fn drop(&mut self) {
        let _ = self.child.kill();
        let _ = self.child.wait();
    }
}
