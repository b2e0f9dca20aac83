//! TCP front end: one thread per client session.

use std::io::{self, BufRead, BufReader, Read, Write};
use std::net::{SocketAddr, TcpListener, TcpStream, ToSocketAddrs};
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::Arc;
use std::thread::{self, JoinHandle};
use std::time::Duration;

use log::{debug, info, warn};

use super::protocol::ErrorCode;
use super::{Gateway, GatewayError};

const MAX_LINE: u64 = 4096;
const REFRESH_INTERVAL: Duration = Duration::from_millis(100);

#[derive(Debug)]
pub struct ServiceHandle {
    addr: SocketAddr,
    stop: Arc<AtomicBool>,
    acceptor: Option<JoinHandle<()>>,
    refresher: Option<JoinHandle<()>>,
}

impl ServiceHandle {
    pub fn local_addr(&self) -> SocketAddr {
        self.addr
    }

    /// Stops accepting new sessions. Open sessions run until their client
    /// disconnects.
    pub fn shutdown(mut self) {
        self.stop_threads();
    }

    /// Blocks until the service stops.
    pub fn wait(mut self) {
        if let Some(h) = self.acceptor.take() {
            let _ = h.join();
        }
    }

    fn stop_threads(&mut self) {
        self.stop.store(true, Ordering::SeqCst);
        // Wake the blocking accept.
        let _ = TcpStream::connect(self.addr);
        if let Some(h) = self.acceptor.take() {
            let _ = h.join();
        }
        if let Some(h) = self.refresher.take() {
            let _ = h.join();
        }
    }
}

impl Drop for ServiceHandle {
    fn drop(&mut self) {
        if self.acceptor.is_some() {
            self.stop_threads();
        }
    }
}

/// Binds `addr` and serves `gateway` until the handle is shut down.
pub fn serve(gateway: Arc<Gateway>, addr: impl ToSocketAddrs + std::fmt::Debug) -> Result<ServiceHandle, GatewayError> {
    let listener = TcpListener::bind(&addr).map_err(|source| GatewayError::BindFailure {
        addr: format!("{addr:?}"),
        source,
    })?;
    let local = listener.local_addr().map_err(|source| GatewayError::BindFailure {
        addr: format!("{addr:?}"),
        source,
    })?;
    info!("gateway listening on {local}");
    let stop = Arc::new(AtomicBool::new(false));

    let refresher = {
        let gateway = gateway.clone();
        let stop = stop.clone();
        thread::spawn(move || {
            while !stop.load(Ordering::SeqCst) {
                if let Err(e) = gateway.refresh() {
                    warn!("refresh failed: {e}");
                }
                thread::sleep(REFRESH_INTERVAL);
            }
        })
    };

    let acceptor = {
        let stop = stop.clone();
        thread::spawn(move || {
            for conn in listener.incoming() {
                if stop.load(Ordering::SeqCst) {
                    break;
                }
                match conn {
                    Ok(stream) => {
                        let gateway = gateway.clone();
                        thread::spawn(move || {
                            let peer = stream.peer_addr().ok();
                            if let Err(e) = session(&gateway, stream) {
                                debug!("session {peer:?} ended: {e}");
                            }
                        });
                    }
                    Err(e) => warn!("accept failed: {e}"),
                }
            }
        })
    };

    Ok(ServiceHandle {
        addr: local,
        stop,
        acceptor: Some(acceptor),
        refresher: Some(refresher),
    })
}

fn session(gateway: &Gateway, stream: TcpStream) -> io::Result<()> {
    let mut writer = stream.try_clone()?;
    let mut reader = BufReader::new(stream);
    let mut buf = Vec::new();
    loop {
        buf.clear();
        let n = reader.by_ref().take(MAX_LINE).read_until(b'\n', &mut buf)?;
        if n == 0 {
            return Ok(());
        }
        let response = if buf.last() != Some(&b'\n') {
            if n as u64 == MAX_LINE {
                // Discard the rest of an overlong line.
                let mut sink = Vec::new();
                reader.read_until(b'\n', &mut sink)?;
                ErrorCode::BadRequest.response()
            } else {
                // EOF without newline: answer what we got, then close.
                respond_bytes(gateway, &buf)
            }
        } else {
            respond_bytes(gateway, &buf)
        };
        writer.write_all(response.as_bytes())?;
    }
}

fn respond_bytes(gateway: &Gateway, line: &[u8]) -> String {
    match std::str::from_utf8(line) {
        Ok(text) => gateway.respond(text),
        Err(_) => ErrorCode::BadRequest.response(),
    }
}
