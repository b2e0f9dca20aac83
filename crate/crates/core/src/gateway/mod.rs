//! Gateway between the base station's telemetry and external clients.
//!
//! The gateway follows a [`LogSource`], evaluates alert rules on every new
//! round, and publishes an immutable [`GatewayView`]. Sessions answer from
//! whichever view was current when the request arrived, so a reply never
//! mixes two rounds.

pub mod alerts;
pub mod protocol;
mod server;

use std::sync::mpsc::{Receiver, TryRecvError};
use std::sync::{Arc, Mutex, RwLock};

use log::{debug, warn};
use thiserror::Error;

use crate::basestation::{Snapshot, TelemetryError, TelemetryTail};
use crate::topology::{NodeId, TreeTopology};

pub use alerts::{evaluate_alerts, Alert, AlertError, AlertRule, AlertState, Comparator, Severity};
pub use protocol::{handle_request, ErrorCode, GatewayView, Request, DEFAULT_PORT};
pub use server::{serve, ServiceHandle};

#[derive(Debug, Error)]
pub enum GatewayError {
    #[error("cannot bind {addr}: {source}")]
    BindFailure {
        addr: String,
        #[source]
        source: std::io::Error,
    },
    #[error(transparent)]
    Rules(#[from] AlertError),
    #[error("log source failed: {0}")]
    Source(#[from] TelemetryError),
    #[error("log node list {found} does not match topology {expected}")]
    TopologyMismatch { expected: String, found: String },
}

/// Where the gateway gets completed rounds from.
pub trait LogSource: Send {
    /// Rounds completed since the previous call, in order.
    fn poll(&mut self) -> Result<Vec<Snapshot>, TelemetryError>;

    /// Node list declared by the source, once known.
    fn nodes(&self) -> Option<Vec<NodeId>> {
        None
    }
}

impl LogSource for TelemetryTail {
    fn poll(&mut self) -> Result<Vec<Snapshot>, TelemetryError> {
        TelemetryTail::poll(self)
    }

    fn nodes(&self) -> Option<Vec<NodeId>> {
        TelemetryTail::nodes(self).map(<[NodeId]>::to_vec)
    }
}

impl LogSource for Receiver<Snapshot> {
    fn poll(&mut self) -> Result<Vec<Snapshot>, TelemetryError> {
        let mut out = Vec::new();
        loop {
            match self.try_recv() {
                Ok(s) => out.push(s),
                Err(TryRecvError::Empty | TryRecvError::Disconnected) => return Ok(out),
            }
        }
    }
}

pub struct Gateway {
    fingerprint: String,
    source: Mutex<Box<dyn LogSource>>,
    view: RwLock<Arc<GatewayView>>,
}

impl Gateway {
    pub fn new(
        topology: TreeTopology,
        rules: Vec<AlertRule>,
        source: Box<dyn LogSource>,
    ) -> Result<Self, GatewayError> {
        alerts::validate_rules(&rules)?;
        Ok(Gateway {
            fingerprint: topology.fingerprint(),
            source: Mutex::new(source),
            view: RwLock::new(Arc::new(GatewayView {
                topology,
                rules,
                latest: None,
                alerts: AlertState::default(),
            })),
        })
    }

    /// Pulls new rounds from the source and publishes the resulting view.
    /// Rounds are applied one at a time, in order, under the source lock.
    /// Returns the alerts fired by the new rounds.
    pub fn refresh(&self) -> Result<Vec<Alert>, GatewayError> {
        let mut source = self.source.lock().unwrap_or_else(|e| e.into_inner());
        let fresh = source.poll()?;
        if let Some(nodes) = source.nodes() {
            let found = nodes.iter().map(NodeId::as_str).collect::<Vec<_>>().join(",");
            if found != self.fingerprint {
                return Err(GatewayError::TopologyMismatch {
                    expected: self.fingerprint.clone(),
                    found,
                });
            }
        }
        let mut fired_all = Vec::new();
        for snapshot in fresh {
            let current = self.view();
            if let Some(prev) = &current.latest {
                if snapshot.round <= prev.round {
                    warn!("ignoring stale round {} (have {})", snapshot.round, prev.round);
                    continue;
                }
            }
            let nodes: Vec<&str> = snapshot.readings.iter().map(|r| r.node.as_str()).collect();
            if nodes.join(",") != self.fingerprint {
                return Err(GatewayError::TopologyMismatch {
                    expected: self.fingerprint.clone(),
                    found: nodes.join(","),
                });
            }
            let (alerts, fired) = evaluate_alerts(&current.rules, &snapshot, &current.alerts);
            for alert in &fired {
                warn!("alert {}", alert.line());
            }
            debug!("gateway now at round {}", snapshot.round);
            let next = GatewayView {
                topology: current.topology.clone(),
                rules: current.rules.clone(),
                latest: Some(snapshot),
                alerts,
            };
            *self.view.write().unwrap_or_else(|e| e.into_inner()) = Arc::new(next);
            fired_all.extend(fired);
        }
        Ok(fired_all)
    }

    pub fn view(&self) -> Arc<GatewayView> {
        self.view.read().unwrap_or_else(|e| e.into_inner()).clone()
    }

    /// Answers one raw request line, refreshing first.
    pub fn respond(&self, line: &str) -> String {
        if let Err(e) = self.refresh() {
            warn!("refresh failed: {e}");
        }
        match Request::parse(line) {
            Ok(request) => handle_request(&self.view(), &request),
            Err(code) => code.response(),
        }
    }
}
