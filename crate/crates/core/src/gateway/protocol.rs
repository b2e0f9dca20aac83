//! Line protocol spoken between the gateway and its clients.
//!
//! One request per LF-terminated line. Replies are either a single line
//! (`PONG`, `ERR <code>`) or a `BEGIN ... END` envelope whose record lines
//! use the telemetry record grammar.

use std::fmt;

use crate::basestation::{format_record, Snapshot};
use crate::topology::{NodeId, NodeRole, TreeTopology};

use super::alerts::{AlertRule, AlertState};

pub const DEFAULT_PORT: u16 = 7070;

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Request {
    Snapshot,
    Node(String),
    Cluster(String),
    Alerts,
    Ping,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorCode {
    UnknownNode,
    NotAClusterHead,
    BadRequest,
    NoData,
}

impl ErrorCode {
    pub fn as_str(self) -> &'static str {
        match self {
            ErrorCode::UnknownNode => "UNKNOWN_NODE",
            ErrorCode::NotAClusterHead => "NOT_A_CLUSTER_HEAD",
            ErrorCode::BadRequest => "BAD_REQUEST",
            ErrorCode::NoData => "NO_DATA",
        }
    }

    pub fn response(self) -> String {
        format!("ERR {}\n", self.as_str())
    }
}

impl fmt::Display for ErrorCode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl Request {
    /// Parses one request line (trailing `\n` / `\r\n` tolerated).
    pub fn parse(line: &str) -> Result<Request, ErrorCode> {
        let line = line.strip_suffix('\n').unwrap_or(line);
        let line = line.strip_suffix('\r').unwrap_or(line);
        let parts: Vec<&str> = line.split(' ').collect();
        match parts.as_slice() {
            ["SNAPSHOT"] => Ok(Request::Snapshot),
            ["ALERTS"] => Ok(Request::Alerts),
            ["PING"] => Ok(Request::Ping),
            ["NODE", id] if !id.is_empty() => Ok(Request::Node(id.to_string())),
            ["CLUSTER", id] if !id.is_empty() => Ok(Request::Cluster(id.to_string())),
            _ => Err(ErrorCode::BadRequest),
        }
    }

    pub fn to_line(&self) -> String {
        match self {
            Request::Snapshot => "SNAPSHOT".into(),
            Request::Node(id) => format!("NODE {id}"),
            Request::Cluster(id) => format!("CLUSTER {id}"),
            Request::Alerts => "ALERTS".into(),
            Request::Ping => "PING".into(),
        }
    }
}

/// An immutable picture of what the gateway knows after some round.
#[derive(Debug, Clone)]
pub struct GatewayView {
    pub topology: TreeTopology,
    pub rules: Vec<AlertRule>,
    pub latest: Option<Snapshot>,
    pub alerts: AlertState,
}

fn envelope<'a>(round: u64, readings: impl Iterator<Item = &'a crate::netsim::Reading>) -> String {
    let lines: Vec<String> = readings.map(format_record).collect();
    let mut out = format!("BEGIN {round} {}\n", lines.len());
    for line in lines {
        out.push_str(&line);
        out.push('\n');
    }
    out.push_str("END\n");
    out
}

fn lookup(topology: &TreeTopology, label: &str) -> Result<(NodeId, NodeRole), ErrorCode> {
    let id = NodeId::new(label).map_err(|_| ErrorCode::UnknownNode)?;
    match topology.role(&id) {
        None | Some(NodeRole::BaseStation) => Err(ErrorCode::UnknownNode),
        Some(role) => Ok((id, role)),
    }
}

/// Builds the full response for `request` from `view`.
pub fn handle_request(view: &GatewayView, request: &Request) -> String {
    respond(view, request).unwrap_or_else(ErrorCode::response)
}

fn respond(view: &GatewayView, request: &Request) -> Result<String, ErrorCode> {
    match request {
        Request::Ping => Ok("PONG\n".into()),
        Request::Snapshot => {
            let latest = view.latest.as_ref().ok_or(ErrorCode::NoData)?;
            Ok(envelope(latest.round, latest.readings.iter()))
        }
        Request::Node(label) => {
            let (id, _) = lookup(&view.topology, label)?;
            let latest = view.latest.as_ref().ok_or(ErrorCode::NoData)?;
            Ok(envelope(latest.round, latest.reading(&id).into_iter()))
        }
        Request::Cluster(label) => {
            let (id, role) = lookup(&view.topology, label)?;
            if role != NodeRole::ClusterHead {
                return Err(ErrorCode::NotAClusterHead);
            }
            let latest = view.latest.as_ref().ok_or(ErrorCode::NoData)?;
            let cluster = view.topology.cluster(&id).expect("role checked");
            let members: Vec<&NodeId> = std::iter::once(&cluster.head).chain(&cluster.leaflets).collect();
            Ok(envelope(
                latest.round,
                latest.readings.iter().filter(|r| members.contains(&&r.node)),
            ))
        }
        Request::Alerts => {
            let latest = view.latest.as_ref().ok_or(ErrorCode::NoData)?;
            let nodes: Vec<NodeId> = latest.readings.iter().map(|r| r.node.clone()).collect();
            let lines: Vec<String> = view.alerts.ordered(&view.rules, &nodes).map(|a| a.line()).collect();
            let mut out = format!("BEGIN ALERTS {}\n", lines.len());
            for line in lines {
                out.push_str(&line);
                out.push('\n');
            }
            out.push_str("END\n");
            Ok(out)
        }
    }
}

/// True once `buf` holds a complete reply.
pub fn response_complete(buf: &str) -> bool {
    let Some(first) = buf.lines().next() else {
        return false;
    };
    if !buf.ends_with('\n') {
        return false;
    }
    if first.starts_with("BEGIN ") {
        buf.ends_with("\nEND\n")
    } else {
        true
    }
}
