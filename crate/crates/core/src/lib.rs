//! Simulator and gateway for a tree-topology wireless sensor network.
//!
//! A base station polls cluster heads, cluster heads poll their leaflets,
//! and readings flow back up once per collection round. The base station
//! appends each round to a telemetry log; the gateway follows that log,
//! evaluates threshold alerts, and answers client queries over a line
//! protocol.
//!
//! - [`topology`]: tree structure, routing, per-round message cost.
//! - [`environment`]: ground-truth fields and bounded-error sensors.
//! - [`netsim`]: discrete-event collection rounds with link failures.
//! - [`basestation`]: snapshots and the telemetry log format.
//! - [`gateway`]: alerting, wire protocol, TCP service.
//! - [`config`]: the run configuration file.
//! - [`plot`]: per-node series export.

pub mod basestation;
pub mod config;
pub mod environment;
pub mod gateway;
pub mod netsim;
pub mod plot;
mod rng;
pub mod topology;

pub use basestation::{
    format_record, parse_record, parse_telemetry, ParsedTelemetry, PartialRound, Snapshot, TelemetryError,
    TelemetryLog, TelemetryTail, TelemetryWriter,
};
pub use config::{parse_run_config, parse_topology, ConfigError, RunConfig};
pub use environment::{Channel, ChannelField, Drift, EnvField, SensorSpec};
pub use gateway::{Alert, AlertRule, AlertState, Gateway, GatewayError, LogSource, Request};
pub use netsim::{
    run_round, run_simulation, EventKind, LinkSet, Outage, Reading, ReadingStatus, Sample, Sensors, SimConfig,
    SimError, SimEvent, SimSummary,
};
pub use plot::PlotSeries;
pub use topology::{Cluster, Link, NodeId, NodeRole, RadioSpec, TopologyError, TreeTopology};
