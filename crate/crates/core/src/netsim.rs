//! Discrete-event simulation of polled collection rounds.
//!
//! Each round the base station interrupt-calls every cluster head, each head
//! interrupt-calls its leaflets, leaflets reply to their head, and the head
//! forwards its own reading plus its leaflets' readings to the base station.
//! Any message may be lost. Lost data is recorded as a NULL reading, never
//! retried and never replaced by stale values.
//!
//! Timing within a round starting at `t0` with hop latency `h`:
//!
//! ```text
//! t0+h   poll BS -> head arrives, head polls its leaflets
//! t0+2h  poll head -> leaflet arrives, leaflet replies
//! t0+3h  leaflet data arrives; head collects and forwards
//! t0+4h  head data arrives at BS
//! ```
//!
//! Events are ordered by (delivery time, emission sequence).

use std::cmp::Reverse;
use std::collections::{BTreeMap, BTreeSet, BinaryHeap};
use std::fmt;
use std::ops::RangeInclusive;

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::basestation::Snapshot;
use crate::environment::{Channel, EnvError, EnvField, SensorSpec};
use crate::rng::{self, Purpose};
use crate::topology::{Link, NodeId, TreeTopology};

pub const DEFAULT_ROUND_PERIOD_MS: u64 = 1000;
pub const DEFAULT_HOP_LATENCY_MS: u64 = 10;

pub type SinkError = Box<dyn std::error::Error + Send + Sync>;

#[derive(Debug, Error)]
pub enum SimError {
    #[error("round {round} out of range (run has {rounds} rounds)")]
    RoundOutOfRange { round: u64, rounds: u64 },
    #[error("{from}-{to} is not a tree link")]
    NotALink { from: String, to: String },
    #[error("invalid simulation config: {0}")]
    InvalidConfig(String),
    #[error(transparent)]
    Env(#[from] EnvError),
    #[error("sink failed at round {round}: {source}")]
    Sink { round: u64, source: SinkError },
}

/// One channel of a reading.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Sample {
    Value(f64),
    Null,
    NotEquipped,
}

impl Sample {
    pub fn value(self) -> Option<f64> {
        match self {
            Sample::Value(v) => Some(v),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ReadingStatus {
    Ok,
    Null,
}

impl ReadingStatus {
    pub fn as_str(self) -> &'static str {
        match self {
            ReadingStatus::Ok => "OK",
            ReadingStatus::Null => "NULL",
        }
    }
}

/// One node's sensed values for one round.
///
/// Temperature and light are always equipped. A gas channel is either
/// equipped (value or NULL) or [`Sample::NotEquipped`].
#[derive(Debug, Clone, PartialEq)]
pub struct Reading {
    pub node: NodeId,
    pub round: u64,
    pub time_ms: u64,
    pub temp_c: Option<f64>,
    pub light_raw: Option<f64>,
    /// CH4, CO, O2 in that order.
    pub gases: [Sample; 3],
    pub status: ReadingStatus,
}

impl Reading {
    /// A lost reading: every equipped channel NULL.
    pub fn null(node: NodeId, round: u64, time_ms: u64, sensors: &Sensors) -> Self {
        let gas = |c: Channel| {
            if sensors.is_equipped(c) {
                Sample::Null
            } else {
                Sample::NotEquipped
            }
        };
        Reading {
            node,
            round,
            time_ms,
            temp_c: None,
            light_raw: None,
            gases: [gas(Channel::Ch4Ppm), gas(Channel::CoPpm), gas(Channel::O2Pct)],
            status: ReadingStatus::Null,
        }
    }

    pub fn sample(&self, channel: Channel) -> Sample {
        let opt = |v: Option<f64>| v.map_or(Sample::Null, Sample::Value);
        match channel {
            Channel::TempC => opt(self.temp_c),
            Channel::LightRaw => opt(self.light_raw),
            Channel::Ch4Ppm => self.gases[0],
            Channel::CoPpm => self.gases[1],
            Channel::O2Pct => self.gases[2],
        }
    }

    pub fn is_ok(&self) -> bool {
        self.status == ReadingStatus::Ok
    }
}

/// Equipped sensor channels. Temperature and light are always present.
#[derive(Debug, Clone, PartialEq)]
pub struct Sensors {
    specs: BTreeMap<Channel, SensorSpec>,
}

impl Default for Sensors {
    fn default() -> Self {
        Sensors::new(
            SensorSpec::default_for(Channel::TempC),
            SensorSpec::default_for(Channel::LightRaw),
        )
    }
}

impl Sensors {
    pub fn new(temp: SensorSpec, light: SensorSpec) -> Self {
        assert_eq!(temp.channel(), Channel::TempC);
        assert_eq!(light.channel(), Channel::LightRaw);
        Sensors {
            specs: BTreeMap::from([(Channel::TempC, temp), (Channel::LightRaw, light)]),
        }
    }

    /// Adds or replaces a channel's spec. Replacing temperature or light is
    /// allowed, removing them is not.
    pub fn equip(&mut self, spec: SensorSpec) {
        self.specs.insert(spec.channel(), spec);
    }

    pub fn with(mut self, spec: SensorSpec) -> Self {
        self.equip(spec);
        self
    }

    pub fn is_equipped(&self, channel: Channel) -> bool {
        self.specs.contains_key(&channel)
    }

    pub fn spec(&self, channel: Channel) -> Option<&SensorSpec> {
        self.specs.get(&channel)
    }

    pub fn iter(&self) -> impl Iterator<Item = &SensorSpec> {
        self.specs.values()
    }
}

/// A link forced down for an inclusive range of rounds.
#[derive(Debug, Clone, PartialEq)]
pub struct Outage {
    pub link: Link,
    pub rounds: RangeInclusive<u64>,
}

pub type LinkSet = BTreeSet<Link>;

#[derive(Debug, Clone, PartialEq)]
pub struct SimConfig {
    pub topology: TreeTopology,
    pub field: EnvField,
    pub sensors: Sensors,
    pub rounds: u64,
    pub round_period_ms: u64,
    pub hop_latency_ms: u64,
    pub seed: u64,
    pub outages: Vec<Outage>,
}

impl SimConfig {
    pub fn new(topology: TreeTopology, field: EnvField, sensors: Sensors, rounds: u64) -> Self {
        let seed = field.seed();
        SimConfig {
            topology,
            field,
            sensors,
            rounds,
            round_period_ms: DEFAULT_ROUND_PERIOD_MS,
            hop_latency_ms: DEFAULT_HOP_LATENCY_MS,
            seed,
            outages: Vec::new(),
        }
    }

    pub fn validate(&self) -> Result<(), SimError> {
        let bad = |msg: String| Err(SimError::InvalidConfig(msg));
        if self.rounds < 1 {
            return bad("rounds must be at least 1".into());
        }
        if self.round_period_ms == 0 {
            return bad("round period must be positive".into());
        }
        if self.round_period_ms < self.hop_latency_ms.saturating_mul(4) {
            return bad(format!(
                "round period {} ms is shorter than four hops of {} ms",
                self.round_period_ms, self.hop_latency_ms
            ));
        }
        for spec in self.sensors.iter() {
            if !self.field.has_channel(spec.channel()) {
                return bad(format!("no environment field for equipped channel {}", spec.channel()));
            }
        }
        for outage in &self.outages {
            if self
                .topology
                .link_between(&outage.link.parent, &outage.link.child)
                .is_none()
            {
                return Err(SimError::NotALink {
                    from: outage.link.parent.to_string(),
                    to: outage.link.child.to_string(),
                });
            }
        }
        Ok(())
    }

    pub fn round_start_ms(&self, round: u64) -> u64 {
        round * self.round_period_ms
    }

    /// Links scripted down during `round`.
    pub fn scheduled_outages(&self, round: u64) -> LinkSet {
        self.outages
            .iter()
            .filter(|o| o.rounds.contains(&round))
            .map(|o| o.link.clone())
            .collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EventKind {
    InterruptCall,
    DataMsg,
    LinkDrop,
}

impl EventKind {
    pub fn as_str(self) -> &'static str {
        match self {
            EventKind::InterruptCall => "INTERRUPT_CALL",
            EventKind::DataMsg => "DATA_MSG",
            EventKind::LinkDrop => "LINK_DROP",
        }
    }
}

impl fmt::Display for EventKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// A message attempt, delivered or dropped.
#[derive(Debug, Clone, PartialEq)]
pub struct SimEvent {
    pub time_ms: u64,
    /// Emission sequence within the round; breaks ties in `time_ms`.
    pub seq: u64,
    pub kind: EventKind,
    pub from: NodeId,
    pub to: NodeId,
    pub payload: Option<Vec<Reading>>,
}

impl SimEvent {
    /// `<time_ms> <kind> <from> <to>`
    pub fn trace_line(&self) -> String {
        format!("{} {} {} {}", self.time_ms, self.kind, self.from, self.to)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Delivery {
    Delivered,
    Dropped,
}

/// Draws the fate of one message from the run's drop stream.
pub fn interrupt_call(
    cfg: &SimConfig,
    from: &NodeId,
    to: &NodeId,
    rng: &mut ChaCha8Rng,
) -> Result<Delivery, SimError> {
    if cfg.topology.link_between(from, to).is_none() {
        return Err(SimError::NotALink {
            from: from.to_string(),
            to: to.to_string(),
        });
    }
    Ok(draw_delivery(cfg.topology.radio().failure_prob(), rng))
}

fn draw_delivery(failure_prob: f64, rng: &mut ChaCha8Rng) -> Delivery {
    if rng.random::<f64>() < failure_prob {
        Delivery::Dropped
    } else {
        Delivery::Delivered
    }
}

/// The drop stream for `round`. Draws are consumed in emission order.
pub fn link_stream(cfg: &SimConfig, round: u64) -> ChaCha8Rng {
    rng::stream(cfg.seed, Purpose::Links, round)
}

/// Senses every node for `round`. Noise is drawn for every node and channel
/// in topology order whether or not the node is later reached, so link
/// outcomes never shift other nodes' measurements.
fn sense_round(cfg: &SimConfig, round: u64, time_ms: u64) -> Result<BTreeMap<NodeId, Reading>, SimError> {
    let mut noise = rng::stream(cfg.seed, Purpose::Noise, round);
    let mut out = BTreeMap::new();
    for node in cfg.topology.sensing_nodes() {
        let mut values: [Sample; 5] = [Sample::NotEquipped; 5];
        for spec in cfg.sensors.iter() {
            let channel = spec.channel();
            let draw: f64 = noise.random_range(-1.0..=1.0);
            let truth = cfg.field.truth_for(node, channel, round)?;
            values[channel.index()] = Sample::Value(canonical(channel, spec.sense(truth, draw)));
        }
        out.insert(
            node.clone(),
            Reading {
                node: node.clone(),
                round,
                time_ms,
                temp_c: values[Channel::TempC.index()].value(),
                light_raw: values[Channel::LightRaw.index()].value(),
                gases: [values[2], values[3], values[4]],
                status: ReadingStatus::Ok,
            },
        );
    }
    Ok(out)
}

/// Snaps a value onto the precision it is written with, so a measurement
/// always survives the telemetry round trip. Identity on default grids.
fn canonical(channel: Channel, value: f64) -> f64 {
    channel
        .format_value(value)
        .parse()
        .expect("formatted float parses")
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
enum Priority {
    Message,
    // Runs after messages arriving at the same instant.
    Timer,
}

#[derive(Debug)]
enum Action {
    Message {
        kind: EventKind,
        from: NodeId,
        to: NodeId,
        delivered: bool,
        payload: Option<Vec<Reading>>,
    },
    /// A cluster head's reply deadline: forward whatever has arrived.
    Collect { head: NodeId },
}

struct Round<'a> {
    cfg: &'a SimConfig,
    readings: BTreeMap<NodeId, Reading>,
    forced_down: LinkSet,
    drops: ChaCha8Rng,
    queue: BinaryHeap<Reverse<(u64, Priority, u64)>>,
    actions: BTreeMap<u64, Action>,
    next_seq: u64,
    events: Vec<SimEvent>,
    // Per-head leaflet readings received this round.
    inbox: BTreeMap<NodeId, BTreeMap<NodeId, Reading>>,
    at_base: BTreeMap<NodeId, Reading>,
    round: u64,
    start_ms: u64,
}

impl Round<'_> {
    fn schedule(&mut self, time: u64, priority: Priority, action: Action) {
        let seq = self.next_seq;
        self.next_seq += 1;
        self.queue.push(Reverse((time, priority, seq)));
        self.actions.insert(seq, action);
    }

    fn send(&mut self, now: u64, kind: EventKind, from: &NodeId, to: &NodeId, payload: Option<Vec<Reading>>) {
        let link = self
            .cfg
            .topology
            .link_between(from, to)
            .expect("simulator only sends along tree links");
        let drawn = draw_delivery(self.cfg.topology.radio().failure_prob(), &mut self.drops);
        let delivered = drawn == Delivery::Delivered && !self.forced_down.contains(&link);
        self.schedule(
            now + self.cfg.hop_latency_ms,
            Priority::Message,
            Action::Message {
                kind,
                from: from.clone(),
                to: to.clone(),
                delivered,
                payload,
            },
        );
    }

    fn run(mut self) -> (Snapshot, Vec<SimEvent>) {
        let root = self.cfg.topology.root().clone();
        let heads: Vec<NodeId> = self.cfg.topology.clusters().iter().map(|c| c.head.clone()).collect();
        for head in &heads {
            self.send(self.start_ms, EventKind::InterruptCall, &root, head, None);
        }

        while let Some(Reverse((now, _, seq))) = self.queue.pop() {
            let action = self.actions.remove(&seq).expect("scheduled action");
            match action {
                Action::Message {
                    kind,
                    from,
                    to,
                    delivered,
                    payload,
                } => {
                    self.events.push(SimEvent {
                        time_ms: now,
                        seq,
                        kind: if delivered { kind } else { EventKind::LinkDrop },
                        from: from.clone(),
                        to: to.clone(),
                        payload: if delivered { payload.clone() } else { None },
                    });
                    if delivered {
                        self.deliver(now, kind, &from, &to, payload);
                    }
                }
                Action::Collect { head } => {
                    let mut aggregate = vec![self.readings[&head].clone()];
                    let mut received = self.inbox.remove(&head).unwrap_or_default();
                    let leaflets = self.cfg.topology.cluster(&head).expect("head").leaflets.clone();
                    for leaf in leaflets {
                        aggregate.push(received.remove(&leaf).unwrap_or_else(|| {
                            Reading::null(leaf.clone(), self.round, self.start_ms, &self.cfg.sensors)
                        }));
                    }
                    self.send(now, EventKind::DataMsg, &head, &root, Some(aggregate));
                }
            }
        }

        let readings = self
            .cfg
            .topology
            .sensing_nodes()
            .map(|node| {
                self.at_base.remove(node).unwrap_or_else(|| {
                    Reading::null(node.clone(), self.round, self.start_ms, &self.cfg.sensors)
                })
            })
            .collect();
        let snapshot = Snapshot {
            round: self.round,
            time_ms: self.start_ms,
            readings,
        };
        (snapshot, self.events)
    }

    fn deliver(&mut self, now: u64, kind: EventKind, from: &NodeId, to: &NodeId, payload: Option<Vec<Reading>>) {
        let root = self.cfg.topology.root();
        match kind {
            EventKind::InterruptCall if from == root => {
                let leaflets = self.cfg.topology.cluster(to).expect("head").leaflets.clone();
                for leaf in &leaflets {
                    self.send(now, EventKind::InterruptCall, to, leaf, None);
                }
                let deadline = if leaflets.is_empty() {
                    now
                } else {
                    now + 2 * self.cfg.hop_latency_ms
                };
                self.schedule(deadline, Priority::Timer, Action::Collect { head: to.clone() });
            }
            EventKind::InterruptCall => {
                let reading = self.readings[to].clone();
                self.send(now, EventKind::DataMsg, to, from, Some(vec![reading]));
            }
            EventKind::DataMsg if to == root => {
                for reading in payload.unwrap_or_default() {
                    self.at_base.insert(reading.node.clone(), reading);
                }
            }
            EventKind::DataMsg => {
                let inbox = self.inbox.entry(to.clone()).or_default();
                for reading in payload.unwrap_or_default() {
                    inbox.insert(reading.node.clone(), reading);
                }
            }
            EventKind::LinkDrop => unreachable!("drops are never delivered"),
        }
    }
}

/// Runs one collection round. Links in `link_overrides` and links scripted
/// down in the config for this round lose every message.
pub fn run_round(
    cfg: &SimConfig,
    round: u64,
    link_overrides: &LinkSet,
) -> Result<(Snapshot, Vec<SimEvent>), SimError> {
    if round >= cfg.rounds {
        return Err(SimError::RoundOutOfRange {
            round,
            rounds: cfg.rounds,
        });
    }
    let start_ms = cfg.round_start_ms(round);
    let mut forced_down = cfg.scheduled_outages(round);
    forced_down.extend(link_overrides.iter().cloned());
    let state = Round {
        cfg,
        readings: sense_round(cfg, round, start_ms)?,
        forced_down,
        drops: link_stream(cfg, round),
        queue: BinaryHeap::new(),
        actions: BTreeMap::new(),
        next_seq: 0,
        events: Vec::new(),
        inbox: BTreeMap::new(),
        at_base: BTreeMap::new(),
        round,
        start_ms,
    };
    Ok(state.run())
}

/// Receives each round's snapshot and event trace, in round order.
pub trait SnapshotSink {
    fn accept(&mut self, snapshot: &Snapshot, events: &[SimEvent]) -> Result<(), SinkError>;
}

impl<F> SnapshotSink for F
where
    F: FnMut(&Snapshot, &[SimEvent]) -> Result<(), SinkError>,
{
    fn accept(&mut self, snapshot: &Snapshot, events: &[SimEvent]) -> Result<(), SinkError> {
        self(snapshot, events)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct SimSummary {
    pub rounds_run: u64,
    pub messages_sent: u64,
    pub messages_dropped: u64,
}

/// Runs every round of `cfg` in order, feeding each snapshot to `sink`.
pub fn run_simulation(cfg: &SimConfig, sink: &mut dyn SnapshotSink) -> Result<SimSummary, SimError> {
    cfg.validate()?;
    let mut summary = SimSummary::default();
    let none = LinkSet::new();
    for round in 0..cfg.rounds {
        let (snapshot, events) = run_round(cfg, round, &none)?;
        summary.rounds_run += 1;
        summary.messages_sent += events.len() as u64;
        summary.messages_dropped += events
            .iter()
            .filter(|e| e.kind == EventKind::LinkDrop)
            .count() as u64;
        sink.accept(&snapshot, &events)
            .map_err(|source| SimError::Sink { round, source })?;
    }
    Ok(summary)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::environment::{ChannelField, Drift};
    use crate::topology::RadioSpec;

    fn id(s: &str) -> NodeId {
        NodeId::new(s).unwrap()
    }

    fn field() -> EnvField {
        EnvField::new(1)
            .with_channel(Channel::TempC, ChannelField::constant(25.0))
            .unwrap()
            .with_channel(Channel::LightRaw, ChannelField::constant(512.0))
            .unwrap()
    }

    fn lab_cfg(failure_prob: f64, rounds: u64) -> SimConfig {
        let topology = TreeTopology::from_labels(
            &[("N1", &["1.1", "1.2"]), ("N2", &["2.1", "2.2"])],
            RadioSpec::new(30.0, failure_prob).unwrap(),
        )
        .unwrap();
        SimConfig::new(topology, field(), Sensors::default(), rounds)
    }

    fn link(a: &str, b: &str) -> Link {
        Link {
            parent: id(a),
            child: id(b),
        }
    }

    fn statuses(s: &Snapshot) -> Vec<(&str, ReadingStatus)> {
        s.readings.iter().map(|r| (r.node.as_str(), r.status)).collect()
    }

    #[test]
    fn failure_free_round() {
        let cfg = lab_cfg(0.0, 10);
        let (snap, events) = run_round(&cfg, 0, &LinkSet::new()).unwrap();
        assert_eq!(snap.readings.len(), 6);
        assert!(snap.readings.iter().all(Reading::is_ok));
        assert_eq!(events.len(), 12);
        let order: Vec<&str> = snap.readings.iter().map(|r| r.node.as_str()).collect();
        assert_eq!(order, ["N1", "1.1", "1.2", "N2", "2.1", "2.2"]);
        assert!(snap.readings.iter().all(|r| r.gases == [Sample::NotEquipped; 3]));
    }

    #[test]
    fn event_timing_and_order() {
        let cfg = lab_cfg(0.0, 10);
        let (_, events) = run_round(&cfg, 3, &LinkSet::new()).unwrap();
        let lines: Vec<String> = events.iter().map(SimEvent::trace_line).collect();
        assert_eq!(
            lines,
            [
                "3010 INTERRUPT_CALL BS N1",
                "3010 INTERRUPT_CALL BS N2",
                "3020 INTERRUPT_CALL N1 1.1",
                "3020 INTERRUPT_CALL N1 1.2",
                "3020 INTERRUPT_CALL N2 2.1",
                "3020 INTERRUPT_CALL N2 2.2",
                "3030 DATA_MSG 1.1 N1",
                "3030 DATA_MSG 1.2 N1",
                "3030 DATA_MSG 2.1 N2",
                "3030 DATA_MSG 2.2 N2",
                "3040 DATA_MSG N1 BS",
                "3040 DATA_MSG N2 BS",
            ]
        );
        let head_payload = events[10].payload.as_ref().unwrap();
        let nodes: Vec<&str> = head_payload.iter().map(|r| r.node.as_str()).collect();
        assert_eq!(nodes, ["N1", "1.1", "1.2"]);
    }

    #[test]
    fn zero_latency_keeps_emission_order() {
        let mut cfg = lab_cfg(0.0, 1);
        cfg.hop_latency_ms = 0;
        let (snap, events) = run_round(&cfg, 0, &LinkSet::new()).unwrap();
        assert_eq!(events.len(), 12);
        assert!(snap.readings.iter().all(Reading::is_ok));
        assert!(events.iter().all(|e| e.time_ms == 0));
        assert_eq!(events.last().unwrap().trace_line(), "0 DATA_MSG N2 BS");
    }

    #[test]
    fn leaflet_link_down_nulls_only_that_leaflet() {
        let cfg = lab_cfg(0.0, 10);
        let down = LinkSet::from([link("N1", "1.1")]);
        let (snap, events) = run_round(&cfg, 0, &down).unwrap();
        assert_eq!(
            statuses(&snap),
            [
                ("N1", ReadingStatus::Ok),
                ("1.1", ReadingStatus::Null),
                ("1.2", ReadingStatus::Ok),
                ("N2", ReadingStatus::Ok),
                ("2.1", ReadingStatus::Ok),
                ("2.2", ReadingStatus::Ok),
            ]
        );
        // The poll is lost, so 1.1 never replies.
        assert_eq!(events.len(), 11);
        assert_eq!(events.iter().filter(|e| e.kind == EventKind::LinkDrop).count(), 1);
        let null = &snap.readings[1];
        assert_eq!((null.temp_c, null.light_raw), (None, None));
    }

    #[test]
    fn head_link_down_nulls_branch() {
        let cfg = lab_cfg(0.0, 10);
        let down = LinkSet::from([link("BS", "N2")]);
        let (snap, _) = run_round(&cfg, 0, &down).unwrap();
        let nulls: Vec<&str> = snap
            .readings
            .iter()
            .filter(|r| !r.is_ok())
            .map(|r| r.node.as_str())
            .collect();
        assert_eq!(nulls, ["N2", "2.1", "2.2"]);
    }

    #[test]
    fn scripted_outage_window() {
        let mut cfg = lab_cfg(0.0, 30);
        cfg.outages.push(Outage {
            link: link("N1", "1.1"),
            rounds: 10..=20,
        });
        let mut nulled = Vec::new();
        run_simulation(&cfg, &mut |s: &Snapshot, _: &[SimEvent]| {
            for r in &s.readings {
                if !r.is_ok() {
                    nulled.push((s.round, r.node.to_string()));
                }
            }
            Ok(())
        })
        .unwrap();
        let expected: Vec<(u64, String)> = (10..=20).map(|r| (r, "1.1".to_string())).collect();
        assert_eq!(nulled, expected);
    }

    #[test]
    fn round_out_of_range() {
        let cfg = lab_cfg(0.0, 5);
        assert!(matches!(
            run_round(&cfg, 5, &LinkSet::new()),
            Err(SimError::RoundOutOfRange { round: 5, rounds: 5 })
        ));
    }

    #[test]
    fn summaries() {
        let cfg = lab_cfg(0.0, 100);
        let summary = run_simulation(&cfg, &mut |_: &Snapshot, _: &[SimEvent]| Ok(())).unwrap();
        assert_eq!(
            summary,
            SimSummary {
                rounds_run: 100,
                messages_sent: 1200,
                messages_dropped: 0
            }
        );

        let single = SimConfig::new(
            TreeTopology::from_labels(&[("N1", &[])], RadioSpec::new(30.0, 0.0).unwrap()).unwrap(),
            field(),
            Sensors::default(),
            1,
        );
        let summary = run_simulation(&single, &mut |_: &Snapshot, _: &[SimEvent]| Ok(())).unwrap();
        assert_eq!(
            summary,
            SimSummary {
                rounds_run: 1,
                messages_sent: 2,
                messages_dropped: 0
            }
        );

        let dead = lab_cfg(1.0, 100);
        let mut all_null = true;
        let summary = run_simulation(&dead, &mut |s: &Snapshot, _: &[SimEvent]| {
            all_null &= s.readings.iter().all(|r| !r.is_ok());
            Ok(())
        })
        .unwrap();
        assert!(all_null);
        assert_eq!(summary.messages_dropped, summary.messages_sent);
        assert_eq!(summary.messages_sent, 200);
    }

    #[test]
    fn sink_failure_carries_round() {
        let cfg = lab_cfg(0.0, 10);
        let err = run_simulation(&cfg, &mut |s: &Snapshot, _: &[SimEvent]| {
            if s.round == 4 {
                Err("disk full".into())
            } else {
                Ok(())
            }
        })
        .unwrap_err();
        assert!(matches!(err, SimError::Sink { round: 4, .. }));
    }

    #[test]
    fn interrupt_call_probabilities() {
        let mut cfg = lab_cfg(0.0, 1);
        let mut rng = link_stream(&cfg, 0);
        for _ in 0..100 {
            assert_eq!(interrupt_call(&cfg, &id("BS"), &id("N1"), &mut rng).unwrap(), Delivery::Delivered);
        }
        cfg.topology = cfg.topology.with_radio(RadioSpec::new(30.0, 1.0).unwrap()).unwrap();
        for _ in 0..100 {
            assert_eq!(interrupt_call(&cfg, &id("N1"), &id("1.1"), &mut rng).unwrap(), Delivery::Dropped);
        }
        assert!(matches!(
            interrupt_call(&cfg, &id("1.1"), &id("2.1"), &mut rng),
            Err(SimError::NotALink { .. })
        ));
    }

    #[test]
    fn interrupt_call_drop_fraction() {
        let mut cfg = lab_cfg(0.5, 1);
        cfg.seed = 42;
        let mut rng = link_stream(&cfg, 0);
        let dropped = (0..1000)
            .filter(|_| interrupt_call(&cfg, &id("BS"), &id("N1"), &mut rng).unwrap() == Delivery::Dropped)
            .count();
        assert!((450..=550).contains(&dropped), "dropped {dropped}");
    }

    #[test]
    fn config_validation() {
        let mut cfg = lab_cfg(0.0, 0);
        assert!(matches!(cfg.validate(), Err(SimError::InvalidConfig(_))));
        cfg.rounds = 1;
        cfg.round_period_ms = 30;
        assert!(cfg.validate().is_err());
        cfg.round_period_ms = 40;
        cfg.validate().unwrap();
        cfg.sensors.equip(SensorSpec::default_for(Channel::CoPpm));
        assert!(cfg.validate().is_err());
        cfg.field
            .set_channel(
                Channel::CoPpm,
                ChannelField {
                    baseline: 10.0,
                    drift: Drift::RandomWalk { sigma: 1.0 },
                },
            )
            .unwrap();
        cfg.validate().unwrap();
        cfg.outages.push(Outage {
            link: link("1.1", "1.2"),
            rounds: 0..=0,
        });
        assert!(matches!(cfg.validate(), Err(SimError::NotALink { .. })));
    }

    #[test]
    fn gas_channels_null_on_failure() {
        let mut cfg = lab_cfg(0.0, 1);
        cfg.sensors.equip(SensorSpec::default_for(Channel::CoPpm));
        cfg.field.set_channel(Channel::CoPpm, ChannelField::constant(20.0)).unwrap();
        let (snap, _) = run_round(&cfg, 0, &LinkSet::from([link("BS", "N1")])).unwrap();
        assert_eq!(snap.readings[0].gases, [Sample::NotEquipped, Sample::Null, Sample::NotEquipped]);
        assert!(matches!(snap.readings[3].gases[1], Sample::Value(_)));
    }

    #[test]
    fn identical_configs_identical_runs() {
        let mut cfg = lab_cfg(0.3, 50);
        cfg.seed = 99;
        let collect = |cfg: &SimConfig| {
            let mut out = Vec::new();
            run_simulation(cfg, &mut |s: &Snapshot, e: &[SimEvent]| {
                out.push((s.clone(), e.to_vec()));
                Ok(())
            })
            .unwrap();
            out
        };
        assert_eq!(collect(&cfg), collect(&cfg));
    }
}
