//! Per-round aggregation and the append-only telemetry log.
//!
//! ```text
//! #WSNLOG v1 nodes=N1,1.1,1.2,N2,2.1,2.2
//! <round>,<time_ms>,<node>,<temp|NULL>,<light|NULL>,<ch4|NULL|->,<co|NULL|->,<o2|NULL|->,<OK|NULL>
//! ```
//!
//! A round is written as one group of records, one per sensing node in
//! header order, with a single `write_all`. Readers only surface a round once
//! its whole group is present, so a concurrent reader never sees half a
//! round: a trailing incomplete group is reported, not returned.

use std::fs::{self, File, OpenOptions};
use std::io::{self, Read, Seek, SeekFrom, Write};
use std::path::{Path, PathBuf};

use thiserror::Error;

use crate::environment::Channel;
use crate::netsim::{Reading, ReadingStatus, Sample};
use crate::topology::{NodeId, TreeTopology};

pub const HEADER_PREFIX: &str = "#WSNLOG v1 nodes=";
pub const RECORD_FIELDS: usize = 9;

/// The base station's aggregate for one round.
#[derive(Debug, Clone, PartialEq)]
pub struct Snapshot {
    pub round: u64,
    pub time_ms: u64,
    /// One reading per sensing node, in topology order.
    pub readings: Vec<Reading>,
}

impl Snapshot {
    pub fn reading(&self, node: &NodeId) -> Option<&Reading> {
        self.readings.iter().find(|r| r.node == *node)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PartialRound {
    /// Round of the incomplete group, when at least one record of it parsed.
    pub round: Option<u64>,
    /// Complete record lines seen for that round.
    pub records: usize,
    /// 1-based line number where the incomplete group starts.
    pub line: usize,
}

#[derive(Debug, Error)]
pub enum TelemetryError {
    #[error("bad telemetry header: {0}")]
    BadHeader(String),
    #[error("malformed record at line {line}: {reason}")]
    MalformedRecord { line: usize, reason: String },
    #[error("log ends with a partial round after {} complete rounds", complete.len())]
    TrailingPartialRound {
        complete: Vec<Snapshot>,
        partial: PartialRound,
    },
    #[error("round {round} does not follow round {last}")]
    NonMonotonicRound { round: u64, last: u64 },
    #[error("snapshot for round {round} does not match the log's node list")]
    NodeMismatch { round: u64 },
    #[error("log has no complete round")]
    EmptyLog,
    #[error("I/O failure at round {round:?}: {source}")]
    Io {
        round: Option<u64>,
        #[source]
        source: io::Error,
    },
}

impl TelemetryError {
    fn io(round: Option<u64>) -> impl FnOnce(io::Error) -> TelemetryError {
        move |source| TelemetryError::Io { round, source }
    }
}

pub fn header_line(nodes: &[NodeId]) -> String {
    let list: Vec<&str> = nodes.iter().map(NodeId::as_str).collect();
    format!("{HEADER_PREFIX}{}\n", list.join(","))
}

fn format_sample(channel: Channel, sample: Sample) -> String {
    match sample {
        Sample::Value(v) => channel.format_value(v),
        Sample::Null => "NULL".to_string(),
        Sample::NotEquipped => "-".to_string(),
    }
}

/// One record line, without the trailing newline.
pub fn format_record(reading: &Reading) -> String {
    let mut fields = vec![
        reading.round.to_string(),
        reading.time_ms.to_string(),
        reading.node.to_string(),
    ];
    fields.extend(Channel::ALL.iter().map(|&c| format_sample(c, reading.sample(c))));
    fields.push(reading.status.as_str().to_string());
    fields.join(",")
}

/// All of a snapshot's record lines, each LF-terminated.
pub fn format_group(snapshot: &Snapshot) -> String {
    let mut out = String::new();
    for reading in &snapshot.readings {
        out.push_str(&format_record(reading));
        out.push('\n');
    }
    out
}

fn parse_sample(channel: Channel, field: &str) -> Result<Sample, String> {
    match field {
        "NULL" => Ok(Sample::Null),
        "-" if channel.is_gas() => Ok(Sample::NotEquipped),
        _ => field
            .parse::<f64>()
            .ok()
            .filter(|v| v.is_finite())
            .map(Sample::Value)
            .ok_or_else(|| format!("bad {channel} value {field:?}")),
    }
}

/// Parses one record line (no trailing newline). Also the grammar of the
/// record lines in gateway responses.
pub fn parse_record(line: &str) -> Result<Reading, String> {
    let fields: Vec<&str> = line.split(',').collect();
    if fields.len() != RECORD_FIELDS {
        return Err(format!(
            "expected {RECORD_FIELDS} fields, found {}",
            fields.len()
        ));
    }
    let round = fields[0]
        .parse::<u64>()
        .map_err(|_| format!("bad round {:?}", fields[0]))?;
    let time_ms = fields[1]
        .parse::<u64>()
        .map_err(|_| format!("bad time {:?}", fields[1]))?;
    let node = NodeId::new(fields[2]).map_err(|e| e.to_string())?;
    let mut samples = [Sample::NotEquipped; 5];
    for (i, channel) in Channel::ALL.into_iter().enumerate() {
        samples[i] = parse_sample(channel, fields[3 + i])?;
    }
    let status = match fields[8] {
        "OK" => ReadingStatus::Ok,
        "NULL" => ReadingStatus::Null,
        other => return Err(format!("bad status {other:?}")),
    };
    let equipped: Vec<Sample> = samples
        .iter()
        .copied()
        .filter(|s| *s != Sample::NotEquipped)
        .collect();
    let consistent = match status {
        ReadingStatus::Ok => equipped.iter().all(|s| matches!(s, Sample::Value(_))),
        ReadingStatus::Null => equipped.iter().all(|s| *s == Sample::Null),
    };
    if !consistent {
        return Err(format!("channel values disagree with status {}", status.as_str()));
    }
    Ok(Reading {
        node,
        round,
        time_ms,
        temp_c: samples[0].value(),
        light_raw: samples[1].value(),
        gases: [samples[2], samples[3], samples[4]],
        status,
    })
}

fn parse_header(line: &str) -> Result<Vec<NodeId>, TelemetryError> {
    let list = line
        .strip_prefix(HEADER_PREFIX)
        .ok_or_else(|| TelemetryError::BadHeader(format!("expected {HEADER_PREFIX:?} prefix")))?;
    if list.is_empty() {
        return Err(TelemetryError::BadHeader("empty node list".into()));
    }
    let nodes = list
        .split(',')
        .map(NodeId::new)
        .collect::<Result<Vec<_>, _>>()
        .map_err(|e| TelemetryError::BadHeader(e.to_string()))?;
    for (i, n) in nodes.iter().enumerate() {
        if nodes[..i].contains(n) {
            return Err(TelemetryError::BadHeader(format!("duplicate node {n}")));
        }
    }
    Ok(nodes)
}

/// Reassembles round groups from record lines.
#[derive(Debug)]
struct Assembler {
    nodes: Vec<NodeId>,
    pending: Vec<Reading>,
    pending_line: usize,
    last_round: Option<u64>,
}

impl Assembler {
    fn new(nodes: Vec<NodeId>) -> Self {
        Assembler {
            nodes,
            pending: Vec::new(),
            pending_line: 0,
            last_round: None,
        }
    }

    fn push(&mut self, line_no: usize, line: &str) -> Result<Option<Snapshot>, TelemetryError> {
        let malformed = |reason: String| TelemetryError::MalformedRecord {
            line: line_no,
            reason,
        };
        let reading = parse_record(line).map_err(malformed)?;
        let expected = &self.nodes[self.pending.len()];
        if reading.node != *expected {
            return Err(malformed(format!("expected node {expected}, found {}", reading.node)));
        }
        if let Some(first) = self.pending.first() {
            if (reading.round, reading.time_ms) != (first.round, first.time_ms) {
                return Err(malformed(format!(
                    "record for round {} inside the group of round {}",
                    reading.round, first.round
                )));
            }
        } else {
            if let Some(last) = self.last_round {
                if reading.round <= last {
                    return Err(malformed(format!("round {} does not follow round {last}", reading.round)));
                }
            }
            self.pending_line = line_no;
        }
        self.pending.push(reading);
        if self.pending.len() < self.nodes.len() {
            return Ok(None);
        }
        let readings = std::mem::take(&mut self.pending);
        let snapshot = Snapshot {
            round: readings[0].round,
            time_ms: readings[0].time_ms,
            readings,
        };
        self.last_round = Some(snapshot.round);
        Ok(Some(snapshot))
    }

    fn partial(&self, next_line: usize, dangling: bool) -> Option<PartialRound> {
        if self.pending.is_empty() && !dangling {
            return None;
        }
        Some(PartialRound {
            round: self.pending.first().map(|r| r.round),
            records: self.pending.len(),
            line: if self.pending.is_empty() {
                next_line
            } else {
                self.pending_line
            },
        })
    }
}

/// The result of parsing a whole log.
#[derive(Debug, Clone, PartialEq)]
pub struct ParsedTelemetry {
    pub nodes: Vec<NodeId>,
    /// Every complete round, in order.
    pub snapshots: Vec<Snapshot>,
    /// Set when the log ends inside a round group.
    pub partial: Option<PartialRound>,
}

impl ParsedTelemetry {
    /// Turns a trailing partial round into an error carrying the complete
    /// prefix.
    pub fn require_complete(self) -> Result<Vec<Snapshot>, TelemetryError> {
        match self.partial {
            None => Ok(self.snapshots),
            Some(partial) => Err(TelemetryError::TrailingPartialRound {
                complete: self.snapshots,
                partial,
            }),
        }
    }

    pub fn latest(&self) -> Result<&Snapshot, TelemetryError> {
        self.snapshots.last().ok_or(TelemetryError::EmptyLog)
    }
}

pub fn parse_telemetry(bytes: &[u8]) -> Result<ParsedTelemetry, TelemetryError> {
    let text = std::str::from_utf8(bytes)
        .map_err(|e| TelemetryError::BadHeader(format!("log is not UTF-8: {e}")))?;
    let Some((header, body)) = text.split_once('\n') else {
        return Err(TelemetryError::BadHeader("missing or truncated header line".into()));
    };
    let mut assembler = Assembler::new(parse_header(header)?);
    let mut snapshots = Vec::new();
    let mut rest = body;
    let mut line_no = 1;
    while let Some((line, tail)) = rest.split_once('\n') {
        line_no += 1;
        if let Some(s) = assembler.push(line_no, line)? {
            snapshots.push(s);
        }
        rest = tail;
    }
    let partial = assembler.partial(line_no + 1, !rest.is_empty());
    Ok(ParsedTelemetry {
        nodes: assembler.nodes,
        snapshots,
        partial,
    })
}

/// In-memory telemetry log.
#[derive(Debug, Clone, PartialEq)]
pub struct TelemetryLog {
    nodes: Vec<NodeId>,
    snapshots: Vec<Snapshot>,
}

impl TelemetryLog {
    pub fn new(topology: &TreeTopology) -> Self {
        Self::with_nodes(topology.sensing_nodes().cloned().collect())
    }

    pub fn with_nodes(nodes: Vec<NodeId>) -> Self {
        TelemetryLog {
            nodes,
            snapshots: Vec::new(),
        }
    }

    pub fn from_parsed(parsed: ParsedTelemetry) -> Self {
        TelemetryLog {
            nodes: parsed.nodes,
            snapshots: parsed.snapshots,
        }
    }

    pub fn nodes(&self) -> &[NodeId] {
        &self.nodes
    }

    pub fn snapshots(&self) -> &[Snapshot] {
        &self.snapshots
    }

    pub fn append(&mut self, snapshot: Snapshot) -> Result<(), TelemetryError> {
        check_append(&self.nodes, self.snapshots.last().map(|s| s.round), &snapshot)?;
        self.snapshots.push(snapshot);
        Ok(())
    }

    pub fn latest(&self) -> Result<&Snapshot, TelemetryError> {
        self.snapshots.last().ok_or(TelemetryError::EmptyLog)
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = header_line(&self.nodes);
        for s in &self.snapshots {
            out.push_str(&format_group(s));
        }
        out.into_bytes()
    }
}

fn check_append(nodes: &[NodeId], last: Option<u64>, snapshot: &Snapshot) -> Result<(), TelemetryError> {
    if let Some(last) = last {
        if snapshot.round <= last {
            return Err(TelemetryError::NonMonotonicRound {
                round: snapshot.round,
                last,
            });
        }
    }
    let matches = snapshot.readings.len() == nodes.len()
        && snapshot
            .readings
            .iter()
            .zip(nodes)
            .all(|(r, n)| r.node == *n && r.round == snapshot.round && r.time_ms == snapshot.time_ms);
    if !matches {
        return Err(TelemetryError::NodeMismatch {
            round: snapshot.round,
        });
    }
    Ok(())
}

/// Single writer of a telemetry stream.
pub struct TelemetryWriter<W: Write> {
    out: W,
    nodes: Vec<NodeId>,
    last_round: Option<u64>,
    sync: bool,
}

impl TelemetryWriter<File> {
    /// Creates (or truncates) `path` and writes the header.
    pub fn create(path: impl AsRef<Path>, topology: &TreeTopology) -> Result<Self, TelemetryError> {
        let file = File::create(path).map_err(TelemetryError::io(None))?;
        TelemetryWriter::new(file, topology.sensing_nodes().cloned().collect())
    }

    /// `fdatasync` after every round.
    pub fn with_sync(mut self, sync: bool) -> Self {
        self.sync = sync;
        self
    }
}

impl<W: Write> TelemetryWriter<W> {
    pub fn new(mut out: W, nodes: Vec<NodeId>) -> Result<Self, TelemetryError> {
        out.write_all(header_line(&nodes).as_bytes())
            .and_then(|_| out.flush())
            .map_err(TelemetryError::io(None))?;
        Ok(TelemetryWriter {
            out,
            nodes,
            last_round: None,
            sync: false,
        })
    }

    pub fn last_round(&self) -> Option<u64> {
        self.last_round
    }

    pub fn nodes(&self) -> &[NodeId] {
        &self.nodes
    }

    pub fn into_inner(self) -> W {
        self.out
    }
}

pub trait SyncData {
    fn sync_data(&self) -> io::Result<()>;
}

impl SyncData for File {
    fn sync_data(&self) -> io::Result<()> {
        File::sync_data(self)
    }
}

impl SyncData for Vec<u8> {
    fn sync_data(&self) -> io::Result<()> {
        Ok(())
    }
}

impl<W: Write + SyncData> TelemetryWriter<W> {
    /// Appends one round as a single write.
    pub fn append(&mut self, snapshot: &Snapshot) -> Result<(), TelemetryError> {
        check_append(&self.nodes, self.last_round, snapshot)?;
        let round = Some(snapshot.round);
        self.out
            .write_all(format_group(snapshot).as_bytes())
            .and_then(|_| self.out.flush())
            .map_err(TelemetryError::io(round))?;
        if self.sync {
            self.out.sync_data().map_err(TelemetryError::io(round))?;
        }
        self.last_round = round;
        Ok(())
    }
}

/// Replaces `path` with a log holding only `snapshot`, via rename so readers
/// see either the old or the new file.
pub fn write_latest(path: impl AsRef<Path>, nodes: &[NodeId], snapshot: &Snapshot) -> Result<(), TelemetryError> {
    let path = path.as_ref();
    let round = Some(snapshot.round);
    let mut tmp = path.as_os_str().to_owned();
    tmp.push(".tmp");
    let tmp = PathBuf::from(tmp);
    let mut content = header_line(nodes);
    content.push_str(&format_group(snapshot));
    fs::write(&tmp, content).map_err(TelemetryError::io(round))?;
    fs::rename(&tmp, path).map_err(TelemetryError::io(round))
}

/// Follows a growing log file, yielding each round once its group is
/// complete.
#[derive(Debug)]
pub struct TelemetryTail {
    path: PathBuf,
    offset: u64,
    buf: Vec<u8>,
    line_no: usize,
    assembler: Option<Assembler>,
}

impl TelemetryTail {
    pub fn new(path: impl Into<PathBuf>) -> Self {
        TelemetryTail {
            path: path.into(),
            offset: 0,
            buf: Vec::new(),
            line_no: 0,
            assembler: None,
        }
    }

    pub fn nodes(&self) -> Option<&[NodeId]> {
        self.assembler.as_ref().map(|a| a.nodes.as_slice())
    }

    /// Reads whatever was appended since the last call. A missing file is
    /// treated as an empty log.
    pub fn poll(&mut self) -> Result<Vec<Snapshot>, TelemetryError> {
        let mut file = match OpenOptions::new().read(true).open(&self.path) {
            Ok(f) => f,
            Err(e) if e.kind() == io::ErrorKind::NotFound => return Ok(Vec::new()),
            Err(e) => return Err(TelemetryError::io(None)(e)),
        };
        let len = file.metadata().map_err(TelemetryError::io(None))?.len();
        if len < self.offset {
            return Err(TelemetryError::io(None)(io::Error::other("telemetry log shrank")));
        }
        file.seek(SeekFrom::Start(self.offset))
            .map_err(TelemetryError::io(None))?;
        let read = file
            .take(len - self.offset)
            .read_to_end(&mut self.buf)
            .map_err(TelemetryError::io(None))?;
        self.offset += read as u64;

        let mut out = Vec::new();
        let mut consumed = 0;
        while let Some(pos) = self.buf[consumed..].iter().position(|b| *b == b'\n') {
            let line = std::str::from_utf8(&self.buf[consumed..consumed + pos])
                .map_err(|e| TelemetryError::MalformedRecord {
                    line: self.line_no + 1,
                    reason: e.to_string(),
                })?
                .to_string();
            consumed += pos + 1;
            self.line_no += 1;
            match &mut self.assembler {
                None => self.assembler = Some(Assembler::new(parse_header(&line)?)),
                Some(assembler) => {
                    if let Some(s) = assembler.push(self.line_no, &line)? {
                        out.push(s);
                    }
                }
            }
        }
        self.buf.drain(..consumed);
        Ok(out)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn id(s: &str) -> NodeId {
        NodeId::new(s).unwrap()
    }

    const NODES: [&str; 6] = ["N1", "1.1", "1.2", "N2", "2.1", "2.2"];

    fn nodes() -> Vec<NodeId> {
        NODES.iter().map(|s| id(s)).collect()
    }

    fn ok_reading(node: &str, round: u64, temp: f64, light: f64) -> Reading {
        Reading {
            node: id(node),
            round,
            time_ms: round * 1000,
            temp_c: Some(temp),
            light_raw: Some(light),
            gases: [Sample::NotEquipped; 3],
            status: ReadingStatus::Ok,
        }
    }

    fn snapshot(round: u64) -> Snapshot {
        Snapshot {
            round,
            time_ms: round * 1000,
            readings: NODES
                .iter()
                .map(|n| ok_reading(n, round, 25.0, 512.0))
                .collect(),
        }
    }

    #[test]
    fn record_format() {
        let mut r = ok_reading("N1", 0, 25.0, 512.0);
        assert_eq!(format_record(&r), "0,0,N1,25.0000,512,-,-,-,OK");
        r.gases = [Sample::Value(800.0), Sample::Null, Sample::NotEquipped];
        r.status = ReadingStatus::Ok;
        // Mixed NULL under OK is rejected on parse.
        assert!(parse_record(&format_record(&r)).is_err());
        let null = Reading {
            temp_c: None,
            light_raw: None,
            gases: [Sample::Null, Sample::Null, Sample::NotEquipped],
            status: ReadingStatus::Null,
            ..r
        };
        assert_eq!(format_record(&null), "0,0,N1,NULL,NULL,NULL,NULL,-,NULL");
        assert_eq!(parse_record(&format_record(&null)).unwrap(), null);
    }

    #[test]
    fn header_plus_six_records() {
        let mut log = TelemetryLog::with_nodes(nodes());
        log.append(snapshot(0)).unwrap();
        let text = String::from_utf8(log.to_bytes()).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines.len(), 7);
        assert_eq!(lines[0], "#WSNLOG v1 nodes=N1,1.1,1.2,N2,2.1,2.2");
        assert_eq!(lines[1], "0,0,N1,25.0000,512,-,-,-,OK");
        assert!(text.ends_with('\n'));
    }

    #[test]
    fn monotonic_rounds() {
        let mut log = TelemetryLog::with_nodes(nodes());
        log.append(snapshot(5)).unwrap();
        assert!(matches!(
            log.append(snapshot(5)),
            Err(TelemetryError::NonMonotonicRound { round: 5, last: 5 })
        ));
        let mut short = snapshot(6);
        short.readings.pop();
        assert!(matches!(log.append(short), Err(TelemetryError::NodeMismatch { round: 6 })));
    }

    #[test]
    fn latest_and_empty() {
        let mut log = TelemetryLog::with_nodes(nodes());
        assert!(matches!(log.latest(), Err(TelemetryError::EmptyLog)));
        for r in 0..100 {
            log.append(snapshot(r)).unwrap();
        }
        assert_eq!(log.latest().unwrap().round, 99);
        let s = snapshot(150);
        log.append(s.clone()).unwrap();
        assert_eq!(log.latest().unwrap(), &s);
    }

    #[test]
    fn truncated_log_reports_partial_round() {
        let mut log = TelemetryLog::with_nodes(nodes());
        for r in 0..11 {
            log.append(snapshot(r)).unwrap();
        }
        let bytes = log.to_bytes();
        let full_groups = 1 + 10 * 6;
        let text = String::from_utf8(bytes.clone()).unwrap();
        let offsets: Vec<usize> = text.match_indices('\n').map(|(i, _)| i + 1).collect();
        // Cut after two complete records of round 10 plus half a line.
        let cut = offsets[full_groups + 1] + 5;
        let parsed = parse_telemetry(&bytes[..cut]).unwrap();
        assert_eq!(parsed.snapshots.len(), 10);
        assert_eq!(parsed.snapshots.last().unwrap().round, 9);
        let partial = parsed.partial.clone().unwrap();
        assert_eq!(partial.round, Some(10));
        assert_eq!(partial.records, 2);
        assert!(matches!(
            parsed.require_complete(),
            Err(TelemetryError::TrailingPartialRound { complete, .. }) if complete.len() == 10
        ));

        // Cut at a group boundary: nothing partial.
        let parsed = parse_telemetry(&bytes[..offsets[full_groups - 1]]).unwrap();
        assert_eq!(parsed.snapshots.len(), 10);
        assert!(parsed.partial.is_none());

        // Only a partial round: latest is empty.
        let parsed = parse_telemetry(&bytes[..offsets[2]]).unwrap();
        assert!(matches!(parsed.latest(), Err(TelemetryError::EmptyLog)));
        assert!(parsed.partial.is_some());
    }

    #[test]
    fn malformed_records() {
        let bad_count = "#WSNLOG v1 nodes=N1\n0,0,N1,25.0000,512\n";
        assert!(matches!(
            parse_telemetry(bad_count.as_bytes()),
            Err(TelemetryError::MalformedRecord { line: 2, .. })
        ));
        let wrong_node = "#WSNLOG v1 nodes=N1,N2\n0,0,N2,25.0000,512,-,-,-,OK\n";
        assert!(matches!(
            parse_telemetry(wrong_node.as_bytes()),
            Err(TelemetryError::MalformedRecord { line: 2, .. })
        ));
        let backwards = "#WSNLOG v1 nodes=N1\n3,0,N1,25.0000,512,-,-,-,OK\n2,0,N1,25.0000,512,-,-,-,OK\n";
        assert!(matches!(
            parse_telemetry(backwards.as_bytes()),
            Err(TelemetryError::MalformedRecord { line: 3, .. })
        ));
        let temp_dash = "#WSNLOG v1 nodes=N1\n0,0,N1,-,512,-,-,-,OK\n";
        assert!(parse_telemetry(temp_dash.as_bytes()).is_err());
    }

    #[test]
    fn bad_headers() {
        for text in ["", "#WSNLOG v1 nodes=N1", "#WSNLOG v2 nodes=N1\n", "#WSNLOG v1 nodes=\n", "#WSNLOG v1 nodes=A,A\n"] {
            assert!(
                matches!(parse_telemetry(text.as_bytes()), Err(TelemetryError::BadHeader(_))),
                "{text:?}"
            );
        }
    }

    #[test]
    fn writer_produces_same_bytes_as_log() {
        let mut writer = TelemetryWriter::new(Vec::new(), nodes()).unwrap();
        let mut log = TelemetryLog::with_nodes(nodes());
        for r in 0..5 {
            writer.append(&snapshot(r)).unwrap();
            log.append(snapshot(r)).unwrap();
        }
        assert!(matches!(writer.append(&snapshot(2)), Err(TelemetryError::NonMonotonicRound { .. })));
        assert_eq!(writer.into_inner(), log.to_bytes());
    }

    #[test]
    fn tail_follows_growing_file() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("log.txt");
        let mut tail = TelemetryTail::new(&path);
        assert!(tail.poll().unwrap().is_empty());

        let mut log = TelemetryLog::with_nodes(nodes());
        for r in 0..3 {
            log.append(snapshot(r)).unwrap();
        }
        let bytes = log.to_bytes();
        let split = bytes.len() - 20;
        fs::write(&path, &bytes[..split]).unwrap();
        let first = tail.poll().unwrap();
        assert_eq!(first.iter().map(|s| s.round).collect::<Vec<_>>(), [0, 1]);
        fs::write(&path, &bytes).unwrap();
        let second = tail.poll().unwrap();
        assert_eq!(second, vec![snapshot(2)]);
        assert!(tail.poll().unwrap().is_empty());
        assert_eq!(tail.nodes().unwrap(), nodes().as_slice());
    }

    #[test]
    fn write_latest_replaces_file() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("latest.txt");
        write_latest(&path, &nodes(), &snapshot(1)).unwrap();
        write_latest(&path, &nodes(), &snapshot(2)).unwrap();
        let parsed = parse_telemetry(&fs::read(&path).unwrap()).unwrap();
        assert_eq!(parsed.snapshots, vec![snapshot(2)]);
    }

    fn sample_strategy(channel: Channel) -> impl Strategy<Value = f64> {
        match channel {
            Channel::TempC => (-640i64..=2000).prop_map(|k| -40.0 + k as f64 * 0.0625).boxed(),
            _ => (0u32..=65535).prop_map(f64::from).boxed(),
        }
    }

    fn reading_strategy(node: NodeId, round: u64, equipped: [bool; 3]) -> impl Strategy<Value = Reading> {
        (
            any::<bool>(),
            sample_strategy(Channel::TempC),
            sample_strategy(Channel::LightRaw),
            proptest::array::uniform3(sample_strategy(Channel::CoPpm)),
        )
            .prop_map(move |(ok, t, l, g)| {
                let gas = |i: usize| match (equipped[i], ok) {
                    (false, _) => Sample::NotEquipped,
                    (true, true) => Sample::Value(g[i]),
                    (true, false) => Sample::Null,
                };
                Reading {
                    node: node.clone(),
                    round,
                    time_ms: round * 250,
                    temp_c: ok.then_some(t),
                    light_raw: ok.then_some(l),
                    gases: [gas(0), gas(1), gas(2)],
                    status: if ok { ReadingStatus::Ok } else { ReadingStatus::Null },
                }
            })
    }

    fn log_strategy() -> impl Strategy<Value = TelemetryLog> {
        (
            proptest::collection::btree_set(0u64..10_000, 0..12),
            proptest::array::uniform3(any::<bool>()),
        )
            .prop_flat_map(|(rounds, equipped)| {
                let snaps: Vec<_> = rounds
                    .into_iter()
                    .map(|round| {
                        nodes()
                            .into_iter()
                            .map(|n| reading_strategy(n, round, equipped))
                            .collect::<Vec<_>>()
                            .prop_map(move |readings| Snapshot {
                                round,
                                time_ms: round * 250,
                                readings,
                            })
                    })
                    .collect();
                snaps.prop_map(|snaps| {
                    let mut log = TelemetryLog::with_nodes(nodes());
                    for s in snaps {
                        log.append(s).unwrap();
                    }
                    log
                })
            })
    }

    proptest! {
        #[test]
        fn parse_inverts_serialize(log in log_strategy()) {
            let parsed = parse_telemetry(&log.to_bytes()).unwrap();
            prop_assert!(parsed.partial.is_none());
            prop_assert_eq!(TelemetryLog::from_parsed(parsed), log);
        }

        #[test]
        fn any_prefix_yields_complete_groups_only(log in log_strategy(), cut in any::<proptest::sample::Index>()) {
            let bytes = log.to_bytes();
            let header_len = header_line(log.nodes()).len();
            let cut = header_len + cut.index(bytes.len() - header_len + 1);
            let parsed = parse_telemetry(&bytes[..cut]).unwrap();
            let n = parsed.snapshots.len();
            prop_assert_eq!(&parsed.snapshots[..], &log.snapshots()[..n]);
            let at_boundary = cut == bytes.len() || parsed.partial.is_none();
            if at_boundary {
                let consumed = header_len + log.snapshots()[..n].iter().map(|s| format_group(s).len()).sum::<usize>();
                prop_assert_eq!(consumed, cut);
            }
        }
    }
}
