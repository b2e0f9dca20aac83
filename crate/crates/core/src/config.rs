//! Line-oriented run configuration.
//!
//! ```text
//! # topology
//! radio 30 0.0
//! cluster N1 1.1 1.2
//! cluster N2 2.1 2.2
//! pos N1 10 0
//! # environment
//! seed 7
//! env TEMP_C 25.0 walk 0.05
//! env LIGHT_RAW 512
//! env CO_PPM 10 script 0:10,40:80,60:10
//! sensor TEMP_C 0.5 0.0625 -40 125
//! offset 1.1 TEMP_C -0.25
//! # simulation
//! rounds 100
//! period_ms 1000
//! hop_ms 10
//! fail N1 1.1 10 20
//! # gateway
//! alert co-high CO_PPM GT 50 DANGER
//! ```
//!
//! `#` starts a comment. A gas channel is equipped exactly when it has an
//! `env` line. Temperature and light are always equipped and default to a
//! constant 25.0 C and 512 counts.

use std::collections::{BTreeMap, HashSet};
use std::fmt;
use std::str::FromStr;

use thiserror::Error;

use crate::environment::{Channel, ChannelField, Drift, EnvField, SensorSpec};
use crate::gateway::alerts::{self, AlertRule};
use crate::netsim::{Outage, Sensors, SimConfig};
use crate::topology::{Cluster, NodeId, Position, RadioSpec, TreeTopology, DEFAULT_ROOT};

pub const DEFAULT_ROUNDS: u64 = 100;
pub const DEFAULT_TEMP_C: f64 = 25.0;
pub const DEFAULT_LIGHT_RAW: f64 = 512.0;

#[derive(Debug, Clone, PartialEq, Error)]
pub struct ConfigError {
    pub line: Option<usize>,
    pub message: String,
}

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.line {
            Some(line) => write!(f, "line {line}: {}", self.message),
            None => f.write_str(&self.message),
        }
    }
}

fn at(line: usize, message: impl fmt::Display) -> ConfigError {
    ConfigError {
        line: Some(line),
        message: message.to_string(),
    }
}

fn global(message: impl fmt::Display) -> ConfigError {
    ConfigError {
        line: None,
        message: message.to_string(),
    }
}

/// Everything `wsn run` needs.
#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub sim: SimConfig,
    pub rules: Vec<AlertRule>,
}

fn parse_num<T: FromStr>(line: usize, what: &str, token: &str) -> Result<T, ConfigError> {
    token
        .parse()
        .map_err(|_| at(line, format!("bad {what} {token:?}")))
}

fn parse_f64(line: usize, what: &str, token: &str) -> Result<f64, ConfigError> {
    let v: f64 = parse_num(line, what, token)?;
    if v.is_finite() {
        Ok(v)
    } else {
        Err(at(line, format!("{what} must be finite")))
    }
}

fn node(line: usize, token: &str) -> Result<NodeId, ConfigError> {
    NodeId::new(token).map_err(|e| at(line, e))
}

fn channel(line: usize, token: &str) -> Result<Channel, ConfigError> {
    token.parse().map_err(|e| at(line, e))
}

fn parse_drift(line: usize, args: &[&str]) -> Result<Drift, ConfigError> {
    match args {
        [] => Ok(Drift::None),
        ["walk", sigma] => Ok(Drift::RandomWalk {
            sigma: parse_f64(line, "walk sigma", sigma)?,
        }),
        ["script", points] => {
            let points = points
                .split(',')
                .map(|p| {
                    let (round, value) = p
                        .split_once(':')
                        .ok_or_else(|| at(line, format!("script point {p:?} is not <round>:<value>")))?;
                    Ok((parse_num(line, "script round", round)?, parse_f64(line, "script value", value)?))
                })
                .collect::<Result<Vec<(u64, f64)>, ConfigError>>()?;
            Ok(Drift::Scripted(points))
        }
        _ => Err(at(line, "expected `walk <sigma>` or `script <round>:<value>,...`")),
    }
}

#[derive(Default)]
struct Draft {
    root: Option<NodeId>,
    radio: Option<(usize, f64, f64)>,
    clusters: Vec<Cluster>,
    labels: HashSet<NodeId>,
    positions: BTreeMap<NodeId, Position>,
    envs: BTreeMap<Channel, (usize, ChannelField)>,
    specs: BTreeMap<Channel, (usize, SensorSpec)>,
    offsets: Vec<(usize, NodeId, Channel, f64)>,
    seed: u64,
    rounds: Option<(usize, u64)>,
    period: Option<(usize, u64)>,
    hop: Option<(usize, u64)>,
    fails: Vec<(usize, NodeId, NodeId, u64, u64)>,
    rules: Vec<AlertRule>,
}

impl Draft {
    fn claim(&mut self, line: usize, id: &NodeId) -> Result<(), ConfigError> {
        if self.labels.insert(id.clone()) {
            Ok(())
        } else {
            Err(at(line, format!("duplicate node label {id}")))
        }
    }

    fn directive(&mut self, line: usize, words: &[&str]) -> Result<(), ConfigError> {
        let arity = |n: usize, usage: &str| {
            if words.len() == n {
                Ok(())
            } else {
                Err(at(line, format!("usage: {usage}")))
            }
        };
        match words[0] {
            "root" => {
                arity(2, "root <id>")?;
                self.root = Some(node(line, words[1])?);
            }
            "radio" => {
                arity(3, "radio <range_m> <failure_prob>")?;
                let range = parse_f64(line, "range", words[1])?;
                let prob = parse_f64(line, "failure probability", words[2])?;
                RadioSpec::new(range, prob).map_err(|e| at(line, e))?;
                self.radio = Some((line, range, prob));
            }
            "cluster" => {
                if words.len() < 2 {
                    return Err(at(line, "usage: cluster <head_id> <leaf_id>..."));
                }
                let head = node(line, words[1])?;
                self.claim(line, &head)?;
                let mut leaflets = Vec::new();
                for w in &words[2..] {
                    let leaf = node(line, w)?;
                    self.claim(line, &leaf)?;
                    leaflets.push(leaf);
                }
                self.clusters.push(Cluster { head, leaflets });
            }
            "pos" => {
                arity(4, "pos <node_id> <x> <y>")?;
                let id = node(line, words[1])?;
                let x = parse_f64(line, "x", words[2])?;
                let y = parse_f64(line, "y", words[3])?;
                self.positions.insert(id, (x, y));
            }
            "env" => {
                if words.len() < 3 {
                    return Err(at(line, "usage: env <channel> <baseline> [walk <sigma> | script <round>:<value>,...]"));
                }
                let ch = channel(line, words[1])?;
                let baseline = parse_f64(line, "baseline", words[2])?;
                let drift = parse_drift(line, &words[3..])?;
                let field = ChannelField { baseline, drift };
                // Validate now to report the right line.
                EnvField::new(0)
                    .with_channel(ch, field.clone())
                    .map_err(|e| at(line, e))?;
                self.envs.insert(ch, (line, field));
            }
            "sensor" => {
                arity(6, "sensor <channel> <accuracy> <quantum> <min> <max>")?;
                let ch = channel(line, words[1])?;
                let spec = SensorSpec::new(
                    ch,
                    parse_f64(line, "accuracy", words[2])?,
                    parse_f64(line, "quantum", words[3])?,
                    parse_f64(line, "min", words[4])?,
                    parse_f64(line, "max", words[5])?,
                )
                .map_err(|e| at(line, e))?;
                self.specs.insert(ch, (line, spec));
            }
            "offset" => {
                arity(4, "offset <node_id> <channel> <value>")?;
                self.offsets.push((
                    line,
                    node(line, words[1])?,
                    channel(line, words[2])?,
                    parse_f64(line, "offset", words[3])?,
                ));
            }
            "seed" => {
                arity(2, "seed <u64>")?;
                self.seed = parse_num(line, "seed", words[1])?;
            }
            "rounds" => {
                arity(2, "rounds <n>")?;
                let n: u64 = parse_num(line, "round count", words[1])?;
                if n < 1 {
                    return Err(at(line, "rounds must be at least 1"));
                }
                self.rounds = Some((line, n));
            }
            "period_ms" => {
                arity(2, "period_ms <n>")?;
                let n: u64 = parse_num(line, "period", words[1])?;
                if n == 0 {
                    return Err(at(line, "period_ms must be positive"));
                }
                self.period = Some((line, n));
            }
            "hop_ms" => {
                arity(2, "hop_ms <n>")?;
                self.hop = Some((line, parse_num(line, "hop latency", words[1])?));
            }
            "fail" => {
                arity(5, "fail <link_from> <link_to> <round_start> <round_end>")?;
                let start: u64 = parse_num(line, "round", words[3])?;
                let end: u64 = parse_num(line, "round", words[4])?;
                if start > end {
                    return Err(at(line, "outage ends before it starts"));
                }
                self.fails.push((line, node(line, words[1])?, node(line, words[2])?, start, end));
            }
            "alert" => {
                arity(6, "alert <id> <GT|LT> ... (alert <id> <channel> <GT|LT> <threshold> <WARN|DANGER>)")?;
                let rule = AlertRule::new(
                    words[1],
                    channel(line, words[2])?,
                    words[3].parse().map_err(|e| at(line, e))?,
                    parse_f64(line, "threshold", words[4])?,
                    words[5].parse().map_err(|e| at(line, e))?,
                )
                .map_err(|e| at(line, e))?;
                if self.rules.iter().any(|r| r.id() == rule.id()) {
                    return Err(at(line, format!("duplicate rule id {}", rule.id())));
                }
                self.rules.push(rule);
            }
            other => return Err(at(line, format!("unknown directive {other:?}"))),
        }
        Ok(())
    }

    fn topology(&self) -> Result<TreeTopology, ConfigError> {
        let (_, range, prob) = self.radio.ok_or_else(|| global("missing `radio` line"))?;
        let radio = RadioSpec::new(range, prob).map_err(global)?;
        let root = self
            .root
            .clone()
            .unwrap_or_else(|| NodeId::new(DEFAULT_ROOT).expect("valid"));
        let positions = (!self.positions.is_empty()).then(|| self.positions.clone());
        TreeTopology::build_with_root(root, self.clusters.clone(), radio, positions).map_err(global)
    }

    fn finish(self) -> Result<RunConfig, ConfigError> {
        let topology = self.topology()?;

        let mut field = EnvField::new(self.seed);
        let mut envs = self.envs.clone();
        envs.entry(Channel::TempC)
            .or_insert((0, ChannelField::constant(DEFAULT_TEMP_C)));
        envs.entry(Channel::LightRaw)
            .or_insert((0, ChannelField::constant(DEFAULT_LIGHT_RAW)));
        for (ch, (line, f)) in &envs {
            field.set_channel(*ch, f.clone()).map_err(|e| at(*line, e))?;
        }
        for (line, id, ch, value) in &self.offsets {
            if !topology.sensing_nodes().any(|n| n == id) {
                return Err(at(*line, format!("unknown sensing node {id}")));
            }
            field.set_offset(id.clone(), *ch, *value);
        }

        let spec_for = |ch: Channel| {
            self.specs
                .get(&ch)
                .map(|(_, s)| *s)
                .unwrap_or_else(|| SensorSpec::default_for(ch))
        };
        let mut sensors = Sensors::new(spec_for(Channel::TempC), spec_for(Channel::LightRaw));
        for ch in Channel::GASES {
            if envs.contains_key(&ch) {
                sensors.equip(spec_for(ch));
            } else if let Some((line, _)) = self.specs.get(&ch) {
                return Err(at(*line, format!("sensor {ch} has no `env` line")));
            }
        }

        let mut sim = SimConfig::new(topology, field, sensors, self.rounds.map_or(DEFAULT_ROUNDS, |r| r.1));
        sim.seed = self.seed;
        if let Some((_, p)) = self.period {
            sim.round_period_ms = p;
        }
        if let Some((_, h)) = self.hop {
            sim.hop_latency_ms = h;
        }
        for (line, a, b, start, end) in &self.fails {
            let link = sim
                .topology
                .link_between(a, b)
                .ok_or_else(|| at(*line, format!("{a}-{b} is not a tree link")))?;
            sim.outages.push(Outage {
                link,
                rounds: *start..=*end,
            });
        }
        let timing_line = self.period.or(self.hop).map(|(l, _)| l);
        sim.validate().map_err(|e| ConfigError {
            line: timing_line,
            message: e.to_string(),
        })?;
        alerts::validate_rules(&self.rules).map_err(global)?;
        Ok(RunConfig {
            sim,
            rules: self.rules,
        })
    }
}

pub fn parse_run_config(text: &str) -> Result<RunConfig, ConfigError> {
    let mut draft = Draft::default();
    for (i, raw) in text.lines().enumerate() {
        let content = raw.split('#').next().unwrap_or("");
        let words: Vec<&str> = content.split_whitespace().collect();
        if words.is_empty() {
            continue;
        }
        draft.directive(i + 1, &words)?;
    }
    draft.finish()
}

/// Parses just the topology part of a configuration.
pub fn parse_topology(text: &str) -> Result<TreeTopology, ConfigError> {
    parse_run_config(text).map(|c| c.sim.topology)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    const LAB: &str = "radio 30 0.0\ncluster N1 1.1 1.2\ncluster N2 2.1 2.2\n";

    #[test]
    fn lab_config() {
        let cfg = parse_run_config(LAB).unwrap();
        let t = &cfg.sim.topology;
        assert_eq!(t.fingerprint(), "N1,1.1,1.2,N2,2.1,2.2");
        assert_eq!(t.radio().range_m(), 30.0);
        assert_eq!(cfg.sim.rounds, DEFAULT_ROUNDS);
        assert_eq!(cfg.sim.round_period_ms, 1000);
        assert!(!cfg.sim.sensors.is_equipped(Channel::CoPpm));
        assert!(cfg.rules.is_empty());
        assert_eq!(t.to_config(), "radio 30 0\ncluster N1 1.1 1.2\ncluster N2 2.1 2.2\n");
        assert_eq!(&parse_topology(&t.to_config()).unwrap(), t);
    }

    #[test]
    fn full_config() {
        let text = "\
# demo
radio 100 0.05   # lossy
cluster N1 1.1 1.2
cluster N2 2.1
pos BS 0 0
pos N1 40 0
seed 9
env TEMP_C 22 walk 0.1
env CO_PPM 10 script 0:10,40:80
offset 1.1 TEMP_C -0.5
rounds 50
period_ms 500
hop_ms 5
fail N1 1.1 10 20
fail BS N2 3 3
alert co-high CO_PPM GT 50 DANGER
";
        let cfg = parse_run_config(text).unwrap();
        assert_eq!(cfg.sim.seed, 9);
        assert_eq!(cfg.sim.field.seed(), 9);
        assert_eq!(cfg.sim.rounds, 50);
        assert_eq!(cfg.sim.round_period_ms, 500);
        assert_eq!(cfg.sim.hop_latency_ms, 5);
        assert_eq!(cfg.sim.outages.len(), 2);
        assert_eq!(cfg.sim.outages[1].link.parent.as_str(), "BS");
        assert!(cfg.sim.sensors.is_equipped(Channel::CoPpm));
        assert!(!cfg.sim.sensors.is_equipped(Channel::Ch4Ppm));
        assert_eq!(cfg.sim.field.truth_at(Channel::CoPpm, 45).unwrap(), 80.0);
        assert_eq!(cfg.sim.field.truth_at(Channel::LightRaw, 0).unwrap(), 512.0);
        assert_eq!(cfg.rules.len(), 1);
    }

    #[test]
    fn errors_name_lines() {
        let cases = [
            ("radio 30 0\ncluster N1\nrounds 0\n", 3),
            ("radio 30 0\ncluster N1 1.1\ncluster N2 1.1\n", 3),
            ("radio 30 0\ncluster N1\nbogus 1\n", 3),
            ("radio 30 0\ncluster N1\nenv TEMP_C 20 script 5:1,5:2\n", 3),
            ("radio 30 2\ncluster N1\n", 1),
            ("radio 30 0\ncluster N1 1.1\nfail 1.1 BS 0 1\n", 3),
            ("radio 30 0\ncluster N1\nperiod_ms 30\nhop_ms 10\n", 3),
            ("radio 30 0\ncluster N1\nalert a CO_PPM GE 5 WARN\n", 3),
            ("radio 30 0\ncluster N1\nsensor CO_PPM 1 1 0 100\n", 3),
            ("radio 30 0\ncluster N1\nenv NITROGEN 1\n", 3),
        ];
        for (text, line) in cases {
            let err = parse_run_config(text).unwrap_err();
            assert_eq!(err.line, Some(line), "{text:?}: {err}");
        }
        assert!(parse_run_config("cluster N1\n").unwrap_err().message.contains("radio"));
        let err = parse_run_config("radio 30 0\n").unwrap_err();
        assert!(err.message.contains("no cluster heads"), "{err}");
        let far = "radio 100 0\ncluster N1 1.1\npos N1 0 0\npos 1.1 150 0\n";
        assert!(parse_run_config(far).unwrap_err().message.contains("radio range"));
    }

    fn topology_strategy() -> impl Strategy<Value = TreeTopology> {
        (
            proptest::collection::vec(0usize..4, 1..5),
            1u32..200,
            0u32..=100,
            any::<bool>(),
        )
            .prop_map(|(leaf_counts, range, prob, placed)| {
                let clusters: Vec<Cluster> = leaf_counts
                    .iter()
                    .enumerate()
                    .map(|(h, &n)| Cluster {
                        head: NodeId::new(format!("N{}", h + 1)).unwrap(),
                        leaflets: (0..n)
                            .map(|l| NodeId::new(format!("{}.{}", h + 1, l + 1)).unwrap())
                            .collect(),
                    })
                    .collect();
                let positions = placed.then(|| {
                    clusters
                        .iter()
                        .flat_map(|c| std::iter::once(&c.head).chain(&c.leaflets))
                        .map(|id| (id.clone(), (0.25, -0.5)))
                        .collect()
                });
                TreeTopology::build(
                    clusters,
                    RadioSpec::new(range as f64 / 4.0, prob as f64 / 100.0).unwrap(),
                    positions,
                )
                .unwrap()
            })
    }

    proptest! {
        #[test]
        fn topology_config_round_trip(t in topology_strategy()) {
            let text = t.to_config();
            let parsed = parse_topology(&text).unwrap();
            prop_assert_eq!(&parsed, &t);
            prop_assert_eq!(parsed.to_config(), text);
        }
    }
}
