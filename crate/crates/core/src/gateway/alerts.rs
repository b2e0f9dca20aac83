//! Threshold alerts with rising-edge semantics.
//!
//! A (rule, node) pair fires when its predicate becomes true and stays
//! silent until a round where the predicate is false or the value is
//! missing (NULL or unequipped).

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use thiserror::Error;

use crate::basestation::Snapshot;
use crate::environment::Channel;
use crate::topology::NodeId;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum AlertError {
    #[error("invalid rule id {0:?}")]
    InvalidId(String),
    #[error("duplicate rule id {0}")]
    DuplicateId(String),
    #[error("rule {0} has a non-finite threshold")]
    NonFiniteThreshold(String),
    #[error("unknown comparator {0:?} (expected GT or LT)")]
    UnknownComparator(String),
    #[error("unknown severity {0:?} (expected WARN or DANGER)")]
    UnknownSeverity(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Comparator {
    Greater,
    Less,
}

impl Comparator {
    pub fn holds(self, value: f64, threshold: f64) -> bool {
        match self {
            Comparator::Greater => value > threshold,
            Comparator::Less => value < threshold,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Comparator::Greater => "GT",
            Comparator::Less => "LT",
        }
    }
}

impl FromStr for Comparator {
    type Err = AlertError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "GT" => Ok(Comparator::Greater),
            "LT" => Ok(Comparator::Less),
            _ => Err(AlertError::UnknownComparator(s.to_string())),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Severity {
    Warn,
    Danger,
}

impl Severity {
    pub fn as_str(self) -> &'static str {
        match self {
            Severity::Warn => "WARN",
            Severity::Danger => "DANGER",
        }
    }
}

impl fmt::Display for Severity {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Severity {
    type Err = AlertError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "WARN" => Ok(Severity::Warn),
            "DANGER" => Ok(Severity::Danger),
            _ => Err(AlertError::UnknownSeverity(s.to_string())),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AlertRule {
    id: String,
    pub channel: Channel,
    pub comparator: Comparator,
    pub threshold: f64,
    pub severity: Severity,
}

impl AlertRule {
    pub fn new(
        id: impl Into<String>,
        channel: Channel,
        comparator: Comparator,
        threshold: f64,
        severity: Severity,
    ) -> Result<Self, AlertError> {
        let id = id.into();
        if id.is_empty() || !id.bytes().all(|b| b.is_ascii_graphic() && b != b',') {
            return Err(AlertError::InvalidId(id));
        }
        if !threshold.is_finite() {
            return Err(AlertError::NonFiniteThreshold(id));
        }
        Ok(AlertRule {
            id,
            channel,
            comparator,
            threshold,
            severity,
        })
    }

    pub fn id(&self) -> &str {
        &self.id
    }

    /// `alert <id> <channel> <GT|LT> <threshold> <WARN|DANGER>`
    pub fn to_config_line(&self) -> String {
        format!(
            "alert {} {} {} {} {}",
            self.id,
            self.channel,
            self.comparator.as_str(),
            self.threshold,
            self.severity
        )
    }
}

pub fn validate_rules(rules: &[AlertRule]) -> Result<(), AlertError> {
    for (i, rule) in rules.iter().enumerate() {
        if rules[..i].iter().any(|r| r.id == rule.id) {
            return Err(AlertError::DuplicateId(rule.id.clone()));
        }
    }
    Ok(())
}

/// Illustrative mine-safety defaults: methane, carbon monoxide, oxygen
/// deficiency.
pub fn default_rules() -> Vec<AlertRule> {
    vec![
        AlertRule::new("ch4-high", Channel::Ch4Ppm, Comparator::Greater, 10000.0, Severity::Danger),
        AlertRule::new("co-high", Channel::CoPpm, Comparator::Greater, 50.0, Severity::Danger),
        AlertRule::new("o2-low", Channel::O2Pct, Comparator::Less, 19.5, Severity::Warn),
    ]
    .into_iter()
    .collect::<Result<_, _>>()
    .expect("default rules are valid")
}

#[derive(Debug, Clone, PartialEq)]
pub struct Alert {
    pub rule_id: String,
    pub node: NodeId,
    /// Round in which the predicate became true.
    pub round: u64,
    pub value: f64,
    pub channel: Channel,
    pub severity: Severity,
    pub active: bool,
}

impl Alert {
    /// `<rule_id>,<node>,<round>,<value>,<severity>`
    pub fn line(&self) -> String {
        format!(
            "{},{},{},{},{}",
            self.rule_id,
            self.node,
            self.round,
            self.channel.format_value(self.value),
            self.severity
        )
    }
}

/// Alerts currently active, keyed by (rule id, node).
#[derive(Debug, Clone, Default, PartialEq)]
pub struct AlertState {
    active: BTreeMap<(String, NodeId), Alert>,
}

impl AlertState {
    pub fn is_active(&self, rule_id: &str, node: &NodeId) -> bool {
        self.active.contains_key(&(rule_id.to_string(), node.clone()))
    }

    pub fn len(&self) -> usize {
        self.active.len()
    }

    pub fn is_empty(&self) -> bool {
        self.active.is_empty()
    }

    /// Active alerts in rule order, then in the given node order.
    pub fn ordered<'a>(&'a self, rules: &'a [AlertRule], nodes: &'a [NodeId]) -> impl Iterator<Item = &'a Alert> + 'a {
        rules.iter().flat_map(move |rule| {
            nodes
                .iter()
                .filter_map(move |n| self.active.get(&(rule.id.clone(), n.clone())))
        })
    }
}

/// Evaluates every rule against every node of `snapshot`. Returns the next
/// state and the alerts that fired this round, in rule-then-node order.
pub fn evaluate_alerts(rules: &[AlertRule], snapshot: &Snapshot, prior: &AlertState) -> (AlertState, Vec<Alert>) {
    let mut next = AlertState::default();
    let mut fired = Vec::new();
    for rule in rules {
        for reading in &snapshot.readings {
            let value = if reading.is_ok() {
                reading.sample(rule.channel).value()
            } else {
                None
            };
            let Some(value) = value.filter(|v| rule.comparator.holds(*v, rule.threshold)) else {
                continue;
            };
            let key = (rule.id.clone(), reading.node.clone());
            let alert = match prior.active.get(&key) {
                Some(existing) => existing.clone(),
                None => {
                    let alert = Alert {
                        rule_id: rule.id.clone(),
                        node: reading.node.clone(),
                        round: snapshot.round,
                        value,
                        channel: rule.channel,
                        severity: rule.severity,
                        active: true,
                    };
                    fired.push(alert.clone());
                    alert
                }
            };
            next.active.insert(key, alert);
        }
    }
    (next, fired)
}
