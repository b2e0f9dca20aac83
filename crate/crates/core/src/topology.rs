//! Tree network structure: a base station root, cluster heads directly below
//! it, and leaflets below each cluster head.
//!
//! The tree is fixed at depth two. Children are kept in configuration order,
//! which is also the polling order used by the simulator and the record order
//! used by the telemetry log.

use std::collections::{BTreeMap, HashSet};
use std::fmt;
use std::str::FromStr;

use thiserror::Error;

/// Default label of the tree root.
pub const DEFAULT_ROOT: &str = "BS";

#[derive(Debug, Clone, PartialEq, Error)]
pub enum TopologyError {
    #[error("invalid node label {0:?}")]
    InvalidLabel(String),
    #[error("duplicate node label {0}")]
    DuplicateLabel(String),
    #[error("topology has no cluster heads")]
    EmptyTopology,
    #[error("link {from}-{to} is {distance:.2} m long, radio range is {range} m")]
    RangeViolation {
        from: String,
        to: String,
        distance: f64,
        range: f64,
    },
    #[error("unknown node {0}")]
    UnknownNode(String),
    #[error("node {0} is not a cluster head")]
    NotAClusterHead(String),
    #[error("invalid radio parameters: {0}")]
    InvalidRadio(String),
}

/// Node label such as `BS`, `N1` or `1.1`.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct NodeId(String);

impl NodeId {
    pub fn new(label: impl Into<String>) -> Result<Self, TopologyError> {
        let label = label.into();
        let valid = !label.is_empty()
            && label != "NULL"
            && label != "-"
            && label
                .bytes()
                .all(|b| b.is_ascii_graphic() && b != b',');
        if valid {
            Ok(NodeId(label))
        } else {
            Err(TopologyError::InvalidLabel(label))
        }
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl fmt::Display for NodeId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl FromStr for NodeId {
    type Err = TopologyError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        NodeId::new(s)
    }
}

impl AsRef<str> for NodeId {
    fn as_ref(&self) -> &str {
        &self.0
    }
}

impl PartialEq<str> for NodeId {
    fn eq(&self, other: &str) -> bool {
        self.0 == other
    }
}

impl PartialEq<&str> for NodeId {
    fn eq(&self, other: &&str) -> bool {
        self.0 == *other
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum NodeRole {
    BaseStation,
    ClusterHead,
    Leaflet,
}

/// Radio parameters shared by every link in the tree.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RadioSpec {
    range_m: f64,
    failure_prob: f64,
}

impl RadioSpec {
    pub fn new(range_m: f64, failure_prob: f64) -> Result<Self, TopologyError> {
        if !(range_m.is_finite() && range_m > 0.0) {
            return Err(TopologyError::InvalidRadio(format!(
                "range must be positive, got {range_m}"
            )));
        }
        if !(0.0..=1.0).contains(&failure_prob) {
            return Err(TopologyError::InvalidRadio(format!(
                "failure probability must be in [0, 1], got {failure_prob}"
            )));
        }
        Ok(RadioSpec {
            range_m,
            failure_prob,
        })
    }

    pub fn range_m(&self) -> f64 {
        self.range_m
    }

    pub fn failure_prob(&self) -> f64 {
        self.failure_prob
    }
}

pub type Position = (f64, f64);

/// One cluster head and its leaflets, in polling order.
#[derive(Debug, Clone, PartialEq)]
pub struct Cluster {
    pub head: NodeId,
    pub leaflets: Vec<NodeId>,
}

/// An undirected tree edge, stored as (parent, child).
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Link {
    pub parent: NodeId,
    pub child: NodeId,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TreeTopology {
    root: NodeId,
    clusters: Vec<Cluster>,
    radio: RadioSpec,
    positions: Option<BTreeMap<NodeId, Position>>,
}

impl TreeTopology {
    /// Builds a tree rooted at `BS`.
    pub fn build(
        clusters: Vec<Cluster>,
        radio: RadioSpec,
        positions: Option<BTreeMap<NodeId, Position>>,
    ) -> Result<Self, TopologyError> {
        Self::build_with_root(NodeId(DEFAULT_ROOT.to_string()), clusters, radio, positions)
    }

    pub fn build_with_root(
        root: NodeId,
        clusters: Vec<Cluster>,
        radio: RadioSpec,
        positions: Option<BTreeMap<NodeId, Position>>,
    ) -> Result<Self, TopologyError> {
        let topology = TreeTopology {
            root,
            clusters,
            radio,
            positions,
        };
        topology.validate()?;
        Ok(topology)
    }

    /// Convenience constructor from string labels.
    pub fn from_labels(
        clusters: &[(&str, &[&str])],
        radio: RadioSpec,
    ) -> Result<Self, TopologyError> {
        let clusters = clusters
            .iter()
            .map(|(head, leaflets)| {
                Ok(Cluster {
                    head: NodeId::new(*head)?,
                    leaflets: leaflets
                        .iter()
                        .map(|l| NodeId::new(*l))
                        .collect::<Result<_, _>>()?,
                })
            })
            .collect::<Result<Vec<_>, TopologyError>>()?;
        Self::build(clusters, radio, None)
    }

    /// Checks every structural invariant of the tree.
    pub fn validate(&self) -> Result<(), TopologyError> {
        if self.clusters.is_empty() {
            return Err(TopologyError::EmptyTopology);
        }
        let mut seen = HashSet::new();
        for id in self.all_nodes() {
            if !seen.insert(id) {
                return Err(TopologyError::DuplicateLabel(id.to_string()));
            }
        }
        if let Some(positions) = &self.positions {
            for id in positions.keys() {
                if !seen.contains(id) {
                    return Err(TopologyError::UnknownNode(id.to_string()));
                }
            }
            // Links with an unplaced endpoint are assumed in range.
            for link in self.links() {
                if let (Some(a), Some(b)) = (positions.get(&link.parent), positions.get(&link.child))
                {
                    let distance = (a.0 - b.0).hypot(a.1 - b.1);
                    if distance > self.radio.range_m {
                        return Err(TopologyError::RangeViolation {
                            from: link.parent.to_string(),
                            to: link.child.to_string(),
                            distance,
                            range: self.radio.range_m,
                        });
                    }
                }
            }
        }
        Ok(())
    }

    pub fn root(&self) -> &NodeId {
        &self.root
    }

    pub fn clusters(&self) -> &[Cluster] {
        &self.clusters
    }

    pub fn radio(&self) -> RadioSpec {
        self.radio
    }

    pub fn positions(&self) -> Option<&BTreeMap<NodeId, Position>> {
        self.positions.as_ref()
    }

    /// Returns a copy of this topology with a different radio.
    pub fn with_radio(&self, radio: RadioSpec) -> Result<Self, TopologyError> {
        let mut next = self.clone();
        next.radio = radio;
        next.validate()?;
        Ok(next)
    }

    fn all_nodes(&self) -> impl Iterator<Item = &NodeId> {
        std::iter::once(&self.root).chain(self.sensing_nodes())
    }

    /// Sensing nodes in deterministic topology order: each cluster head
    /// followed by its leaflets, clusters in configuration order.
    pub fn sensing_nodes(&self) -> impl Iterator<Item = &NodeId> {
        self.clusters
            .iter()
            .flat_map(|c| std::iter::once(&c.head).chain(c.leaflets.iter()))
    }

    pub fn sensing_node_count(&self) -> usize {
        self.clusters.iter().map(|c| 1 + c.leaflets.len()).sum()
    }

    pub fn cluster_head_count(&self) -> usize {
        self.clusters.len()
    }

    pub fn leaflet_count(&self) -> usize {
        self.clusters.iter().map(|c| c.leaflets.len()).sum()
    }

    pub fn contains(&self, id: &NodeId) -> bool {
        self.role(id).is_some()
    }

    pub fn role(&self, id: &NodeId) -> Option<NodeRole> {
        if *id == self.root {
            return Some(NodeRole::BaseStation);
        }
        for cluster in &self.clusters {
            if cluster.head == *id {
                return Some(NodeRole::ClusterHead);
            }
            if cluster.leaflets.contains(id) {
                return Some(NodeRole::Leaflet);
            }
        }
        None
    }

    pub fn cluster(&self, head: &NodeId) -> Option<&Cluster> {
        self.clusters.iter().find(|c| c.head == *head)
    }

    pub fn parent(&self, id: &NodeId) -> Option<&NodeId> {
        for cluster in &self.clusters {
            if cluster.head == *id {
                return Some(&self.root);
            }
            if cluster.leaflets.contains(id) {
                return Some(&cluster.head);
            }
        }
        None
    }

    /// Children of `id` in configuration order.
    pub fn children(&self, id: &NodeId) -> Vec<&NodeId> {
        if *id == self.root {
            return self.clusters.iter().map(|c| &c.head).collect();
        }
        self.cluster(id)
            .map(|c| c.leaflets.iter().collect())
            .unwrap_or_default()
    }

    /// All tree edges, base-station links first.
    pub fn links(&self) -> Vec<Link> {
        let mut links: Vec<Link> = self
            .clusters
            .iter()
            .map(|c| Link {
                parent: self.root.clone(),
                child: c.head.clone(),
            })
            .collect();
        for cluster in &self.clusters {
            links.extend(cluster.leaflets.iter().map(|l| Link {
                parent: cluster.head.clone(),
                child: l.clone(),
            }));
        }
        links
    }

    /// Resolves an edge given in either orientation.
    pub fn link_between(&self, a: &NodeId, b: &NodeId) -> Option<Link> {
        if self.parent(b) == Some(a) {
            Some(Link {
                parent: a.clone(),
                child: b.clone(),
            })
        } else if self.parent(a) == Some(b) {
            Some(Link {
                parent: b.clone(),
                child: a.clone(),
            })
        } else {
            None
        }
    }

    /// Returns a new topology with `leaf` attached under the cluster head
    /// `head`. The receiver is left untouched.
    pub fn add_leaflet(&self, head: &NodeId, leaf: NodeId) -> Result<Self, TopologyError> {
        match self.role(head) {
            None => return Err(TopologyError::UnknownNode(head.to_string())),
            Some(NodeRole::ClusterHead) => {}
            Some(_) => return Err(TopologyError::NotAClusterHead(head.to_string())),
        }
        if self.contains(&leaf) {
            return Err(TopologyError::DuplicateLabel(leaf.to_string()));
        }
        let mut next = self.clone();
        next.clusters
            .iter_mut()
            .find(|c| c.head == *head)
            .expect("role lookup found the head")
            .leaflets
            .push(leaf);
        next.validate()?;
        Ok(next)
    }

    fn ancestry(&self, id: &NodeId) -> Result<Vec<NodeId>, TopologyError> {
        if !self.contains(id) {
            return Err(TopologyError::UnknownNode(id.to_string()));
        }
        let mut chain = vec![id.clone()];
        let mut cursor = id;
        while let Some(parent) = self.parent(cursor) {
            chain.push(parent.clone());
            cursor = parent;
        }
        Ok(chain)
    }

    /// The unique tree path from `from` to `to`, endpoints included.
    pub fn route_path(&self, from: &NodeId, to: &NodeId) -> Result<Vec<NodeId>, TopologyError> {
        let up = self.ancestry(from)?;
        let down = self.ancestry(to)?;
        let (meet_up, meet_down) = up
            .iter()
            .enumerate()
            .find_map(|(i, n)| down.iter().position(|m| m == n).map(|j| (i, j)))
            .expect("every node shares the root");
        let mut path: Vec<NodeId> = up[..=meet_up].to_vec();
        path.extend(down[..meet_down].iter().rev().cloned());
        Ok(path)
    }

    /// Messages in one failure-free collection round: a poll and a reply on
    /// every link.
    pub fn round_message_count(&self) -> usize {
        2 * self.cluster_head_count() + 2 * self.leaflet_count()
    }

    /// Identifies the sensing node set and its order; stamped into telemetry
    /// headers.
    pub fn fingerprint(&self) -> String {
        self.sensing_nodes()
            .map(NodeId::as_str)
            .collect::<Vec<_>>()
            .join(",")
    }

    /// Writes the topology in the line-oriented configuration format.
    pub fn to_config(&self) -> String {
        let mut out = String::new();
        if self.root.as_str() != DEFAULT_ROOT {
            out.push_str(&format!("root {}\n", self.root));
        }
        out.push_str(&format!(
            "radio {} {}\n",
            self.radio.range_m, self.radio.failure_prob
        ));
        for cluster in &self.clusters {
            out.push_str("cluster ");
            out.push_str(cluster.head.as_str());
            for leaf in &cluster.leaflets {
                out.push(' ');
                out.push_str(leaf.as_str());
            }
            out.push('\n');
        }
        if let Some(positions) = &self.positions {
            for id in self.all_nodes() {
                if let Some((x, y)) = positions.get(id) {
                    out.push_str(&format!("pos {id} {x} {y}\n"));
                }
            }
        }
        out
    }
}
