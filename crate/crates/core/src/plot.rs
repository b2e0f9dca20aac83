//! Per-node time series for external plotting.

use thiserror::Error;

use crate::basestation::Snapshot;
use crate::environment::Channel;
use crate::netsim::Sample;
use crate::topology::NodeId;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum PlotError {
    #[error("unknown node {0}")]
    UnknownNode(String),
    #[error("channel {0} is not recorded in this log")]
    UnknownChannel(String),
}

#[derive(Debug, Clone, PartialEq)]
pub struct PlotSeries {
    pub node: NodeId,
    pub channel: Channel,
    /// One point per round; `None` marks a gap.
    pub points: Vec<(u64, Option<f64>)>,
}

impl PlotSeries {
    /// Extracts `node`'s `channel` from every snapshot. `nodes` is the log's
    /// declared node list.
    pub fn extract(snapshots: &[Snapshot], nodes: &[NodeId], node: &NodeId, channel: Channel) -> Result<Self, PlotError> {
        if !nodes.contains(node) {
            return Err(PlotError::UnknownNode(node.to_string()));
        }
        let mut equipped = snapshots.is_empty();
        let mut points = Vec::with_capacity(snapshots.len());
        for snapshot in snapshots {
            let sample = snapshot
                .reading(node)
                .map_or(Sample::Null, |r| r.sample(channel));
            equipped |= sample != Sample::NotEquipped;
            points.push((snapshot.round, sample.value()));
        }
        if !equipped {
            return Err(PlotError::UnknownChannel(channel.name().to_string()));
        }
        Ok(PlotSeries {
            node: node.clone(),
            channel,
            points,
        })
    }

    /// `round,value` rows; gaps leave the value empty.
    pub fn to_csv(&self) -> String {
        let mut out = String::new();
        for (round, value) in &self.points {
            out.push_str(&round.to_string());
            out.push(',');
            if let Some(v) = value {
                out.push_str(&self.channel.format_value(*v));
            }
            out.push('\n');
        }
        out
    }

    pub fn gap_rounds(&self) -> Vec<u64> {
        self.points
            .iter()
            .filter(|(_, v)| v.is_none())
            .map(|(r, _)| *r)
            .collect()
    }
}
