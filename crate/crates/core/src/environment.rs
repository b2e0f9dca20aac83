//! Ground-truth environmental fields and the sensors that sample them.
//!
//! All nodes of a run share one [`EnvField`]; optional per-node offsets shift
//! a node's truth. Sensors add bounded uniform noise, quantize onto their
//! grid and saturate at their range.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;
use std::sync::Mutex;

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use thiserror::Error;

use crate::rng::{self, Purpose};
use crate::topology::NodeId;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum EnvError {
    #[error("unknown channel {0}")]
    UnknownChannel(String),
    #[error("invalid sensor spec for {channel}: {reason}")]
    InvalidSensor { channel: Channel, reason: String },
    #[error("invalid field for {channel}: {reason}")]
    InvalidField { channel: Channel, reason: String },
}

/// A sensed quantity. Declaration order is the telemetry column order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Channel {
    TempC,
    LightRaw,
    Ch4Ppm,
    CoPpm,
    O2Pct,
}

impl Channel {
    pub const ALL: [Channel; 5] = [
        Channel::TempC,
        Channel::LightRaw,
        Channel::Ch4Ppm,
        Channel::CoPpm,
        Channel::O2Pct,
    ];

    pub const GASES: [Channel; 3] = [Channel::Ch4Ppm, Channel::CoPpm, Channel::O2Pct];

    pub fn name(self) -> &'static str {
        match self {
            Channel::TempC => "TEMP_C",
            Channel::LightRaw => "LIGHT_RAW",
            Channel::Ch4Ppm => "CH4_PPM",
            Channel::CoPpm => "CO_PPM",
            Channel::O2Pct => "O2_PCT",
        }
    }

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn is_gas(self) -> bool {
        Channel::GASES.contains(&self)
    }

    /// Decimal places used when the channel is written out.
    pub fn decimals(self) -> usize {
        match self {
            Channel::TempC => 4,
            _ => 0,
        }
    }

    pub fn format_value(self, value: f64) -> String {
        format!("{:.*}", self.decimals(), value)
    }
}

impl fmt::Display for Channel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Channel {
    type Err = EnvError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Channel::ALL
            .into_iter()
            .find(|c| c.name() == s)
            .ok_or_else(|| EnvError::UnknownChannel(s.to_string()))
    }
}

/// Accuracy, resolution and range of one sensor channel.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SensorSpec {
    channel: Channel,
    accuracy: f64,
    quantum: f64,
    min: f64,
    max: f64,
}

impl SensorSpec {
    /// Validates a spec. Besides the basic bounds, the range must span a
    /// whole number of quanta, and channels written as integers need an
    /// integral grid so every measurement survives the telemetry format.
    pub fn new(
        channel: Channel,
        accuracy: f64,
        quantum: f64,
        min: f64,
        max: f64,
    ) -> Result<Self, EnvError> {
        let bad = |reason: &str| {
            Err(EnvError::InvalidSensor {
                channel,
                reason: reason.to_string(),
            })
        };
        if !(accuracy.is_finite() && accuracy >= 0.0) {
            return bad("accuracy must be non-negative");
        }
        if !(quantum.is_finite() && quantum > 0.0) {
            return bad("quantum must be positive");
        }
        if !(min.is_finite() && max.is_finite() && min < max) {
            return bad("range must satisfy min < max");
        }
        let steps = (max - min) / quantum;
        if (steps - steps.round()).abs() > 1e-9 {
            return bad("range must be a whole number of quanta");
        }
        if channel.decimals() == 0 && (quantum.fract() != 0.0 || min.fract() != 0.0) {
            return bad("integer channels need an integral quantum and minimum");
        }
        Ok(SensorSpec {
            channel,
            accuracy,
            quantum,
            min,
            max,
        })
    }

    /// Datasheet-typical defaults for each channel.
    pub fn default_for(channel: Channel) -> Self {
        let (accuracy, quantum, min, max) = match channel {
            // 12-bit digital temperature sensor, +/-0.5 C.
            Channel::TempC => (0.5, 0.0625, -40.0, 125.0),
            // 16-bit ambient light count.
            Channel::LightRaw => (8.0, 1.0, 0.0, 65535.0),
            Channel::Ch4Ppm => (50.0, 1.0, 0.0, 50000.0),
            Channel::CoPpm => (5.0, 1.0, 0.0, 1000.0),
            Channel::O2Pct => (0.5, 1.0, 0.0, 100.0),
        };
        SensorSpec::new(channel, accuracy, quantum, min, max).expect("defaults are valid")
    }

    pub fn channel(&self) -> Channel {
        self.channel
    }
    pub fn accuracy(&self) -> f64 {
        self.accuracy
    }
    pub fn quantum(&self) -> f64 {
        self.quantum
    }
    pub fn min(&self) -> f64 {
        self.min
    }
    pub fn max(&self) -> f64 {
        self.max
    }

    /// Worst-case |measurement - truth| for in-range truth.
    pub fn error_bound(&self) -> f64 {
        self.accuracy + self.quantum / 2.0
    }

    /// Measures `truth` with a noise draw in [-1, 1].
    pub fn sense(&self, truth: f64, noise_draw: f64) -> f64 {
        let noisy = truth + noise_draw.clamp(-1.0, 1.0) * self.accuracy;
        let steps = ((noisy - self.min) / self.quantum).round();
        let max_steps = ((self.max - self.min) / self.quantum).round();
        self.min + steps.clamp(0.0, max_steps) * self.quantum
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Drift {
    None,
    /// Gaussian step with standard deviation `sigma` per round.
    RandomWalk { sigma: f64 },
    /// Step-hold breakpoints `(round, value)`, strictly increasing in round.
    Scripted(Vec<(u64, f64)>),
}

#[derive(Debug, Clone, PartialEq)]
pub struct ChannelField {
    pub baseline: f64,
    pub drift: Drift,
}

impl ChannelField {
    pub fn constant(baseline: f64) -> Self {
        ChannelField {
            baseline,
            drift: Drift::None,
        }
    }
}

/// Random-walk paths computed so far, with the generator positioned after
/// the last step. Rounds are queried out of order, so without this every
/// query would replay the walk from round 0. Pure memo: ignored by `Clone`
/// and `PartialEq`.
#[derive(Default)]
struct WalkCache(Mutex<BTreeMap<Channel, (ChaCha8Rng, Vec<f64>)>>);

impl WalkCache {
    fn value(&self, seed: u64, channel: Channel, baseline: f64, sigma: f64, round: u64) -> f64 {
        let mut paths = self.0.lock().unwrap_or_else(|e| e.into_inner());
        let (walk, path) = paths.entry(channel).or_insert_with(|| {
            (
                rng::stream(seed, Purpose::Walk, channel.index() as u64),
                vec![baseline],
            )
        });
        while path.len() as u64 <= round {
            let step: f64 = walk.sample(StandardNormal);
            let next = path[path.len() - 1] + sigma * step;
            path.push(next);
        }
        path[round as usize]
    }

    fn clear(&mut self) {
        self.0.get_mut().unwrap_or_else(|e| e.into_inner()).clear();
    }
}

impl Clone for WalkCache {
    fn clone(&self) -> Self {
        WalkCache::default()
    }
}

impl PartialEq for WalkCache {
    fn eq(&self, _: &Self) -> bool {
        true
    }
}

impl fmt::Debug for WalkCache {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("WalkCache")
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EnvField {
    channels: BTreeMap<Channel, ChannelField>,
    offsets: BTreeMap<(NodeId, Channel), f64>,
    seed: u64,
    walks: WalkCache,
}

impl EnvField {
    pub fn new(seed: u64) -> Self {
        EnvField {
            channels: BTreeMap::new(),
            offsets: BTreeMap::new(),
            seed,
            walks: WalkCache::default(),
        }
    }

    pub fn with_channel(mut self, channel: Channel, field: ChannelField) -> Result<Self, EnvError> {
        self.set_channel(channel, field)?;
        Ok(self)
    }

    pub fn set_channel(&mut self, channel: Channel, field: ChannelField) -> Result<(), EnvError> {
        let bad = |reason: &str| {
            Err(EnvError::InvalidField {
                channel,
                reason: reason.to_string(),
            })
        };
        if !field.baseline.is_finite() {
            return bad("baseline must be finite");
        }
        match &field.drift {
            Drift::None => {}
            Drift::RandomWalk { sigma } => {
                if !(sigma.is_finite() && *sigma >= 0.0) {
                    return bad("walk sigma must be non-negative");
                }
            }
            Drift::Scripted(points) => {
                if points.is_empty() {
                    return bad("script needs at least one breakpoint");
                }
                if points.windows(2).any(|w| w[0].0 >= w[1].0) {
                    return bad("script breakpoints must be strictly increasing in round");
                }
                if points.iter().any(|(_, v)| !v.is_finite()) {
                    return bad("script values must be finite");
                }
            }
        }
        self.channels.insert(channel, field);
        self.walks.clear();
        Ok(())
    }

    pub fn set_offset(&mut self, node: NodeId, channel: Channel, offset: f64) {
        self.offsets.insert((node, channel), offset);
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn set_seed(&mut self, seed: u64) {
        self.seed = seed;
        self.walks.clear();
    }

    pub fn has_channel(&self, channel: Channel) -> bool {
        self.channels.contains_key(&channel)
    }

    pub fn channel(&self, channel: Channel) -> Option<&ChannelField> {
        self.channels.get(&channel)
    }

    pub fn channels(&self) -> impl Iterator<Item = (Channel, &ChannelField)> {
        self.channels.iter().map(|(c, f)| (*c, f))
    }

    pub fn offsets(&self) -> impl Iterator<Item = (&NodeId, Channel, f64)> {
        self.offsets.iter().map(|((n, c), v)| (n, *c, *v))
    }

    /// Room-level truth for `channel` at `round`.
    pub fn truth_at(&self, channel: Channel, round: u64) -> Result<f64, EnvError> {
        let field = self
            .channels
            .get(&channel)
            .ok_or_else(|| EnvError::UnknownChannel(channel.name().to_string()))?;
        Ok(match &field.drift {
            Drift::None => field.baseline,
            Drift::RandomWalk { sigma } => self.walks.value(self.seed, channel, field.baseline, *sigma, round),
            Drift::Scripted(points) => points
                .iter()
                .take_while(|(r, _)| *r <= round)
                .last()
                .map(|(_, v)| *v)
                .unwrap_or(field.baseline),
        })
    }

    /// Truth at one node, including its configured offset.
    pub fn truth_for(&self, node: &NodeId, channel: Channel, round: u64) -> Result<f64, EnvError> {
        let offset = self
            .offsets
            .get(&(node.clone(), channel))
            .copied()
            .unwrap_or(0.0);
        Ok(self.truth_at(channel, round)? + offset)
    }
}
