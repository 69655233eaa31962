//! Adaptation algorithms behind a single decision interface.
//!
//! Every algorithm sees the same [`DecisionContext`] after each completed
//! download and answers with the next segment's level plus an optional delay
//! before the request goes out.

mod abma;
mod bba;
mod bola;
mod buffer_map;
mod conventional;
mod panda;

pub use abma::{Abma, AbmaParams};
pub use bba::{Bba, BbaParams};
pub use bola::{Bola, BolaParams, BolaVariant};
pub use buffer_map::{precompute_buffer_map, BufferMap, BufferMapCache, BufferMapError, GridSpec};
pub use conventional::{Conventional, ConventionalParams};
pub use panda::{Panda, PandaParams};

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::video::RepresentationLadder;

#[derive(Debug, Error, PartialEq)]
pub enum AbrError {
    #[error("unknown algorithm `{0}`")]
    UnknownAlgorithm(String),
    #[error("{algorithm}: unknown parameter `{key}`")]
    UnknownParam { algorithm: String, key: String },
    #[error("{algorithm}: parameter `{key}` = {value} is invalid: {reason}")]
    InvalidParam {
        algorithm: String,
        key: String,
        value: f64,
        reason: String,
    },
    #[error(transparent)]
    BufferMap(#[from] BufferMapError),
}

/// The segment that just finished downloading.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LastSegment {
    pub level: usize,
    pub bits: u64,
    pub start: f64,
    pub end: f64,
}

impl LastSegment {
    pub fn download_time(&self) -> f64 {
        self.end - self.start
    }

    /// Throughput measured over the download, bits/s.
    pub fn throughput(&self) -> f64 {
        self.bits as f64 / self.download_time()
    }
}

/// What an algorithm may observe when choosing the next segment.
#[derive(Debug, Clone, Copy)]
pub struct DecisionContext<'a> {
    /// Index of the segment about to be requested.
    pub k: usize,
    /// Seconds of media in the buffer.
    pub buffer: f64,
    pub last: Option<LastSegment>,
    pub clock: f64,
    pub ladder: &'a RepresentationLadder,
    /// Mean segment size per level, bits.
    pub avg_sizes: &'a [f64],
    pub b_max: f64,
}

impl DecisionContext<'_> {
    pub fn segment_duration(&self) -> f64 {
        self.ladder.segment_duration()
    }

    pub fn buffer_full(&self) -> bool {
        self.buffer + self.segment_duration() > self.b_max
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Decision {
    /// Zero-based ladder index.
    pub level: usize,
    /// Seconds to wait before issuing the request.
    pub delay: f64,
}

impl Decision {
    pub fn now(level: usize) -> Self {
        Self { level, delay: 0.0 }
    }
}

/// Exponentially weighted moving average: `alpha * sample + (1 - alpha) * prev`.
pub fn ewma(prev: f64, sample: f64, alpha: f64) -> f64 {
    alpha * sample + (1.0 - alpha) * prev
}

/// Hysteresis quantizer.
///
/// Moves up to the highest level at or below `rate * (1 - up_margin)` when
/// that beats the current level. Moves down (to the same target) only once
/// `rate * (1 + down_margin)` falls under the current level's rate.
/// Otherwise holds.
pub fn dead_zone_quantize(
    rate: f64,
    current: usize,
    ladder: &RepresentationLadder,
    up_margin: f64,
    down_margin: f64,
) -> usize {
    let current = current.min(ladder.top());
    let target = ladder.highest_at_most(rate * (1.0 - up_margin));
    if target > current || rate * (1.0 + down_margin) < ladder.rate(current) as f64 {
        target
    } else {
        current
    }
}

/// Algorithm family, as grouped for comparison.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AlgorithmClass {
    Throughput,
    Buffer,
    Time,
}

impl fmt::Display for AlgorithmClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            AlgorithmClass::Throughput => "throughput",
            AlgorithmClass::Buffer => "buffer",
            AlgorithmClass::Time => "time",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum AlgorithmKind {
    #[serde(rename = "conventional")]
    Conventional,
    #[serde(rename = "panda")]
    Panda,
    #[serde(rename = "bba")]
    Bba,
    #[serde(rename = "bola-u")]
    BolaU,
    #[serde(rename = "bola-o")]
    BolaO,
    #[serde(rename = "abma+")]
    AbmaPlus,
}

impl AlgorithmKind {
    pub const ALL: [AlgorithmKind; 6] = [
        AlgorithmKind::Conventional,
        AlgorithmKind::Panda,
        AlgorithmKind::Bba,
        AlgorithmKind::BolaU,
        AlgorithmKind::BolaO,
        AlgorithmKind::AbmaPlus,
    ];

    /// The five algorithms of the comparison matrix.
    pub const COMPARED: [AlgorithmKind; 5] = [
        AlgorithmKind::Conventional,
        AlgorithmKind::Panda,
        AlgorithmKind::Bba,
        AlgorithmKind::BolaO,
        AlgorithmKind::AbmaPlus,
    ];

    pub fn id(self) -> &'static str {
        match self {
            AlgorithmKind::Conventional => "conventional",
            AlgorithmKind::Panda => "panda",
            AlgorithmKind::Bba => "bba",
            AlgorithmKind::BolaU => "bola-u",
            AlgorithmKind::BolaO => "bola-o",
            AlgorithmKind::AbmaPlus => "abma+",
        }
    }

    pub fn class(self) -> AlgorithmClass {
        match self {
            AlgorithmKind::Conventional | AlgorithmKind::Panda => AlgorithmClass::Throughput,
            AlgorithmKind::Bba | AlgorithmKind::BolaU | AlgorithmKind::BolaO => {
                AlgorithmClass::Buffer
            }
            AlgorithmKind::AbmaPlus => AlgorithmClass::Time,
        }
    }
}

impl fmt::Display for AlgorithmKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.id())
    }
}

impl FromStr for AlgorithmKind {
    type Err = AbrError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let norm = s.trim().to_ascii_lowercase();
        match norm.as_str() {
            "conventional" => Ok(AlgorithmKind::Conventional),
            "panda" => Ok(AlgorithmKind::Panda),
            "bba" => Ok(AlgorithmKind::Bba),
            "bola" | "bola-u" => Ok(AlgorithmKind::BolaU),
            "bola-o" => Ok(AlgorithmKind::BolaO),
            "abma+" | "abma" | "abmaplus" => Ok(AlgorithmKind::AbmaPlus),
            _ => Err(AbrError::UnknownAlgorithm(s.to_string())),
        }
    }
}

/// Flat parameter overrides, keyed by name.
pub type ParamMap = BTreeMap<String, f64>;

/// An algorithm choice plus parameter overrides.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AlgorithmSpec {
    pub kind: AlgorithmKind,
    #[serde(default)]
    pub params: ParamMap,
}

impl AlgorithmSpec {
    pub fn new(kind: AlgorithmKind) -> Self {
        Self {
            kind,
            params: ParamMap::new(),
        }
    }

    pub fn with_param(mut self, key: &str, value: f64) -> Self {
        self.params.insert(key.to_string(), value);
        self
    }

    /// Instantiates the controller for a session. ABMA+ pulls its buffer
    /// map from `maps`, computing it on first use.
    pub fn build(
        &self,
        ladder: &RepresentationLadder,
        b_max: f64,
        omega: u32,
        maps: &BufferMapCache,
        seed: u64,
    ) -> Result<Controller, AbrError> {
        let tau = ladder.segment_duration();
        Ok(match self.kind {
            AlgorithmKind::Conventional => Controller::Conventional(Conventional::new(
                ConventionalParams::from_map(&self.params, tau)?,
            )),
            AlgorithmKind::Panda => {
                Controller::Panda(Panda::new(PandaParams::from_map(&self.params, tau, b_max)?))
            }
            AlgorithmKind::Bba => {
                Controller::Bba(Bba::new(BbaParams::from_map(&self.params, b_max)?))
            }
            AlgorithmKind::BolaU | AlgorithmKind::BolaO => {
                let variant = if self.kind == AlgorithmKind::BolaO {
                    BolaVariant::O
                } else {
                    BolaVariant::U
                };
                Controller::Bola(Bola::new(BolaParams::from_map(
                    &self.params,
                    variant,
                    tau,
                    b_max,
                )?))
            }
            AlgorithmKind::AbmaPlus => {
                let params = AbmaParams::from_map(&self.params)?;
                let map = maps.get_or_compute(ladder, b_max, omega, &params.grid, seed)?;
                Controller::Abma(Abma::new(params, map))
            }
        })
    }
}

impl fmt::Display for AlgorithmSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.kind)
    }
}

/// Per-session controller state.
#[derive(Debug, Clone)]
pub enum Controller {
    Conventional(Conventional),
    Panda(Panda),
    Bba(Bba),
    Bola(Bola),
    Abma(Abma),
}

impl Controller {
    pub fn decide(&mut self, ctx: &DecisionContext<'_>) -> Decision {
        let d = match self {
            Controller::Conventional(c) => c.decide(ctx),
            Controller::Panda(c) => c.decide(ctx),
            Controller::Bba(c) => c.decide(ctx),
            Controller::Bola(c) => c.decide(ctx),
            Controller::Abma(c) => c.decide(ctx),
        };
        debug_assert!(d.level < ctx.ladder.len());
        debug_assert!(d.delay >= 0.0);
        d
    }

    pub fn kind(&self) -> AlgorithmKind {
        match self {
            Controller::Conventional(_) => AlgorithmKind::Conventional,
            Controller::Panda(_) => AlgorithmKind::Panda,
            Controller::Bba(_) => AlgorithmKind::Bba,
            Controller::Bola(b) => match b.params().variant {
                BolaVariant::U => AlgorithmKind::BolaU,
                BolaVariant::O => AlgorithmKind::BolaO,
            },
            Controller::Abma(_) => AlgorithmKind::AbmaPlus,
        }
    }
}

/// Applies overrides from a flat map onto named fields.
pub(crate) struct ParamReader<'a> {
    algorithm: &'static str,
    map: &'a ParamMap,
    seen: Vec<&'static str>,
}

impl<'a> ParamReader<'a> {
    pub(crate) fn new(algorithm: &'static str, map: &'a ParamMap) -> Self {
        Self {
            algorithm,
            map,
            seen: Vec::new(),
        }
    }

    pub(crate) fn get(&mut self, key: &'static str, default: f64) -> f64 {
        self.seen.push(key);
        self.map.get(key).copied().unwrap_or(default)
    }

    pub(crate) fn check(
        &self,
        key: &str,
        value: f64,
        ok: bool,
        reason: &str,
    ) -> Result<(), AbrError> {
        if ok && value.is_finite() {
            Ok(())
        } else {
            Err(AbrError::InvalidParam {
                algorithm: self.algorithm.to_string(),
                key: key.to_string(),
                value,
                reason: reason.to_string(),
            })
        }
    }

    pub(crate) fn finish(self) -> Result<(), AbrError> {
        match self.map.keys().find(|k| !self.seen.contains(&k.as_str())) {
            Some(k) => Err(AbrError::UnknownParam {
                algorithm: self.algorithm.to_string(),
                key: k.clone(),
            }),
            None => Ok(()),
        }
    }
}

#[cfg(test)]
pub(crate) mod test_support {
    use super::*;

    pub fn ctx<'a>(
        ladder: &'a RepresentationLadder,
        avg_sizes: &'a [f64],
        buffer: f64,
        b_max: f64,
        last: Option<LastSegment>,
    ) -> DecisionContext<'a> {
        DecisionContext {
            k: last.map_or(0, |_| 1),
            buffer,
            last,
            clock: last.map_or(0.0, |l| l.end),
            ladder,
            avg_sizes,
            b_max,
        }
    }

    pub fn cbr_sizes(ladder: &RepresentationLadder) -> Vec<f64> {
        ladder
            .rates()
            .iter()
            .map(|&r| r as f64 * ladder.segment_duration())
            .collect()
    }

    /// A completed download that ran at `throughput` bits/s.
    pub fn last_at(level: usize, bits: u64, throughput: f64, end: f64) -> LastSegment {
        let d = bits as f64 / throughput;
        LastSegment {
            level,
            bits,
            start: end - d,
            end,
        }
    }
}
