//! Available-throughput traces.
//!
//! A trace is a piecewise-constant function of time: each sample's rate holds
//! from its timestamp until the next one. Past the final timestamp the last
//! rate is held, which only matters for a download that straddles the end of
//! the trace.

mod cdf;
mod io;
mod synth;

pub use cdf::{ecdf, quantile, EmpiricalCdf};
pub use io::{parse_trace, write_trace, ManifestEntry, ProfileManifest, TraceFormat};
pub use synth::{synth_controlled, synth_mobile, MobileProfileSpec, NORMAL_PROFILE_QUANTILES};

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum TraceError {
    #[error("line {line}: {msg}")]
    Parse { line: usize, msg: String },
    #[error("trace has no intervals (need at least two samples)")]
    Empty,
    #[error("line {line}: timestamp {t} does not increase")]
    Ordering { line: usize, t: f64 },
    #[error("{0}")]
    Domain(String),
    #[error("interval [{t0}, {t1}] outside trace [0, {duration}]")]
    Range { t0: f64, t1: f64, duration: f64 },
    /// The trace ends at zero throughput with bits still outstanding.
    #[error("download of {remaining} bits cannot finish: trace ends in an outage")]
    Unbounded { remaining: f64 },
    #[error("io: {0}")]
    Io(String),
}

/// Where a trace came from.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TraceLabel {
    Controlled,
    Normal,
    Challenging,
    Custom(String),
}

impl fmt::Display for TraceLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            TraceLabel::Controlled => f.write_str("controlled"),
            TraceLabel::Normal => f.write_str("normal"),
            TraceLabel::Challenging => f.write_str("challenging"),
            TraceLabel::Custom(s) => f.write_str(s),
        }
    }
}

impl FromStr for TraceLabel {
    type Err = std::convert::Infallible;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Ok(match s {
            "controlled" => TraceLabel::Controlled,
            "normal" => TraceLabel::Normal,
            "challenging" => TraceLabel::Challenging,
            other => TraceLabel::Custom(other.to_string()),
        })
    }
}

/// One throughput sample: rate in bits/s starting at `t` seconds.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Sample {
    pub t: f64,
    pub rate: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ThroughputTrace {
    samples: Vec<Sample>,
    label: TraceLabel,
}

impl ThroughputTrace {
    /// Validates and wraps a sample list.
    pub fn new(samples: Vec<Sample>, label: TraceLabel) -> Result<Self, TraceError> {
        if samples.len() < 2 {
            return Err(TraceError::Empty);
        }
        if samples[0].t != 0.0 {
            return Err(TraceError::Domain(format!(
                "first timestamp must be 0, got {}",
                samples[0].t
            )));
        }
        for (i, s) in samples.iter().enumerate() {
            if !s.t.is_finite() || !s.rate.is_finite() {
                return Err(TraceError::Domain(format!("sample {i} is not finite")));
            }
            if s.rate < 0.0 {
                return Err(TraceError::Domain(format!(
                    "sample {i} has negative throughput {}",
                    s.rate
                )));
            }
            if i > 0 && s.t <= samples[i - 1].t {
                return Err(TraceError::Ordering { line: i + 1, t: s.t });
            }
        }
        Ok(Self { samples, label })
    }

    pub fn samples(&self) -> &[Sample] {
        &self.samples
    }

    pub fn label(&self) -> &TraceLabel {
        &self.label
    }

    pub fn with_label(mut self, label: TraceLabel) -> Self {
        self.label = label;
        self
    }

    pub fn duration(&self) -> f64 {
        self.samples[self.samples.len() - 1].t
    }

    /// Rate held past the end of the trace.
    pub fn final_rate(&self) -> f64 {
        self.samples[self.samples.len() - 1].rate
    }

    pub fn min_rate(&self) -> f64 {
        self.interval_rates().fold(f64::INFINITY, f64::min)
    }

    pub fn max_rate(&self) -> f64 {
        self.interval_rates().fold(0.0, f64::max)
    }

    fn interval_rates(&self) -> impl Iterator<Item = f64> + '_ {
        self.samples[..self.samples.len() - 1].iter().map(|s| s.rate)
    }

    /// Instantaneous available throughput at `t` (held after the end).
    pub fn rate_at(&self, t: f64) -> f64 {
        self.samples[self.segment_index(t)].rate
    }

    /// Index of the sample whose interval contains `t`.
    fn segment_index(&self, t: f64) -> usize {
        let n = self.samples.len();
        if t >= self.samples[n - 1].t {
            return n - 1;
        }
        // partition_point: first sample with timestamp > t
        self.samples.partition_point(|s| s.t <= t).saturating_sub(1)
    }

    /// End of the piecewise-constant piece starting at sample `i`.
    fn piece_end(&self, i: usize) -> f64 {
        self.samples.get(i + 1).map_or(f64::INFINITY, |s| s.t)
    }

    /// Bits deliverable over `[t0, t1]`, holding the final rate past the end.
    pub fn volume(&self, t0: f64, t1: f64) -> f64 {
        debug_assert!(t0 <= t1);
        let mut i = self.segment_index(t0);
        let mut t = t0;
        let mut acc = 0.0;
        while t < t1 {
            let end = self.piece_end(i).min(t1);
            acc += self.samples[i].rate * (end - t);
            t = end;
            i += 1;
        }
        acc
    }

    /// Mean throughput over `[t0, t1]`; both ends must lie inside the trace.
    pub fn avg_throughput(&self, t0: f64, t1: f64) -> Result<f64, TraceError> {
        if !(t0 >= 0.0 && t0 < t1 && t1 <= self.duration()) {
            return Err(TraceError::Range {
                t0,
                t1,
                duration: self.duration(),
            });
        }
        Ok(self.volume(t0, t1) / (t1 - t0))
    }

    /// Mean throughput over `[t0, t1]` with the end-of-trace hold rule.
    pub fn mean_rate(&self, t0: f64, t1: f64) -> f64 {
        if t1 <= t0 {
            return self.rate_at(t0);
        }
        self.volume(t0, t1) / (t1 - t0)
    }

    /// Time needed to receive `bits` starting at `start`.
    ///
    /// Zero-rate pieces advance the clock without progress. If the trace ends
    /// at zero throughput before the transfer completes, returns
    /// [`TraceError::Unbounded`].
    pub fn download_time(&self, start: f64, bits: f64) -> Result<f64, TraceError> {
        if !(bits > 0.0) || !bits.is_finite() {
            return Err(TraceError::Domain(format!("download size must be positive, got {bits}")));
        }
        if !(start >= 0.0 && start < self.duration()) {
            return Err(TraceError::Range {
                t0: start,
                t1: start,
                duration: self.duration(),
            });
        }
        let mut i = self.segment_index(start);
        let mut t = start;
        let mut remaining = bits;
        loop {
            let rate = self.samples[i].rate;
            let end = self.piece_end(i);
            if end.is_infinite() {
                if rate <= 0.0 {
                    return Err(TraceError::Unbounded { remaining });
                }
                return Ok(t + remaining / rate - start);
            }
            let capacity = rate * (end - t);
            if capacity >= remaining {
                return Ok(t + remaining / rate - start);
            }
            remaining -= capacity;
            t = end;
            i += 1;
        }
    }
}
