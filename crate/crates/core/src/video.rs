//! Encoded content: the bitrate ladder and per-segment sizes.

use std::fmt;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::trace::{quantile, EmpiricalCdf, TraceError};

#[derive(Debug, Error, PartialEq)]
pub enum VideoError {
    #[error("ladder needs at least two distinct rates, got {0}")]
    Degenerate(usize),
    #[error("invalid ladder: {0}")]
    Ladder(String),
    #[error("{0}")]
    Domain(String),
    #[error("segment table line {line}: {msg}")]
    Format { line: usize, msg: String },
    #[error(transparent)]
    Trace(#[from] TraceError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Resolution {
    pub width: u32,
    pub height: u32,
}

impl fmt::Display for Resolution {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}x{}", self.width, self.height)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Representation {
    /// Nominal rate in bits/s.
    pub rate: u64,
    #[serde(default)]
    pub resolution: Option<Resolution>,
}

/// Representations ordered by strictly increasing nominal rate.
///
/// Levels are addressed by zero-based index; level 0 is `R_min`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RepresentationLadder {
    levels: Vec<Representation>,
    segment_duration: f64,
}

/// Default content: the 7-rung Big Buck Bunny encoding with 4 s segments.
pub const DEFAULT_LADDER_KBPS: [u64; 7] = [129, 378, 578, 985, 1536, 2353, 2969];
const DEFAULT_RESOLUTIONS: [(u32, u32); 7] = [
    (320, 240),
    (480, 360),
    (854, 480),
    (1280, 720),
    (1280, 720),
    (1920, 1080),
    (1920, 1080),
];
/// The quantile levels the default ladder sits at in the normal profile.
pub const DEFAULT_LADDER_QUANTILES: [f64; 7] = [0.01, 0.05, 0.1, 0.25, 0.5, 0.75, 0.95];
pub const DEFAULT_SEGMENT_DURATION: f64 = 4.0;

impl RepresentationLadder {
    pub fn new(levels: Vec<Representation>, segment_duration: f64) -> Result<Self, VideoError> {
        if levels.is_empty() {
            return Err(VideoError::Ladder("ladder has no levels".into()));
        }
        if !(segment_duration > 0.0) || !segment_duration.is_finite() {
            return Err(VideoError::Ladder(format!(
                "segment duration must be positive, got {segment_duration}"
            )));
        }
        if levels[0].rate == 0 {
            return Err(VideoError::Ladder("rates must be positive".into()));
        }
        if levels.windows(2).any(|w| w[1].rate <= w[0].rate) {
            return Err(VideoError::Ladder("rates must strictly increase".into()));
        }
        Ok(Self {
            levels,
            segment_duration,
        })
    }

    pub fn from_rates(rates: &[u64], segment_duration: f64) -> Result<Self, VideoError> {
        let levels = rates
            .iter()
            .map(|&rate| Representation {
                rate,
                resolution: None,
            })
            .collect();
        Self::new(levels, segment_duration)
    }

    pub fn levels(&self) -> &[Representation] {
        &self.levels
    }

    pub fn len(&self) -> usize {
        self.levels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.levels.is_empty()
    }

    pub fn segment_duration(&self) -> f64 {
        self.segment_duration
    }

    pub fn rate(&self, level: usize) -> u64 {
        self.levels[level].rate
    }

    pub fn rates(&self) -> Vec<u64> {
        self.levels.iter().map(|l| l.rate).collect()
    }

    pub fn min_rate(&self) -> u64 {
        self.levels[0].rate
    }

    pub fn max_rate(&self) -> u64 {
        self.levels[self.levels.len() - 1].rate
    }

    pub fn top(&self) -> usize {
        self.levels.len() - 1
    }

    /// Highest level whose nominal rate does not exceed `rate`, or level 0.
    pub fn highest_at_most(&self, rate: f64) -> usize {
        self.levels
            .partition_point(|l| l.rate as f64 <= rate)
            .saturating_sub(1)
    }
}

impl Default for RepresentationLadder {
    fn default() -> Self {
        let levels = DEFAULT_LADDER_KBPS
            .iter()
            .zip(DEFAULT_RESOLUTIONS)
            .map(|(&kbps, (width, height))| Representation {
                rate: kbps * 1000,
                resolution: Some(Resolution { width, height }),
            })
            .collect();
        Self::new(levels, DEFAULT_SEGMENT_DURATION).expect("default ladder is valid")
    }
}

/// Picks one rate per quantile of a throughput distribution, dropping
/// repeats so the ladder stays strictly increasing.
pub fn ladder_from_quantiles(
    cdf: &EmpiricalCdf,
    quantiles: &[f64],
    segment_duration: f64,
) -> Result<RepresentationLadder, VideoError> {
    if quantiles.windows(2).any(|w| w[1] <= w[0])
        || quantiles.iter().any(|&q| !(q > 0.0 && q < 1.0))
    {
        return Err(VideoError::Domain(
            "quantiles must be strictly increasing inside (0, 1)".into(),
        ));
    }
    let mut rates: Vec<u64> = Vec::with_capacity(quantiles.len());
    for &q in quantiles {
        let r = quantile(cdf, q)?.round() as u64;
        if r > 0 && rates.last().is_none_or(|&last| r > last) {
            rates.push(r);
        }
    }
    if rates.len() < 2 {
        return Err(VideoError::Degenerate(rates.len()));
    }
    RepresentationLadder::from_rates(&rates, segment_duration)
}

/// Segment sizes in bits, `sizes[level][segment]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SegmentSizeTable {
    sizes: Vec<Vec<u64>>,
    /// Number of segment indices where a higher level is not strictly larger.
    monotonicity_violations: usize,
}

impl SegmentSizeTable {
    pub fn new(sizes: Vec<Vec<u64>>) -> Result<Self, VideoError> {
        if sizes.is_empty() || sizes[0].is_empty() {
            return Err(VideoError::Domain("segment table is empty".into()));
        }
        let count = sizes[0].len();
        if sizes.iter().any(|row| row.len() != count) {
            return Err(VideoError::Domain("ragged segment table".into()));
        }
        if sizes.iter().flatten().any(|&s| s == 0) {
            return Err(VideoError::Domain("segment sizes must be positive".into()));
        }
        let monotonicity_violations = (0..count)
            .filter(|&k| sizes.windows(2).any(|w| w[1][k] <= w[0][k]))
            .count();
        Ok(Self {
            sizes,
            monotonicity_violations,
        })
    }

    pub fn levels(&self) -> usize {
        self.sizes.len()
    }

    /// `K_total`, the movie length in segments.
    pub fn segment_count(&self) -> usize {
        self.sizes[0].len()
    }

    /// Size of segment `k`, looping the movie.
    pub fn size(&self, level: usize, k: usize) -> u64 {
        let row = &self.sizes[level];
        row[k % row.len()]
    }

    pub fn row(&self, level: usize) -> &[u64] {
        &self.sizes[level]
    }

    pub fn monotonicity_violations(&self) -> usize {
        self.monotonicity_violations
    }

    /// True when some segment breaks cross-level ordering, which real
    /// encodes occasionally do.
    pub fn has_warnings(&self) -> bool {
        self.monotonicity_violations > 0
    }

    pub fn avg_segment_size(&self, level: usize) -> Result<f64, VideoError> {
        let row = self
            .sizes
            .get(level)
            .ok_or_else(|| VideoError::Domain(format!("no level {level}")))?;
        let total: u128 = row.iter().map(|&s| s as u128).sum();
        Ok(total as f64 / row.len() as f64)
    }

    pub fn avg_segment_sizes(&self) -> Vec<f64> {
        (0..self.levels())
            .map(|l| self.avg_segment_size(l).unwrap())
            .collect()
    }

    /// Writes `level,segment_index,bytes` rows (zero-based indices).
    /// Sizes that are not whole bytes are rounded up.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("level,segment_index,bytes\n");
        for (level, row) in self.sizes.iter().enumerate() {
            for (k, &bits) in row.iter().enumerate() {
                out.push_str(&format!("{level},{k},{}\n", bits.div_ceil(8)));
            }
        }
        out
    }
}

/// Draws a VBR table: every level scales the nominal segment size by the
/// same per-segment multiplier, so cross-level ordering is preserved.
///
/// Multipliers are log-normal with unit mean and coefficient of variation
/// `vbr_cv`, clipped to `[1 - 3 cv, 1 + 3 cv]`.
pub fn synth_segments(
    ladder: &RepresentationLadder,
    segment_count: usize,
    vbr_cv: f64,
    seed: u64,
) -> Result<SegmentSizeTable, VideoError> {
    if segment_count == 0 {
        return Err(VideoError::Domain("segment count must be at least 1".into()));
    }
    if !(0.0..0.5).contains(&vbr_cv) {
        return Err(VideoError::Domain(format!("vbr_cv {vbr_cv} outside [0, 0.5)")));
    }
    let tau = ladder.segment_duration();
    let multipliers: Vec<f64> = if vbr_cv == 0.0 {
        vec![1.0; segment_count]
    } else {
        let sigma2 = (1.0 + vbr_cv * vbr_cv).ln();
        let sigma = sigma2.sqrt();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..segment_count)
            .map(|_| {
                let z: f64 = rng.sample(StandardNormal);
                (sigma * z - 0.5 * sigma2)
                    .exp()
                    .clamp(1.0 - 3.0 * vbr_cv, 1.0 + 3.0 * vbr_cv)
            })
            .collect()
    };
    let sizes = ladder
        .levels()
        .iter()
        .map(|rep| {
            let nominal = rep.rate as f64 * tau;
            multipliers
                .iter()
                .map(|f| ((nominal * f).round() as u64).max(1))
                .collect()
        })
        .collect();
    SegmentSizeTable::new(sizes)
}

/// Reads `level,segment_index,bytes` rows (zero-based) into a complete table.
pub fn load_segments(input: &[u8]) -> Result<SegmentSizeTable, VideoError> {
    let text = std::str::from_utf8(input).map_err(|e| VideoError::Format {
        line: 0,
        msg: e.to_string(),
    })?;
    let mut cells: Vec<(usize, usize, u64, usize)> = Vec::new();
    for (idx, raw) in text.lines().enumerate() {
        let line = idx + 1;
        let raw = raw.trim();
        if raw.is_empty() || raw.starts_with('#') {
            continue;
        }
        let fields: Vec<&str> = raw.split(',').map(str::trim).collect();
        let parsed = match fields.as_slice() {
            [l, k, b] => match (l.parse::<usize>(), k.parse::<usize>(), b.parse::<u64>()) {
                (Ok(l), Ok(k), Ok(b)) => Some((l, k, b)),
                _ => None,
            },
            _ => None,
        };
        match parsed {
            Some((l, k, b)) => cells.push((l, k, b, line)),
            None if cells.is_empty() && fields.first().is_some_and(|f| f.parse::<f64>().is_err()) => {
                continue
            }
            None => {
                return Err(VideoError::Format {
                    line,
                    msg: format!("expected `level,segment_index,bytes`, got `{raw}`"),
                })
            }
        }
    }
    if cells.is_empty() {
        return Err(VideoError::Format {
            line: 0,
            msg: "no rows".into(),
        });
    }
    let levels = cells.iter().map(|c| c.0).max().unwrap() + 1;
    let count = cells.iter().map(|c| c.1).max().unwrap() + 1;
    let mut grid: Vec<Vec<Option<u64>>> = vec![vec![None; count]; levels];
    for (l, k, bytes, line) in cells {
        if bytes == 0 {
            return Err(VideoError::Format {
                line,
                msg: "segment size must be positive".into(),
            });
        }
        if grid[l][k].replace(bytes * 8).is_some() {
            return Err(VideoError::Format {
                line,
                msg: format!("duplicate cell ({l}, {k})"),
            });
        }
    }
    let mut sizes = Vec::with_capacity(levels);
    for (l, row) in grid.into_iter().enumerate() {
        let mut out = Vec::with_capacity(count);
        for (k, cell) in row.into_iter().enumerate() {
            out.push(cell.ok_or_else(|| VideoError::Format {
                line: 0,
                msg: format!("missing cell (level {l}, segment {k})"),
            })?);
        }
        sizes.push(out);
    }
    SegmentSizeTable::new(sizes)
}
