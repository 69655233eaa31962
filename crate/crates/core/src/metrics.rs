//! Session QoE metrics and their aggregation.
//!
//! * `A`: mean of `R_k / min(R_max, C_k)` over segments, where `C_k` is the
//!   mean available throughput during segment k's download.
//! * `AF`: level switches per segment.
//! * `AA`: mean absolute rate jump per switch, over `R_max`.
//! * `RD`: stall time attributed to segments past the first `omega`, over
//!   played media time.
//! * `RF`: segments past the first `omega` that saw a stall, per segment.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::engine::SessionLog;

#[derive(Debug, Error, PartialEq)]
pub enum MetricsError {
    #[error("session has no segments")]
    Empty,
    #[error("no reports to aggregate")]
    NoReports,
}

/// Metrics of one session, with the integer counts they derive from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    /// Absent when every segment saw zero throughput.
    pub a: Option<f64>,
    /// Segments left out of `A` because their throughput was zero.
    pub a_excluded: usize,
    pub af: f64,
    /// Absent when there were no switches.
    pub aa: Option<f64>,
    /// Absent when nothing was played.
    pub rd: Option<f64>,
    pub rf: f64,
    /// Segments in the session.
    pub k: usize,
    /// Played media, seconds.
    pub l: f64,
    pub switches: usize,
    /// Sum of absolute rate jumps between consecutive segments, bits/s.
    pub jump_sum: u64,
    pub rebuffer_events: usize,
    /// Stall time counted by `RD`, seconds.
    pub rebuffer_time: f64,
    /// Degenerate inputs (zero-throughput segments or a truncated session).
    pub flagged: bool,
}

/// Returns `(A, excluded)`.
pub fn adaptability(log: &SessionLog) -> Result<(Option<f64>, usize), MetricsError> {
    if log.records.is_empty() {
        return Err(MetricsError::Empty);
    }
    let r_max = log.summary.max_rate as f64;
    let mut sum = 0.0;
    let mut used = 0usize;
    for r in &log.records {
        if r.avg_throughput > 0.0 {
            sum += r.rate as f64 / r_max.min(r.avg_throughput);
            used += 1;
        }
    }
    let excluded = log.records.len() - used;
    Ok(((used > 0).then(|| sum / used as f64), excluded))
}

fn switches_and_jumps(log: &SessionLog) -> (usize, u64) {
    log.records.windows(2).fold((0, 0), |(n, jumps), w| {
        let d = w[0].rate.abs_diff(w[1].rate);
        (n + (d != 0) as usize, jumps + d)
    })
}

pub fn adaptation_frequency(log: &SessionLog) -> Result<f64, MetricsError> {
    if log.records.is_empty() {
        return Err(MetricsError::Empty);
    }
    let (switches, _) = switches_and_jumps(log);
    Ok(switches as f64 / log.records.len() as f64)
}

pub fn adaptation_amplitude(log: &SessionLog) -> Result<Option<f64>, MetricsError> {
    if log.records.is_empty() {
        return Err(MetricsError::Empty);
    }
    let (switches, jumps) = switches_and_jumps(log);
    if switches == 0 {
        return Ok(None);
    }
    let denom = switches as u128 * log.summary.max_rate as u128;
    Ok(Some(jumps as f64 / denom as f64))
}

/// Segment indices that count towards `RD` and `RF`.
fn counted(log: &SessionLog, segment: usize) -> bool {
    segment >= log.summary.omega as usize && segment < log.records.len()
}

fn rebuffer_time(log: &SessionLog) -> f64 {
    log.stalls
        .iter()
        .filter(|s| s.duration() > 0.0 && counted(log, s.segment))
        .map(|s| s.duration())
        .sum()
}

fn rebuffer_events(log: &SessionLog) -> usize {
    let mut segs: Vec<usize> = log
        .stalls
        .iter()
        .filter(|s| s.duration() > 0.0 && counted(log, s.segment))
        .map(|s| s.segment)
        .collect();
    segs.sort_unstable();
    segs.dedup();
    segs.len()
}

pub fn rebuffer_duration(log: &SessionLog) -> Option<f64> {
    let l = log.summary.played;
    (l > 0.0).then(|| rebuffer_time(log) / l)
}

pub fn rebuffer_frequency(log: &SessionLog) -> Result<f64, MetricsError> {
    if log.records.is_empty() {
        return Err(MetricsError::Empty);
    }
    Ok(rebuffer_events(log) as f64 / log.records.len() as f64)
}

impl MetricsReport {
    pub fn from_log(log: &SessionLog) -> Result<Self, MetricsError> {
        let (a, a_excluded) = adaptability(log)?;
        let (switches, jump_sum) = switches_and_jumps(log);
        Ok(Self {
            a,
            a_excluded,
            af: adaptation_frequency(log)?,
            aa: adaptation_amplitude(log)?,
            rd: rebuffer_duration(log),
            rf: rebuffer_frequency(log)?,
            k: log.records.len(),
            l: log.summary.played,
            switches,
            jump_sum,
            rebuffer_events: rebuffer_events(log),
            rebuffer_time: rebuffer_time(log),
            flagged: a_excluded > 0 || log.summary.truncated,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Metric {
    A,
    Af,
    Aa,
    Rd,
    Rf,
}

impl Metric {
    pub const ALL: [Metric; 5] = [Metric::A, Metric::Af, Metric::Aa, Metric::Rd, Metric::Rf];

    pub fn id(self) -> &'static str {
        match self {
            Metric::A => "A",
            Metric::Af => "AF",
            Metric::Aa => "AA",
            Metric::Rd => "RD",
            Metric::Rf => "RF",
        }
    }

    pub fn of(self, r: &MetricsReport) -> Option<f64> {
        match self {
            Metric::A => r.a,
            Metric::Af => Some(r.af),
            Metric::Aa => r.aa,
            Metric::Rd => r.rd,
            Metric::Rf => Some(r.rf),
        }
    }
}

/// Mean with a normal-approximation 95% interval.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MetricStats {
    pub mean: Option<f64>,
    /// Sample standard deviation over `sqrt(n)`; absent for `n < 2`.
    pub std_err: Option<f64>,
    /// `1.96 * std_err`.
    pub half_width: Option<f64>,
    pub n: usize,
}

impl MetricStats {
    pub fn from_values(values: &[f64]) -> Self {
        let mut v = values.to_vec();
        v.sort_by(f64::total_cmp);
        let n = v.len();
        if n == 0 {
            return Self {
                mean: None,
                std_err: None,
                half_width: None,
                n,
            };
        }
        let mean = v.iter().sum::<f64>() / n as f64;
        let std_err = (n > 1).then(|| {
            let ss: f64 = v.iter().map(|x| (x - mean) * (x - mean)).sum();
            (ss / (n - 1) as f64).sqrt() / (n as f64).sqrt()
        });
        Self {
            mean: Some(mean),
            std_err,
            half_width: std_err.map(|s| 1.96 * s),
            n,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AggregateReport {
    pub a: MetricStats,
    pub af: MetricStats,
    pub aa: MetricStats,
    pub rd: MetricStats,
    pub rf: MetricStats,
    pub sessions: usize,
    pub flagged: usize,
}

impl AggregateReport {
    pub fn get(&self, metric: Metric) -> &MetricStats {
        match metric {
            Metric::A => &self.a,
            Metric::Af => &self.af,
            Metric::Aa => &self.aa,
            Metric::Rd => &self.rd,
            Metric::Rf => &self.rf,
        }
    }
}

/// Per-metric statistics; absent values are skipped, so `n` may differ
/// between metrics.
pub fn aggregate(reports: &[MetricsReport]) -> Result<AggregateReport, MetricsError> {
    if reports.is_empty() {
        return Err(MetricsError::NoReports);
    }
    let stats = |m: Metric| {
        let v: Vec<f64> = reports.iter().filter_map(|r| m.of(r)).collect();
        MetricStats::from_values(&v)
    };
    Ok(AggregateReport {
        a: stats(Metric::A),
        af: stats(Metric::Af),
        aa: stats(Metric::Aa),
        rd: stats(Metric::Rd),
        rf: stats(Metric::Rf),
        sessions: reports.len(),
        flagged: reports.iter().filter(|r| r.flagged).count(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::engine::{SegmentRecord, SessionSummary, StallEvent};

    /// Builds a log from `(rate, throughput)` pairs, one per segment.
    fn log_of(segs: &[(u64, f64)], max_rate: u64, played: f64) -> SessionLog {
        let records = segs
            .iter()
            .enumerate()
            .map(|(k, &(rate, tput))| SegmentRecord {
                k,
                level: 0,
                rate,
                request_time: k as f64,
                start: k as f64,
                end: k as f64 + 1.0,
                bits: rate * 4,
                buffer_at_decision: 0.0,
                avg_throughput: tput,
                complete: true,
            })
            .collect();
        SessionLog {
            records,
            stalls: Vec::new(),
            summary: SessionSummary {
                algorithm: "test".into(),
                b_max: 16.0,
                omega: 2,
                segment_duration: 4.0,
                max_rate,
                played,
                initial_buffering: 0.0,
                startup_time: Some(0.0),
                stall_time: 0.0,
                residual_buffer: 0.0,
                end_time: played,
                total_bits: 0,
                truncated: false,
            },
        }
    }

    fn stall(segment: usize, t_start: f64, t_end: f64) -> StallEvent {
        StallEvent {
            t_start,
            t_end,
            segment,
        }
    }

    #[test]
    fn adaptability_examples() {
        let log = log_of(&[(1_000_000, 2e6); 5], 3_000_000, 20.0);
        assert_eq!(adaptability(&log).unwrap(), (Some(0.5), 0));
        let log = log_of(&[(3_000_000, 10e6); 3], 3_000_000, 12.0);
        assert_eq!(adaptability(&log).unwrap(), (Some(1.0), 0));
        let log = log_of(&[(1_000_000, 1e6), (2_000_000, 2e6)], 3_000_000, 8.0);
        assert_eq!(adaptability(&log).unwrap(), (Some(1.0), 0));
    }

    #[test]
    fn zero_throughput_segments_are_excluded() {
        let log = log_of(&[(1_000_000, 2e6), (1_000_000, 0.0)], 3_000_000, 8.0);
        assert_eq!(adaptability(&log).unwrap(), (Some(0.5), 1));
        assert!(MetricsReport::from_log(&log).unwrap().flagged);
        let log = log_of(&[(1_000_000, 0.0)], 3_000_000, 0.0);
        assert_eq!(adaptability(&log).unwrap(), (None, 1));
    }

    #[test]
    fn frequency_and_amplitude_examples() {
        let m = 1_000_000;
        let log = log_of(&[(m, 1e6), (m, 1e6), (2 * m, 1e6), (2 * m, 1e6)], 4 * m, 16.0);
        assert_eq!(adaptation_frequency(&log).unwrap(), 0.25);
        let log = log_of(&[(m, 1e6), (2 * m, 1e6), (m, 1e6), (2 * m, 1e6)], 4 * m, 16.0);
        assert_eq!(adaptation_frequency(&log).unwrap(), 0.75);
        // one switch 1 -> 4 Mb/s in four segments
        let log = log_of(&[(m, 1e6), (m, 1e6), (4 * m, 1e6), (4 * m, 1e6)], 4 * m, 16.0);
        assert_eq!(adaptation_frequency(&log).unwrap(), 0.25);
        assert_eq!(adaptation_amplitude(&log).unwrap(), Some(0.75));
        let log = log_of(&[(m, 1e6); 4], 4 * m, 16.0);
        assert_eq!(adaptation_frequency(&log).unwrap(), 0.0);
        assert_eq!(adaptation_amplitude(&log).unwrap(), None);
        // adjacent levels of a uniform ladder
        let log = log_of(&[(m, 1e6), (2 * m, 1e6), (3 * m, 1e6), (2 * m, 1e6)], 3 * m, 16.0);
        assert_eq!(adaptation_amplitude(&log).unwrap(), Some(1.0 / 3.0));
    }

    #[test]
    fn empty_session_errors() {
        let log = log_of(&[], 1, 0.0);
        assert_eq!(adaptation_frequency(&log), Err(MetricsError::Empty));
        assert!(MetricsReport::from_log(&log).is_err());
    }

    #[test]
    fn rebuffer_examples() {
        let mut log = log_of(&[(1, 1.0); 30], 1, 120.0);
        assert_eq!(rebuffer_duration(&log), Some(0.0));
        assert_eq!(rebuffer_frequency(&log).unwrap(), 0.0);
        log.stalls.push(stall(10, 50.0, 80.0));
        assert_eq!(rebuffer_duration(&log), Some(0.25));
        // stalls on the first omega segments are not rebuffering
        let mut log = log_of(&[(1, 1.0); 10], 1, 40.0);
        log.stalls.push(stall(1, 0.0, 5.0));
        assert_eq!(rebuffer_duration(&log), Some(0.0));
        log.stalls.push(stall(4, 10.0, 11.0));
        assert_eq!(rebuffer_frequency(&log).unwrap(), 0.1);
        let mut log = log_of(&[(1, 1.0); 10], 1, 40.0);
        log.stalls = (2..10).map(|k| stall(k, k as f64, k as f64 + 0.5)).collect();
        assert_eq!(rebuffer_frequency(&log).unwrap(), 0.8);
        let log = log_of(&[(1, 1.0); 3], 1, 0.0);
        assert_eq!(rebuffer_duration(&log), None);
    }

    #[test]
    fn zero_length_stalls_change_nothing() {
        let mut log = log_of(&[(1, 1.0), (2, 1.0), (1, 1.0), (2, 1.0)], 2, 16.0);
        log.stalls.push(stall(3, 5.0, 6.0));
        let before = MetricsReport::from_log(&log).unwrap();
        log.stalls.push(stall(2, 9.0, 9.0));
        log.stalls.push(stall(3, 7.0, 7.0));
        assert_eq!(MetricsReport::from_log(&log).unwrap(), before);
    }

    #[test]
    fn aggregate_examples() {
        let log = log_of(&[(1_000_000, 2e6); 5], 3_000_000, 20.0);
        let r = MetricsReport::from_log(&log).unwrap();
        let one = aggregate(std::slice::from_ref(&r)).unwrap();
        assert_eq!(one.a.n, 1);
        assert_eq!(one.a.std_err, None);
        assert_eq!(one.aa.n, 0);
        let same = aggregate(&[r.clone(), r.clone(), r.clone()]).unwrap();
        assert_eq!(same.a.half_width, Some(0.0));
        assert_eq!(aggregate(&[]), Err(MetricsError::NoReports));
    }

    #[test]
    fn stats_match_hand_computation() {
        // mean 3, squared deviations 4+1+0+1+4 = 10, s^2 = 2.5
        let s = MetricStats::from_values(&[1.0, 2.0, 3.0, 4.0, 5.0]);
        assert_eq!(s.mean, Some(3.0));
        let se = (2.5f64).sqrt() / 5f64.sqrt();
        assert!((s.std_err.unwrap() - se).abs() < 1e-15);
        assert!((s.half_width.unwrap() - 1.96 * se).abs() < 1e-15);
        let t = MetricStats::from_values(&[5.0, 3.0, 1.0, 4.0, 2.0]);
        assert_eq!(s, t);
    }
}
