use serde::{Deserialize, Serialize};

use super::EngineError;

/// One requested segment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SegmentRecord {
    /// Zero-based segment index.
    pub k: usize,
    /// Zero-based ladder index.
    pub level: usize,
    /// Nominal rate of `level`, bits/s.
    pub rate: u64,
    /// When the request went out. Requests carry no latency, so this is
    /// also the download start.
    pub request_time: f64,
    pub start: f64,
    /// Completion time, or the session end for a truncated download.
    pub end: f64,
    pub bits: u64,
    /// Buffer level when the level was chosen, seconds.
    pub buffer_at_decision: f64,
    /// Mean available throughput over `[start, end]`, bits/s.
    pub avg_throughput: f64,
    /// False for a download cut off by an outage that never ends.
    pub complete: bool,
}

/// An interval during which playback was stalled after it had started.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StallEvent {
    pub t_start: f64,
    pub t_end: f64,
    /// Segment the player was waiting for.
    pub segment: usize,
}

impl StallEvent {
    pub fn duration(&self) -> f64 {
        self.t_end - self.t_start
    }
}

/// Session-wide totals.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionSummary {
    pub algorithm: String,
    pub b_max: f64,
    pub omega: u32,
    pub segment_duration: f64,
    /// Highest ladder rate, bits/s.
    pub max_rate: u64,
    /// Media seconds played out.
    pub played: f64,
    /// Time from session start to first playback, or the whole session if
    /// playback never began.
    pub initial_buffering: f64,
    pub startup_time: Option<f64>,
    pub stall_time: f64,
    /// Media left in the buffer at the end.
    pub residual_buffer: f64,
    pub end_time: f64,
    pub total_bits: u64,
    /// Ended by an outage that outlasts the trace.
    pub truncated: bool,
}

/// Everything needed to recompute the QoE metrics of one session.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionLog {
    pub records: Vec<SegmentRecord>,
    pub stalls: Vec<StallEvent>,
    pub summary: SessionSummary,
}

#[derive(Debug, Serialize, Deserialize)]
struct CsvRow {
    k: usize,
    level: usize,
    rate_bps: u64,
    request_time: f64,
    start: f64,
    end: f64,
    bytes: u64,
    bits: u64,
    buffer_at_decision: f64,
    avg_throughput_bps: f64,
    complete: bool,
    beta: u8,
}

/// JSON sidecar: the summary plus stall events.
#[derive(Debug, Serialize, Deserialize)]
struct Sidecar {
    summary: SessionSummary,
    stalls: Vec<StallEvent>,
}

impl SessionLog {
    /// Segments requested, including a truncated final one.
    pub fn segment_count(&self) -> usize {
        self.records.len()
    }

    pub fn completed(&self) -> usize {
        self.records.iter().filter(|r| r.complete).count()
    }

    /// Rebuffering flag of segment `k`: a stall of positive length was
    /// attributed to it.
    pub fn beta(&self, k: usize) -> bool {
        self.stalls.iter().any(|s| s.segment == k && s.duration() > 0.0)
    }

    pub fn total_stall_time(&self) -> f64 {
        self.stalls.iter().map(StallEvent::duration).sum()
    }

    /// Per-segment CSV. Levels are written one-based.
    pub fn to_csv(&self) -> Result<String, EngineError> {
        let mut w = csv::Writer::from_writer(Vec::new());
        for r in &self.records {
            w.serialize(CsvRow {
                k: r.k,
                level: r.level + 1,
                rate_bps: r.rate,
                request_time: r.request_time,
                start: r.start,
                end: r.end,
                bytes: r.bits.div_ceil(8),
                bits: r.bits,
                buffer_at_decision: r.buffer_at_decision,
                avg_throughput_bps: r.avg_throughput,
                complete: r.complete,
                beta: self.beta(r.k) as u8,
            })
            .map_err(|e| EngineError::Format(e.to_string()))?;
        }
        let bytes = w.into_inner().map_err(|e| EngineError::Format(e.to_string()))?;
        String::from_utf8(bytes).map_err(|e| EngineError::Format(e.to_string()))
    }

    pub fn sidecar_json(&self) -> Result<String, EngineError> {
        let sidecar = Sidecar {
            summary: self.summary.clone(),
            stalls: self.stalls.clone(),
        };
        serde_json::to_string_pretty(&sidecar).map_err(|e| EngineError::Format(e.to_string()))
    }

    /// Reassembles a log from [`SessionLog::to_csv`] and
    /// [`SessionLog::sidecar_json`] output.
    pub fn from_parts(csv_text: &str, json_text: &str) -> Result<Self, EngineError> {
        let sidecar: Sidecar =
            serde_json::from_str(json_text).map_err(|e| EngineError::Format(e.to_string()))?;
        let mut rdr = csv::Reader::from_reader(csv_text.as_bytes());
        let mut records = Vec::new();
        for row in rdr.deserialize::<CsvRow>() {
            let row = row.map_err(|e| EngineError::Format(e.to_string()))?;
            if row.level == 0 {
                return Err(EngineError::Format(format!("segment {}: level must be >= 1", row.k)));
            }
            records.push(SegmentRecord {
                k: row.k,
                level: row.level - 1,
                rate: row.rate_bps,
                request_time: row.request_time,
                start: row.start,
                end: row.end,
                bits: row.bits,
                buffer_at_decision: row.buffer_at_decision,
                avg_throughput: row.avg_throughput_bps,
                complete: row.complete,
            });
        }
        Ok(Self {
            records,
            stalls: sidecar.stalls,
            summary: sidecar.summary,
        })
    }
}
