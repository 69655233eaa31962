use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::config::{ExperimentConfig, Prepared};
use super::{write_file, ExperimentError};
use crate::abr::BufferMapCache;
use crate::engine::{run_session_cached, ClientConfig, SessionLog};
use crate::metrics::{aggregate, AggregateReport, Metric, MetricStats, MetricsReport};
use crate::video::SegmentSizeTable;

/// One session of the matrix.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionRow {
    pub profile: String,
    pub algorithm: String,
    pub b_max: f64,
    pub trace_id: String,
    /// Log files relative to the bundle root, when written.
    pub log: Option<String>,
    pub metrics: Option<MetricsReport>,
    pub startup_time: Option<f64>,
    pub stall_time: Option<f64>,
    pub truncated: bool,
    pub error: Option<String>,
}

impl SessionRow {
    pub fn flagged(&self) -> bool {
        self.error.is_some() || self.metrics.as_ref().is_some_and(|m| m.flagged)
    }
}

/// Aggregate over one (profile, algorithm, buffer) cell.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AggregateCell {
    pub profile: String,
    pub algorithm: String,
    pub b_max: f64,
    /// Sessions that failed outright and are missing from `report`.
    pub failed: usize,
    pub report: Option<AggregateReport>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BundleSummary {
    pub schema_version: u32,
    pub seed: u64,
    pub sessions: usize,
    pub cells: usize,
    pub flagged: usize,
    pub failed: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunOutcome {
    pub sessions: Vec<SessionRow>,
    pub cells: Vec<AggregateCell>,
    pub summary: BundleSummary,
}

impl RunOutcome {
    /// True when any session failed or was flagged as degenerate.
    pub fn has_flagged(&self) -> bool {
        self.summary.flagged > 0 || self.summary.failed > 0
    }
}

struct Job<'a> {
    profile: &'a str,
    algorithm: usize,
    b_max: f64,
    trace: usize,
    profile_idx: usize,
}

pub(crate) fn fmt_num(x: f64) -> String {
    format!("{x}")
}

fn fmt_opt(x: Option<f64>) -> String {
    x.map(fmt_num).unwrap_or_default()
}

fn log_stem(profile: &str, algorithm: &str, b_max: f64, trace: &str) -> String {
    format!("logs/{profile}/{algorithm}/bmax-{}/{trace}", fmt_num(b_max))
}

/// Runs every (profile, algorithm, buffer, trace) session and writes the
/// bundle to `out`. Structural problems abort before any session runs;
/// per-session failures are recorded and the run continues.
pub fn run_matrix(cfg: &ExperimentConfig, out: &Path) -> Result<RunOutcome, ExperimentError> {
    cfg.validate()?;
    let prepared = cfg.prepare()?;
    let maps = match cfg.buffer_map_dir() {
        Some(dir) => BufferMapCache::on_disk(dir),
        None => BufferMapCache::in_memory(),
    };

    let mut algorithms: Vec<(String, usize)> = cfg
        .algorithms
        .iter()
        .enumerate()
        .map(|(i, a)| (a.label(), i))
        .collect();
    algorithms.sort();
    let mut b_values = cfg.b_max.clone();
    b_values.sort_by(f64::total_cmp);
    b_values.dedup();
    let mut profile_order: Vec<usize> = (0..prepared.profiles.len()).collect();
    profile_order.sort_by(|&a, &b| prepared.profiles[a].name.cmp(&prepared.profiles[b].name));

    // segment tables are shared by every session on the same trace
    let mut tables: BTreeMap<(usize, usize), SegmentSizeTable> = BTreeMap::new();
    let mut jobs = Vec::new();
    for &pi in &profile_order {
        let profile = &prepared.profiles[pi];
        let mut trace_order: Vec<usize> = (0..profile.traces.len()).collect();
        trace_order.sort_by(|&a, &b| profile.traces[a].id.cmp(&profile.traces[b].id));
        for &ti in &trace_order {
            tables.insert((pi, ti), cfg.segments_for(&prepared, &profile.traces[ti].id)?);
        }
        for (_, ai) in &algorithms {
            for &b_max in &b_values {
                for &ti in &trace_order {
                    jobs.push(Job {
                        profile: &profile.name,
                        algorithm: *ai,
                        b_max,
                        trace: ti,
                        profile_idx: pi,
                    });
                }
            }
        }
    }

    let map_seed = cfg.buffer_map_seed();
    let results: Vec<(SessionRow, Option<SessionLog>)> = jobs
        .par_iter()
        .map(|job| run_job(cfg, &prepared, &tables, &maps, map_seed, job))
        .collect();

    write_bundle(cfg, out, results)
}

fn run_job(
    cfg: &ExperimentConfig,
    prepared: &Prepared,
    tables: &BTreeMap<(usize, usize), SegmentSizeTable>,
    maps: &BufferMapCache,
    map_seed: u64,
    job: &Job<'_>,
) -> (SessionRow, Option<SessionLog>) {
    let alg = &cfg.algorithms[job.algorithm];
    let entry = &prepared.profiles[job.profile_idx].traces[job.trace];
    let table = &tables[&(job.profile_idx, job.trace)];
    let client = ClientConfig {
        b_max: job.b_max,
        omega: cfg.omega,
        segment_duration: prepared.ladder.segment_duration(),
        algorithm: alg.spec(),
        session_end: None,
    };
    let mut row = SessionRow {
        profile: job.profile.to_string(),
        algorithm: alg.label(),
        b_max: job.b_max,
        trace_id: entry.id.clone(),
        log: None,
        metrics: None,
        startup_time: None,
        stall_time: None,
        truncated: false,
        error: None,
    };
    let log = match run_session_cached(&entry.trace, &prepared.ladder, table, &client, map_seed, maps)
    {
        Ok(log) => log,
        Err(e) => {
            row.error = Some(e.to_string());
            return (row, None);
        }
    };
    row.startup_time = log.summary.startup_time;
    row.stall_time = Some(log.summary.stall_time);
    row.truncated = log.summary.truncated;
    match MetricsReport::from_log(&log) {
        Ok(m) => row.metrics = Some(m),
        Err(e) => row.error = Some(e.to_string()),
    }
    (row, Some(log))
}

fn write_bundle(
    cfg: &ExperimentConfig,
    out: &Path,
    results: Vec<(SessionRow, Option<SessionLog>)>,
) -> Result<RunOutcome, ExperimentError> {
    fs::create_dir_all(out).map_err(|e| ExperimentError::io(out, e))?;
    let mut sessions = Vec::with_capacity(results.len());
    for (mut row, log) in results {
        if let (true, Some(log)) = (cfg.write_logs, log) {
            let stem = log_stem(&row.profile, &row.algorithm, row.b_max, &row.trace_id);
            write_file(&out.join(format!("{stem}.csv")), &log.to_csv()?)?;
            write_file(&out.join(format!("{stem}.json")), &log.sidecar_json()?)?;
            row.log = Some(stem);
        }
        sessions.push(row);
    }
    let cells = aggregate_cells(&sessions)?;
    let summary = BundleSummary {
        schema_version: super::config::SCHEMA_VERSION,
        seed: cfg.seed,
        sessions: sessions.len(),
        cells: cells.len(),
        flagged: sessions.iter().filter(|s| s.flagged()).count(),
        failed: sessions.iter().filter(|s| s.error.is_some()).count(),
    };
    write_file(&out.join("sessions.csv"), &sessions_csv(&sessions)?)?;
    write_file(&out.join("sessions.json"), &to_json(&sessions)?)?;
    write_file(&out.join("aggregates.csv"), &aggregates_csv(&cells)?)?;
    write_file(&out.join("aggregates.json"), &to_json(&cells)?)?;
    write_file(&out.join("bundle.json"), &to_json(&summary)?)?;
    Ok(RunOutcome {
        sessions,
        cells,
        summary,
    })
}

pub(crate) fn to_json<T: Serialize>(value: &T) -> Result<String, ExperimentError> {
    let mut s = serde_json::to_string_pretty(value).map_err(|e| ExperimentError::Format(e.to_string()))?;
    s.push('\n');
    Ok(s)
}

/// Groups sessions (already in canonical order) into aggregate cells.
pub fn aggregate_cells(sessions: &[SessionRow]) -> Result<Vec<AggregateCell>, ExperimentError> {
    let mut cells: Vec<AggregateCell> = Vec::new();
    let mut reports: Vec<Vec<MetricsReport>> = Vec::new();
    for s in sessions {
        let same = cells.last().is_some_and(|c| {
            c.profile == s.profile && c.algorithm == s.algorithm && c.b_max == s.b_max
        });
        if !same {
            cells.push(AggregateCell {
                profile: s.profile.clone(),
                algorithm: s.algorithm.clone(),
                b_max: s.b_max,
                failed: 0,
                report: None,
            });
            reports.push(Vec::new());
        }
        let cell = cells.last_mut().expect("pushed above");
        match &s.metrics {
            Some(m) => reports.last_mut().expect("pushed above").push(m.clone()),
            None => cell.failed += 1,
        }
    }
    for (cell, r) in cells.iter_mut().zip(&reports) {
        cell.report = if r.is_empty() { None } else { Some(aggregate(r)?) };
    }
    Ok(cells)
}

fn csv_writer() -> csv::Writer<Vec<u8>> {
    csv::WriterBuilder::new().from_writer(Vec::new())
}

fn finish_csv(w: csv::Writer<Vec<u8>>) -> Result<String, ExperimentError> {
    let bytes = w.into_inner().map_err(|e| ExperimentError::Format(e.to_string()))?;
    String::from_utf8(bytes).map_err(|e| ExperimentError::Format(e.to_string()))
}

fn csv_err(e: csv::Error) -> ExperimentError {
    ExperimentError::Format(e.to_string())
}

fn sessions_csv(rows: &[SessionRow]) -> Result<String, ExperimentError> {
    let mut w = csv_writer();
    w.write_record([
        "profile", "algorithm", "b_max", "trace_id", "K", "L", "A", "A_excluded", "AF", "AA",
        "RD", "RF", "switches", "rebuffer_events", "stall_time", "startup_time", "truncated",
        "flagged", "error",
    ])
    .map_err(csv_err)?;
    for r in rows {
        let m = r.metrics.as_ref();
        w.write_record([
            r.profile.clone(),
            r.algorithm.clone(),
            fmt_num(r.b_max),
            r.trace_id.clone(),
            m.map(|m| m.k.to_string()).unwrap_or_default(),
            fmt_opt(m.map(|m| m.l)),
            fmt_opt(m.and_then(|m| m.a)),
            m.map(|m| m.a_excluded.to_string()).unwrap_or_default(),
            fmt_opt(m.map(|m| m.af)),
            fmt_opt(m.and_then(|m| m.aa)),
            fmt_opt(m.and_then(|m| m.rd)),
            fmt_opt(m.map(|m| m.rf)),
            m.map(|m| m.switches.to_string()).unwrap_or_default(),
            m.map(|m| m.rebuffer_events.to_string()).unwrap_or_default(),
            fmt_opt(r.stall_time),
            fmt_opt(r.startup_time),
            r.truncated.to_string(),
            r.flagged().to_string(),
            r.error.clone().unwrap_or_default(),
        ])
        .map_err(csv_err)?;
    }
    finish_csv(w)
}

fn aggregates_csv(cells: &[AggregateCell]) -> Result<String, ExperimentError> {
    let mut w = csv_writer();
    let mut header: Vec<String> = ["profile", "algorithm", "b_max", "sessions", "flagged", "failed"]
        .map(String::from)
        .to_vec();
    for m in Metric::ALL {
        for suffix in ["mean", "stderr", "ci_half_width", "n"] {
            header.push(format!("{}_{suffix}", m.id()));
        }
    }
    w.write_record(&header).map_err(csv_err)?;
    for c in cells {
        let mut rec = vec![
            c.profile.clone(),
            c.algorithm.clone(),
            fmt_num(c.b_max),
            c.report.as_ref().map_or(0, |r| r.sessions).to_string(),
            c.report.as_ref().map_or(0, |r| r.flagged).to_string(),
            c.failed.to_string(),
        ];
        for m in Metric::ALL {
            let s = c.report.as_ref().map(|r| *r.get(m)).unwrap_or(MetricStats::from_values(&[]));
            rec.push(fmt_opt(s.mean));
            rec.push(fmt_opt(s.std_err));
            rec.push(fmt_opt(s.half_width));
            rec.push(s.n.to_string());
        }
        w.write_record(&rec).map_err(csv_err)?;
    }
    finish_csv(w)
}

pub(crate) fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T, ExperimentError> {
    let text = fs::read_to_string(path).map_err(|e| ExperimentError::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| ExperimentError::Format(format!("{}: {e}", path.display())))
}

/// Rebuilds every aggregate from the per-session logs in a bundle.
pub fn recompute_aggregates(bundle: &Path) -> Result<Vec<AggregateCell>, ExperimentError> {
    let rows: Vec<SessionRow> = read_json(&bundle.join("sessions.json"))?;
    let mut rebuilt = Vec::with_capacity(rows.len());
    for row in rows {
        let mut fresh = SessionRow {
            metrics: None,
            ..row.clone()
        };
        if let Some(stem) = &row.log {
            let csv_path: PathBuf = bundle.join(format!("{stem}.csv"));
            let json_path: PathBuf = bundle.join(format!("{stem}.json"));
            let csv_text = fs::read_to_string(&csv_path).map_err(|e| ExperimentError::io(&csv_path, e))?;
            let json_text =
                fs::read_to_string(&json_path).map_err(|e| ExperimentError::io(&json_path, e))?;
            let log = SessionLog::from_parts(&csv_text, &json_text)?;
            fresh.metrics = MetricsReport::from_log(&log).ok();
        } else if row.error.is_none() {
            return Err(ExperimentError::Format(format!(
                "session {}/{}/{}/{} has no log to recompute from",
                row.profile, row.algorithm, row.b_max, row.trace_id
            )));
        }
        rebuilt.push(fresh);
    }
    aggregate_cells(&rebuilt)
}
