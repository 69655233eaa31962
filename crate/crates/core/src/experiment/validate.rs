//! Behavioural checks on a square-wave throughput profile, one algorithm
//! per class.

use std::path::Path;

use serde::{Deserialize, Serialize};

use super::config::derive_seed;
use super::run::{fmt_num, to_json};
use super::{write_file, ExperimentError};
use crate::abr::{AbmaParams, AlgorithmKind, AlgorithmSpec, BufferMapCache, ConventionalParams};
use crate::engine::{run_session_observed, BufferState, ClientConfig, Phase, SessionLog};
use crate::trace::{synth_controlled, ThroughputTrace};
use crate::video::{synth_segments, RepresentationLadder};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ValidateConfig {
    pub high: f64,
    pub low: f64,
    pub phase: f64,
    pub duration: f64,
    pub b_max: f64,
    pub omega: u32,
    pub vbr_cv: f64,
    pub segment_count: usize,
    pub seed: u64,
    pub throughput_based: AlgorithmSpec,
    pub buffer_based: AlgorithmSpec,
    pub time_based: AlgorithmSpec,
}

impl Default for ValidateConfig {
    fn default() -> Self {
        Self {
            high: 4e6,
            low: 4e5,
            phase: 30.0,
            duration: 90.0,
            b_max: 92.0,
            omega: 2,
            vbr_cv: 0.15,
            segment_count: 150,
            seed: 1,
            throughput_based: AlgorithmSpec::new(AlgorithmKind::Conventional),
            buffer_based: AlgorithmSpec::new(AlgorithmKind::Bba),
            time_based: AlgorithmSpec::new(AlgorithmKind::AbmaPlus),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckResult {
    pub id: String,
    pub description: String,
    pub passed: bool,
    pub detail: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ValidationReport {
    pub config: ValidateConfig,
    pub checks: Vec<CheckResult>,
    pub passed: bool,
}

impl ValidationReport {
    pub fn check(&self, id: &str) -> Option<&CheckResult> {
        self.checks.iter().find(|c| c.id == id)
    }
}

/// Per-second view of one session.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeriesRow {
    pub t: f64,
    pub throughput: f64,
    pub rate: Option<u64>,
    /// One-based level.
    pub level: Option<usize>,
    pub buffer: f64,
}

#[derive(Debug, Clone)]
pub struct ClassRun {
    pub class: &'static str,
    pub log: SessionLog,
    pub series: Vec<SeriesRow>,
}

#[derive(Debug, Clone)]
pub struct Validation {
    pub report: ValidationReport,
    pub runs: Vec<ClassRun>,
}

fn run_class(
    class: &'static str,
    spec: &AlgorithmSpec,
    cfg: &ValidateConfig,
    trace: &ThroughputTrace,
    ladder: &RepresentationLadder,
    maps: &BufferMapCache,
) -> Result<ClassRun, ExperimentError> {
    let table = synth_segments(ladder, cfg.segment_count, cfg.vbr_cv, derive_seed(cfg.seed, "segments"))?;
    let client = ClientConfig {
        b_max: cfg.b_max,
        omega: cfg.omega,
        segment_duration: ladder.segment_duration(),
        algorithm: spec.clone(),
        session_end: None,
    };
    client.validate(ladder)?;
    let controller = spec.build(ladder, cfg.b_max, cfg.omega, maps, derive_seed(cfg.seed, "buffer-map"))?;
    let mut samples: Vec<(f64, BufferState)> = Vec::new();
    let log = run_session_observed(trace, ladder, &table, &client, controller, &mut |t, s| {
        samples.push((t, s))
    })?;
    let series = per_second(trace, &log, &samples);
    Ok(ClassRun { class, log, series })
}

fn per_second(trace: &ThroughputTrace, log: &SessionLog, samples: &[(f64, BufferState)]) -> Vec<SeriesRow> {
    let end = log.summary.end_time;
    (0..)
        .map(|i| i as f64)
        .take_while(|&t| t <= end)
        .map(|t| {
            let i = samples.partition_point(|(ts, _)| *ts <= t);
            let buffer = match i.checked_sub(1).map(|j| samples[j]) {
                Some((ts, s)) if s.phase == Phase::Playing => (s.level - (t - ts)).max(0.0),
                Some((_, s)) => s.level,
                None => 0.0,
            };
            let r = log.records.iter().rev().find(|r| r.start <= t);
            SeriesRow {
                t,
                throughput: trace.rate_at(t),
                rate: r.map(|r| r.rate),
                level: r.map(|r| r.level + 1),
                buffer,
            }
        })
        .collect()
}

/// Longest run of consecutive segments requested above the instantaneous
/// throughput, and how many such segments there were.
fn above_throughput(trace: &ThroughputTrace, log: &SessionLog) -> (usize, usize) {
    let (mut run, mut longest, mut total) = (0, 0, 0);
    for r in &log.records {
        if r.rate as f64 > trace.rate_at(r.start) {
            run += 1;
            total += 1;
            longest = longest.max(run);
        } else {
            run = 0;
        }
    }
    (longest, total)
}

fn check_ramp(log: &SessionLog, phase: f64) -> CheckResult {
    let first: Vec<_> = log.records.iter().filter(|r| r.start < phase).collect();
    let starts_low = first.first().is_some_and(|r| r.level == 0);
    let mut monotone = true;
    let mut max_step = 0usize;
    for w in first.windows(2) {
        if w[1].buffer_at_decision >= w[0].buffer_at_decision && w[1].level < w[0].level {
            monotone = false;
        }
        max_step = max_step.max(w[1].level.saturating_sub(w[0].level));
    }
    let mut levels: Vec<usize> = first.iter().map(|r| r.level).collect();
    levels.sort_unstable();
    levels.dedup();
    let passed = starts_low && monotone && max_step <= 2 && levels.len() >= 3;
    CheckResult {
        id: "a".into(),
        description: "buffer-based starts at the lowest level and climbs gradually as the buffer fills".into(),
        passed,
        detail: format!(
            "first level {}, non-decreasing while buffer grows: {monotone}, largest step {max_step}, distinct levels {}",
            first.first().map_or(0, |r| r.level + 1),
            levels.len()
        ),
    }
}

fn check_holding(trace: &ThroughputTrace, runs: &[&SessionLog], cfg: &ValidateConfig, tau: f64) -> CheckResult {
    let bound = (cfg.b_max / tau).ceil() as usize;
    let stats: Vec<(usize, usize)> = runs.iter().map(|l| above_throughput(trace, l)).collect();
    let longest = stats.iter().map(|s| s.0).max().unwrap_or(0);
    let total: usize = stats.iter().map(|s| s.1).sum();
    CheckResult {
        id: "b".into(),
        description: "buffer- and time-based may request above the available throughput, for a bounded run".into(),
        passed: total > 0 && longest <= bound,
        detail: format!(
            "above-throughput segments (buffer, time): {:?}, longest run {longest}, bound {bound}",
            stats.iter().map(|s| s.1).collect::<Vec<_>>()
        ),
    }
}

fn check_reaction(log: &SessionLog, step: f64, window: usize) -> CheckResult {
    let before = log.records.iter().rev().find(|r| r.start < step).map(|r| r.level);
    let k0 = log.records.iter().position(|r| r.end > step);
    let k1 = match (before, k0) {
        (Some(l0), Some(k0)) => log.records[k0 + 1..]
            .iter()
            .position(|r| r.level < l0)
            .map(|i| i + 1),
        _ => None,
    };
    let passed = k1.is_some_and(|d| (1..=window).contains(&d));
    CheckResult {
        id: "c".into(),
        description: "time-based reacts to a throughput drop after a delay of 1 to W segments".into(),
        passed,
        detail: format!(
            "level before drop {:?}, first affected segment {:?}, reaction after {:?} segments (W = {window})",
            before.map(|l| l + 1),
            k0,
            k1
        ),
    }
}

fn check_settles(log: &SessionLog, phase: f64, ladder: &RepresentationLadder, cfg: &ValidateConfig, up_margin: f64) -> CheckResult {
    let target = ladder.highest_at_most(cfg.high * (1.0 - up_margin));
    let last = log.records.iter().rev().find(|r| r.end <= phase).map(|r| r.level);
    let passed = last.is_some_and(|l| l.abs_diff(target) <= 1);
    CheckResult {
        id: "d".into(),
        description: "throughput-based settles within one level of the quantized rate on a constant phase".into(),
        passed,
        detail: format!("level at end of first phase {:?}, quantized target {}", last.map(|l| l + 1), target + 1),
    }
}

/// Runs the three classes on the square-wave profile and evaluates the
/// behavioural checks.
pub fn validate_fig3(cfg: &ValidateConfig) -> Result<Validation, ExperimentError> {
    let trace = synth_controlled(cfg.high, cfg.low, cfg.phase, cfg.duration)?;
    let ladder = RepresentationLadder::default();
    let maps = BufferMapCache::in_memory();
    let runs = vec![
        run_class("throughput", &cfg.throughput_based, cfg, &trace, &ladder, &maps)?,
        run_class("buffer", &cfg.buffer_based, cfg, &trace, &ladder, &maps)?,
        run_class("time", &cfg.time_based, cfg, &trace, &ladder, &maps)?,
    ];
    let tau = ladder.segment_duration();
    let window = if cfg.time_based.kind == AlgorithmKind::AbmaPlus {
        AbmaParams::from_map(&cfg.time_based.params)?.window
    } else {
        AbmaParams::default().window
    };
    let up_margin = if cfg.throughput_based.kind == AlgorithmKind::Conventional {
        ConventionalParams::from_map(&cfg.throughput_based.params, tau)?.up_margin
    } else {
        ConventionalParams::defaults(tau).up_margin
    };
    let checks = vec![
        check_ramp(&runs[1].log, cfg.phase),
        check_holding(&trace, &[&runs[1].log, &runs[2].log], cfg, tau),
        check_reaction(&runs[2].log, cfg.phase, window),
        check_settles(&runs[0].log, cfg.phase, &ladder, cfg, up_margin),
    ];
    let passed = checks.iter().all(|c| c.passed);
    Ok(Validation {
        report: ValidationReport {
            config: cfg.clone(),
            checks,
            passed,
        },
        runs,
    })
}

/// Writes `validation_report.json` and one `validation_<class>.csv` per class.
pub fn write_validation(out: &Path, v: &Validation) -> Result<(), ExperimentError> {
    write_file(&out.join("validation_report.json"), &to_json(&v.report)?)?;
    for run in &v.runs {
        let mut s = String::from("t,throughput_bps,rate_bps,level,buffer_s\n");
        for r in &run.series {
            s.push_str(&format!(
                "{},{},{},{},{}\n",
                fmt_num(r.t),
                fmt_num(r.throughput),
                r.rate.map(|x| x.to_string()).unwrap_or_default(),
                r.level.map(|x| x.to_string()).unwrap_or_default(),
                fmt_num(r.buffer)
            ));
        }
        write_file(&out.join(format!("validation_{}.csv", run.class)), &s)?;
    }
    Ok(())
}
