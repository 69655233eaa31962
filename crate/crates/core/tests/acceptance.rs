//! Acceptance suite. Runs every criterion, prints one PASS/FAIL line each
//! and exits non-zero if any failed.

mod common;

use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::process::ExitCode;
use std::sync::Arc;
use std::time::{Duration, Instant};

use abrsim::abr::{
    dead_zone_quantize, precompute_buffer_map, Abma, AbmaParams, AlgorithmKind, AlgorithmSpec, Bba, BbaParams,
    Bola, BolaParams, BolaVariant, BufferMapCache, DecisionContext, GridSpec, LastSegment,
};
use abrsim::engine::{run_session_cached, ClientConfig, SessionLog};
use abrsim::experiment::{derive_seed, run_matrix, validate_fig3, ExperimentConfig, ValidateConfig};
use abrsim::metrics::MetricsReport;
use abrsim::trace::{synth_mobile, MobileProfileSpec, Sample, ThroughputTrace, TraceLabel};
use abrsim::video::{synth_segments, RepresentationLadder};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

type Outcome = Result<String, String>;

fn timed(limit: Duration, f: impl FnOnce() -> Outcome) -> Outcome {
    let t0 = Instant::now();
    let detail = f()?;
    let took = t0.elapsed();
    if took > limit {
        return Err(format!("{detail}; took {took:.2?}, limit {limit:?}"));
    }
    Ok(format!("{detail}; {took:.2?}"))
}

fn metric_oracle() -> Outcome {
    timed(Duration::from_secs(10), || {
        let mut max_k = 0;
        for seed in 0..1000 {
            let log = common::random_log_upto(seed, 500);
            max_k = max_k.max(log.records.len());
            common::check_report(&log, 1e-12).map_err(|e| format!("log {seed}: {e}"))?;
        }
        Ok(format!("1000 logs agree with the exact reference (largest K {max_k})"))
    })
}

fn engine_conservation() -> Outcome {
    timed(Duration::from_secs(30), || {
        let maps = BufferMapCache::in_memory();
        let mut kinds = std::collections::BTreeSet::new();
        for seed in 0..100 {
            let s = common::random_scenario(seed);
            kinds.insert(s.config.algorithm.kind.id());
            let log = run_session_cached(&s.trace, &s.ladder, &s.table, &s.config, seed, &maps)
                .map_err(|e| format!("session {seed}: {e}"))?;
            common::conservation(&log, &s.table, s.config.b_max).map_err(|e| format!("session {seed}: {e}"))?;
        }
        Ok(format!("100 sessions conserve time and bits ({} algorithms)", kinds.len()))
    })
}

fn validation_checks() -> Outcome {
    timed(Duration::from_secs(5), || {
        let v = validate_fig3(&ValidateConfig::default()).map_err(|e| e.to_string())?;
        let mut parts = Vec::new();
        for id in ["a", "b", "c"] {
            let c = v.report.check(id).ok_or(format!("check {id} missing"))?;
            if !c.passed {
                return Err(format!("check {id} failed: {}", c.detail));
            }
            parts.push(format!("{id}: {}", c.detail));
        }
        Ok(parts.join(" | "))
    })
}

fn session(trace: &ThroughputTrace, kind: AlgorithmKind, b_max: f64, seg_seed: u64, maps: &BufferMapCache) -> SessionLog {
    let ladder = RepresentationLadder::default();
    let table = synth_segments(&ladder, 150, 0.15, seg_seed).unwrap();
    let cfg = ClientConfig::new(AlgorithmSpec::new(kind), b_max);
    run_session_cached(trace, &ladder, &table, &cfg, derive_seed(seg_seed, "buffer-map"), maps).unwrap()
}

fn buffer_size_effect() -> Outcome {
    timed(Duration::from_secs(60), || {
        let draws = 20;
        let maps = BufferMapCache::in_memory();
        let spec = MobileProfileSpec::normal(600.0).with_outage(300.0, 30.0);
        let mut parts = Vec::new();
        let mut failures = Vec::new();
        for kind in AlgorithmKind::ALL {
            let mut rf = [0.0; 2];
            for (j, b_max) in [16.0, 92.0].into_iter().enumerate() {
                for i in 0..draws {
                    let trace = synth_mobile(&spec, TraceLabel::Challenging, derive_seed(4, &format!("trace/{i}"))).unwrap();
                    let log = session(&trace, kind, b_max, derive_seed(4, &format!("segments/{i}")), &maps);
                    rf[j] += MetricsReport::from_log(&log).unwrap().rf / draws as f64;
                }
            }
            parts.push(format!("{} {:.4}>={:.4}", kind.id(), rf[0], rf[1]));
            if rf[0] < rf[1] {
                failures.push(kind.id());
            }
        }
        if failures.is_empty() {
            Ok(format!("mean RF at 16 s vs 92 s over {draws} draws: {}", parts.join(", ")))
        } else {
            Err(format!("RF(16) < RF(92) for {failures:?}: {}", parts.join(", ")))
        }
    })
}

fn outage_rd() -> Outcome {
    let maps = BufferMapCache::in_memory();
    let duration = 600.0;
    let mut worst: (f64, f64) = (f64::INFINITY, f64::NEG_INFINITY);
    let mut outside = Vec::new();
    for i in 0..5u64 {
        let base = synth_mobile(&MobileProfileSpec::normal(duration), TraceLabel::Normal, derive_seed(5, &format!("trace/{i}"))).unwrap();
        let cut = 0.75 * duration;
        let mut samples: Vec<Sample> = base.samples().iter().copied().filter(|s| s.t < cut).collect();
        samples.push(Sample { t: cut, rate: 0.0 });
        samples.push(Sample { t: duration, rate: 0.0 });
        let trace = ThroughputTrace::new(samples, TraceLabel::Challenging).unwrap();
        for kind in AlgorithmKind::ALL {
            let log = session(&trace, kind, 16.0, derive_seed(5, &format!("segments/{i}")), &maps);
            let rd = MetricsReport::from_log(&log).unwrap().rd.ok_or(format!("{} played nothing", kind.id()))?;
            worst = (worst.0.min(rd), worst.1.max(rd));
            if !(0.15..=0.45).contains(&rd) {
                outside.push(format!("{}@{i}={rd:.3}", kind.id()));
            }
        }
    }
    let summary = format!("RD range over 5 traces x 6 algorithms: [{:.4}, {:.4}]", worst.0, worst.1);
    if outside.is_empty() {
        Ok(summary)
    } else {
        Err(format!("{summary}; outside [0.15, 0.45]: {}", outside.join(", ")))
    }
}

fn ctx<'a>(ladder: &'a RepresentationLadder, sizes: &'a [f64], buffer: f64, last: Option<LastSegment>) -> DecisionContext<'a> {
    DecisionContext {
        k: 10,
        buffer,
        last,
        clock: 100.0,
        ladder,
        avg_sizes: sizes,
        b_max: 92.0,
    }
}

fn algorithm_properties() -> Outcome {
    timed(Duration::from_secs(30), || {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let ladder = RepresentationLadder::default();
        let tau = ladder.segment_duration();
        let mut checks = 0usize;
        for _ in 0..200 {
            let b_max: f64 = rng.random_range(12.0..120.0);
            let table = synth_segments(&ladder, 60, rng.random_range(0.0..0.4), rng.random()).unwrap();
            let sizes = table.avg_segment_sizes();

            // buffer-based: level never falls as the buffer grows
            let bba = Bba::new(BbaParams::defaults(b_max));
            let mut prev = 0;
            for i in 0..=400 {
                let level = bba.level_for(b_max * i as f64 / 400.0, &sizes);
                if level < prev {
                    return Err(format!("BBA level drops at buffer {}", b_max * i as f64 / 400.0));
                }
                prev = level;
                checks += 1;
            }

            // BOLA: argmax is non-decreasing in the queue length
            let bola_u = Bola::new(BolaParams::defaults(BolaVariant::U, tau, b_max));
            let mut prev = 0;
            for q in 0..=(b_max / tau).ceil() as usize {
                let level = bola_u.level_for_queue(q as f64, &sizes, tau);
                if level < prev {
                    return Err(format!("BOLA level falls from {prev} to {level} at Q={q}"));
                }
                prev = level;
                checks += 1;
            }

            // BOLA-O never exceeds BOLA-U from the same state
            for _ in 0..20 {
                let buffer = rng.random_range(0.0..b_max);
                let level = rng.random_range(0..ladder.len());
                let thr: f64 = rng.random_range(5e4..6e6);
                let bits = sizes[level] as u64;
                let last = LastSegment { level, bits, start: 0.0, end: bits as f64 / thr };
                let mut u = Bola::new(BolaParams::defaults(BolaVariant::U, tau, b_max));
                let mut o = Bola::new(BolaParams::defaults(BolaVariant::O, tau, b_max));
                let c = DecisionContext { b_max, ..ctx(&ladder, &sizes, buffer, Some(last)) };
                let (lu, lo) = (u.decide(&c).level, o.decide(&c).level);
                if lo > lu {
                    return Err(format!("BOLA-O picked {lo} above BOLA-U {lu}"));
                }
                checks += 1;
            }

            // dead zone: a constant estimate settles after one step
            let up: f64 = rng.random_range(0.0..0.3);
            let down: f64 = rng.random_range(0.0..0.3);
            let rate = rng.random_range(5e4..5e6);
            let mut level = rng.random_range(0..ladder.len());
            let first = dead_zone_quantize(rate, level, &ladder, up, down);
            level = first;
            for _ in 0..10 {
                let next = dead_zone_quantize(rate, level, &ladder, up, down);
                if next != first {
                    return Err(format!("dead zone oscillates at rate {rate}: {first} -> {next}"));
                }
                level = next;
                checks += 1;
            }
        }

        // time-based: the decision ignores the order of the window samples
        let grid = GridSpec { trials: 200, ..GridSpec::default() };
        let map = Arc::new(precompute_buffer_map(&ladder, 40.0, 2, &grid, 6).map_err(|e| e.to_string())?);
        let sizes: Vec<f64> = ladder.rates().iter().map(|&r| r as f64 * tau).collect();
        for _ in 0..100 {
            let n = rng.random_range(10..70);
            let samples: Vec<LastSegment> = (0..n)
                .map(|_| {
                    let level = rng.random_range(0..ladder.len());
                    let bits = sizes[level] as u64;
                    let thr: f64 = rng.random_range(1e5..6e6);
                    LastSegment { level, bits, start: 0.0, end: bits as f64 / thr }
                })
                .collect();
            // only the final window is order-free; the evicted prefix stays put
            let w = AbmaParams::default().window.min(n);
            let mut shuffled = samples.clone();
            let tail = &mut shuffled[n - w..];
            for i in (1..tail.len()).rev() {
                tail.swap(i, rng.random_range(0..=i));
            }
            let buffer = rng.random_range(0.0..40.0);
            let decide_all = |xs: &[LastSegment]| {
                let mut a = Abma::new(AbmaParams::default(), map.clone());
                let mut level = 0;
                for s in xs {
                    level = a.decide(&DecisionContext { b_max: 40.0, ..ctx(&ladder, &sizes, buffer, Some(*s)) }).level;
                }
                (level, a.estimate())
            };
            let (a, b) = (decide_all(&samples), decide_all(&shuffled));
            if a != b {
                return Err(format!("ABMA+ result depends on order: {a:?} vs {b:?}"));
            }
            checks += 1;
        }
        Ok(format!("{checks} property checks"))
    })
}

fn bundle_determinism() -> Outcome {
    let path = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs/mobile.toml");
    let mut cfg = ExperimentConfig::load(&path).map_err(|e| e.to_string())?;
    cfg.buffer_map_cache = None;
    let dirs = [tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap()];
    let mut sessions = 0;
    for d in &dirs {
        sessions = run_matrix(&cfg, d.path()).map_err(|e| e.to_string())?.sessions.len();
    }
    let (a, b) = (files(dirs[0].path()), files(dirs[1].path()));
    if a.is_empty() || a != b {
        return Err(format!("bundles differ ({} vs {} files)", a.len(), b.len()));
    }
    Ok(format!("{} files byte-identical across reruns ({sessions} sessions)", a.len()))
}

fn files(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut out = Vec::new();
    let mut stack = vec![dir.to_path_buf()];
    while let Some(d) = stack.pop() {
        for e in std::fs::read_dir(&d).unwrap() {
            let p = e.unwrap().path();
            if p.is_dir() {
                stack.push(p);
            } else {
                out.push((p.strip_prefix(dir).unwrap().display().to_string(), std::fs::read(&p).unwrap()));
            }
        }
    }
    out.sort();
    out
}

fn main() -> ExitCode {
    let criteria: [(&str, fn() -> Outcome); 7] = [
        ("1 metric oracle equivalence", metric_oracle),
        ("2 engine conservation", engine_conservation),
        ("3 square-wave behavioural checks", validation_checks),
        ("4 buffer-size effect on RF", buffer_size_effect),
        ("5 outage-dominated RD", outage_rd),
        ("6 algorithm property suite", algorithm_properties),
        ("7 bundle determinism", bundle_determinism),
    ];
    let mut failed = 0;
    for (name, f) in criteria {
        let result = catch_unwind(AssertUnwindSafe(f)).unwrap_or_else(|p| {
            Err(p.downcast_ref::<String>().cloned().or(p.downcast_ref::<&str>().map(|s| s.to_string())).unwrap_or_default())
        });
        match result {
            Ok(detail) => println!("PASS criterion {name}: {detail}"),
            Err(detail) => {
                failed += 1;
                println!("FAIL criterion {name}: {detail}");
            }
        }
    }
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
