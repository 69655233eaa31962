//! Shared helpers for integration tests: random session logs and an exact
//! rational reference for the session metrics.
#![allow(dead_code)]

use abrsim::engine::{SegmentRecord, SessionLog, SessionSummary, StallEvent};
use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{Signed, ToPrimitive, Zero};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub const LADDER: [u64; 7] = [129_000, 378_000, 578_000, 985_000, 1_536_000, 2_353_000, 2_969_000];

/// A random but well-formed session log.
pub fn random_log(seed: u64) -> SessionLog {
    random_log_upto(seed, 80)
}

/// A random session log with between 1 and `max_k` segments.
pub fn random_log_upto(seed: u64, max_k: usize) -> SessionLog {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let k = rng.random_range(1..=max_k);
    let omega = rng.random_range(0..4u32);
    let tau = 4.0;
    let mut t = 0.0;
    let mut level = rng.random_range(0..LADDER.len());
    let mut records = Vec::with_capacity(k);
    for i in 0..k {
        if rng.random_bool(0.4) {
            level = rng.random_range(0..LADDER.len());
        }
        let rate = LADDER[level];
        let dt: f64 = rng.random_range(0.05..12.0);
        let throughput = if rng.random_bool(0.05) { 0.0 } else { rng.random_range(1e4..6e6) };
        records.push(SegmentRecord {
            k: i,
            level,
            rate,
            request_time: t,
            start: t,
            end: t + dt,
            bits: (rate as f64 * tau) as u64,
            buffer_at_decision: rng.random_range(0.0..60.0),
            avg_throughput: throughput,
            complete: true,
        });
        t += dt;
    }
    let mut stalls = Vec::new();
    for _ in 0..rng.random_range(0..=k.min(40)) {
        let t_start: f64 = rng.random_range(0.0..t.max(1.0));
        let len = if rng.random_bool(0.15) { 0.0 } else { rng.random_range(0.001..25.0) };
        stalls.push(StallEvent {
            t_start,
            t_end: t_start + len,
            segment: rng.random_range(0..k + 2),
        });
    }
    let played = if rng.random_bool(0.05) { 0.0 } else { rng.random_range(0.0..k as f64 * tau) };
    SessionLog {
        records,
        stalls,
        summary: SessionSummary {
            algorithm: "fuzz".into(),
            b_max: 30.0,
            omega,
            segment_duration: tau,
            max_rate: LADDER[LADDER.len() - 1],
            played,
            initial_buffering: 0.0,
            startup_time: None,
            stall_time: 0.0,
            residual_buffer: 0.0,
            end_time: t,
            total_bits: 0,
            truncated: false,
        },
    }
}

pub fn q(x: f64) -> BigRational {
    BigRational::from_float(x).expect("finite")
}

pub fn qi(x: u64) -> BigRational {
    BigRational::from_integer(BigInt::from(x))
}

/// Unreduced fraction; sums of many float-derived terms stay cheap
/// because no gcd is ever taken.
#[derive(Debug, Clone)]
pub struct Frac {
    pub num: BigInt,
    pub den: BigInt,
}

impl Frac {
    pub fn zero() -> Self {
        Self { num: BigInt::zero(), den: BigInt::from(1) }
    }

    pub fn add(&mut self, x: &BigRational) {
        if self.den == *x.denom() {
            self.num += x.numer();
        } else {
            self.num = &self.num * x.denom() + x.numer() * &self.den;
            self.den = &self.den * x.denom();
        }
    }

    /// Divides by a positive rational.
    pub fn div(&self, x: &BigRational) -> Self {
        Self { num: &self.num * x.denom(), den: &self.den * x.numer() }
    }

    /// `|g - self| <= tol * |self|`, decided exactly. Assumes a positive
    /// denominator.
    pub fn rel_close(&self, g: f64, tol: f64) -> bool {
        let (g, t) = (q(g), q(tol));
        let diff = (g.numer() * &self.den - &self.num * g.denom()).abs();
        diff * t.denom() <= t.numer() * self.num.abs() * g.denom()
    }
}

/// Exact metric values; `None` where the metric is undefined.
#[derive(Debug)]
pub struct Exact {
    pub a: Option<Frac>,
    pub af: BigRational,
    pub aa: Option<BigRational>,
    pub rd: Option<Frac>,
    pub rf: BigRational,
    pub switches: usize,
    pub jump_sum: u64,
    pub events: usize,
}

/// Computes the metrics from first principles in exact arithmetic.
pub fn exact_metrics(log: &SessionLog) -> Exact {
    let k = log.records.len();
    let r_max = qi(log.summary.max_rate);
    let mut a_sum = Frac::zero();
    let mut a_n = 0u64;
    for r in &log.records {
        if r.avg_throughput > 0.0 {
            let c = q(r.avg_throughput);
            let denom = if c < r_max { c } else { r_max.clone() };
            a_sum.add(&(qi(r.rate) / denom));
            a_n += 1;
        }
    }
    let mut switches = 0usize;
    let mut jump_sum = 0u64;
    for i in 1..k {
        let (x, y) = (log.records[i - 1].rate, log.records[i].rate);
        if x != y {
            switches += 1;
            jump_sum += x.max(y) - x.min(y);
        }
    }
    let omega = log.summary.omega as usize;
    let mut stall = Frac::zero();
    let mut flagged = vec![false; k];
    for s in &log.stalls {
        let d = q(s.t_end) - q(s.t_start);
        if d > BigRational::zero() && s.segment >= omega && s.segment < k {
            stall.add(&d);
            flagged[s.segment] = true;
        }
    }
    let events = flagged.iter().filter(|&&b| b).count();
    let kq = qi(k as u64);
    Exact {
        a: (a_n > 0).then(|| a_sum.div(&qi(a_n))),
        af: qi(switches as u64) / kq.clone(),
        aa: (switches > 0).then(|| qi(jump_sum) / (qi(switches as u64) * r_max.clone())),
        rd: (log.summary.played > 0.0).then(|| stall.div(&q(log.summary.played))),
        rf: qi(events as u64) / kq,
        switches,
        jump_sum,
        events,
    }
}

pub fn to_f64(x: &BigRational) -> f64 {
    x.to_f64().expect("representable")
}

/// Compares a report with the exact values: counts and ratios of integers
/// must match exactly, real-valued ratios within `tol` relative.
pub fn check_report(log: &SessionLog, tol: f64) -> Result<(), String> {
    let got = abrsim::metrics::MetricsReport::from_log(log).map_err(|e| e.to_string())?;
    let want = exact_metrics(log);
    let exact = |name: &str, g: Option<f64>, w: &Option<BigRational>| -> Result<(), String> {
        match (g, w) {
            (None, None) => Ok(()),
            (Some(g), Some(w)) if g == to_f64(w) => Ok(()),
            _ => Err(format!("{name}: got {g:?}, want {:?}", w.as_ref().map(to_f64))),
        }
    };
    let close = |name: &str, g: Option<f64>, w: &Option<Frac>| -> Result<(), String> {
        match (g, w) {
            (None, None) => Ok(()),
            (Some(g), Some(w)) if w.rel_close(g, tol) => Ok(()),
            _ => Err(format!("{name}: got {g:?}, reference defined: {}", w.is_some())),
        }
    };
    close("A", got.a, &want.a)?;
    exact("AF", Some(got.af), &Some(want.af.clone()))?;
    exact("AA", got.aa, &want.aa)?;
    close("RD", got.rd, &want.rd)?;
    exact("RF", Some(got.rf), &Some(want.rf.clone()))?;
    if got.switches != want.switches || got.jump_sum != want.jump_sum || got.rebuffer_events != want.events {
        return Err(format!(
            "counts: got ({}, {}, {}), want ({}, {}, {})",
            got.switches, got.jump_sum, got.rebuffer_events, want.switches, want.jump_sum, want.events
        ));
    }
    Ok(())
}

use abrsim::abr::{AlgorithmKind, AlgorithmSpec};
use abrsim::engine::ClientConfig;
use abrsim::trace::{Sample, ThroughputTrace, TraceLabel};
use abrsim::video::{synth_segments, RepresentationLadder, SegmentSizeTable};

pub struct Scenario {
    pub trace: ThroughputTrace,
    pub ladder: RepresentationLadder,
    pub table: SegmentSizeTable,
    pub config: ClientConfig,
}

/// A random trace with occasional zero-throughput holes, and a random client.
pub fn random_scenario(seed: u64) -> Scenario {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed_5eed);
    let duration = rng.random_range(40.0..500.0);
    let mut samples = Vec::new();
    let mut t = 0.0;
    while t < duration {
        let rate = if rng.random_bool(0.08) { 0.0 } else { rng.random_range(5e4..6e6) };
        samples.push(Sample { t, rate });
        t += rng.random_range(0.25..20.0);
    }
    samples.push(Sample { t, rate: rng.random_range(1e5..4e6) });
    let trace = ThroughputTrace::new(samples, TraceLabel::Custom("fuzz".into())).unwrap();
    let ladder = RepresentationLadder::default();
    let table = synth_segments(&ladder, rng.random_range(5..150), 0.15, rng.random()).unwrap();
    let kind = AlgorithmKind::ALL[rng.random_range(0..AlgorithmKind::ALL.len())];
    let omega = rng.random_range(1..4u32);
    let mut config = ClientConfig::new(AlgorithmSpec::new(kind), rng.random_range(omega as f64 * 4.0..120.0));
    config.omega = omega;
    Scenario { trace, ladder, table, config }
}

/// Checks time and data conservation of a session log.
pub fn conservation(log: &SessionLog, table: &SegmentSizeTable, b_max: f64) -> Result<(), String> {
    let s = &log.summary;
    let span = s.initial_buffering + s.played + s.stall_time;
    if (s.end_time - span).abs() > 1e-6 {
        return Err(format!("time: end {} vs span {span}", s.end_time));
    }
    let media = log.completed() as f64 * s.segment_duration;
    if (media - s.played - s.residual_buffer).abs() > 1e-6 {
        return Err(format!("media: {media} vs played {} + residual {}", s.played, s.residual_buffer));
    }
    let bits: u64 = log.records.iter().filter(|r| r.complete).map(|r| r.bits).sum();
    if bits != s.total_bits {
        return Err(format!("bits: {bits} vs {}", s.total_bits));
    }
    for r in &log.records {
        if r.bits != table.size(r.level, r.k) {
            return Err(format!("segment {}: {} bits, table has {}", r.k, r.bits, table.size(r.level, r.k)));
        }
        if r.start < r.request_time || r.end < r.start {
            return Err(format!("segment {}: times out of order", r.k));
        }
        if r.buffer_at_decision > b_max + 1e-9 {
            return Err(format!("segment {}: buffer {} above {b_max}", r.k, r.buffer_at_decision));
        }
    }
    if (log.total_stall_time() - s.stall_time).abs() > 1e-6 {
        return Err("stall list disagrees with summary".into());
    }
    Ok(())
}
