//! Discrete-event simulation of one streaming session.
//!
//! The client downloads segments one at a time over a throughput trace.
//! Playback starts once `omega` segments are buffered and drains the buffer
//! in real time. An empty buffer during playback opens a stall, which closes
//! once `omega` segments are buffered again.
//!
//! Requests are issued when the algorithm's delay has elapsed and the buffer
//! has room for one more segment. While playback is not running (initial
//! buffering or a stall) delays are ignored, and a delayed request is sent at
//! once if the buffer runs dry while it waits.
//!
//! No request is issued at or after the session end. A download in flight at
//! that point is allowed to finish. A download that can never finish because
//! the trace ends in an outage is logged as incomplete and ends the session.

mod events;
mod log;

pub use log::{SegmentRecord, SessionLog, SessionSummary, StallEvent};

use std::cmp::Reverse;
use std::collections::BinaryHeap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::abr::{
    AbrError, AlgorithmSpec, BufferMapCache, Controller, DecisionContext, LastSegment,
};
use crate::trace::{ThroughputTrace, TraceError};
use crate::video::{RepresentationLadder, SegmentSizeTable};
use events::{Event, EventKind};

/// Slack for floating-point comparisons of buffer levels, seconds.
const EPS: f64 = 1e-9;

#[derive(Debug, Error)]
pub enum EngineError {
    #[error("invalid client config: {0}")]
    Config(String),
    #[error(transparent)]
    Trace(#[from] TraceError),
    #[error(transparent)]
    Abr(#[from] AbrError),
    #[error("session log format: {0}")]
    Format(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClientConfig {
    /// Buffer capacity, seconds of media.
    pub b_max: f64,
    /// Segments needed to start or resume playback.
    pub omega: u32,
    pub segment_duration: f64,
    pub algorithm: AlgorithmSpec,
    /// Defaults to the trace duration.
    pub session_end: Option<f64>,
}

impl ClientConfig {
    pub fn new(algorithm: AlgorithmSpec, b_max: f64) -> Self {
        Self {
            b_max,
            omega: 2,
            segment_duration: crate::video::DEFAULT_SEGMENT_DURATION,
            algorithm,
            session_end: None,
        }
    }

    pub fn validate(&self, ladder: &RepresentationLadder) -> Result<(), EngineError> {
        let tau = self.segment_duration;
        if !(tau > 0.0 && tau.is_finite()) {
            return Err(EngineError::Config(format!("segment duration {tau} must be positive")));
        }
        if (tau - ladder.segment_duration()).abs() > EPS {
            return Err(EngineError::Config(format!(
                "segment duration {tau} differs from the ladder's {}",
                ladder.segment_duration()
            )));
        }
        if self.omega == 0 {
            return Err(EngineError::Config("omega must be at least 1".into()));
        }
        if !(self.b_max >= self.omega as f64 * tau) {
            return Err(EngineError::Config(format!(
                "b_max {} below omega * tau = {}",
                self.b_max,
                self.omega as f64 * tau
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Phase {
    InitialBuffering,
    Playing,
    Stalled,
}

/// Buffer occupancy and playback phase at an instant.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BufferState {
    pub level: f64,
    pub phase: Phase,
}

/// Runs a session with a private buffer-map cache.
pub fn run_session(
    trace: &ThroughputTrace,
    ladder: &RepresentationLadder,
    segments: &SegmentSizeTable,
    config: &ClientConfig,
    seed: u64,
) -> Result<SessionLog, EngineError> {
    run_session_cached(trace, ladder, segments, config, seed, &BufferMapCache::in_memory())
}

/// Runs a session, taking precomputed buffer maps from `maps`.
pub fn run_session_cached(
    trace: &ThroughputTrace,
    ladder: &RepresentationLadder,
    segments: &SegmentSizeTable,
    config: &ClientConfig,
    seed: u64,
    maps: &BufferMapCache,
) -> Result<SessionLog, EngineError> {
    config.validate(ladder)?;
    let controller = config
        .algorithm
        .build(ladder, config.b_max, config.omega, maps, seed)?;
    run_session_with(trace, ladder, segments, config, controller)
}

/// Runs a session with an already constructed controller.
pub fn run_session_with(
    trace: &ThroughputTrace,
    ladder: &RepresentationLadder,
    segments: &SegmentSizeTable,
    config: &ClientConfig,
    controller: Controller,
) -> Result<SessionLog, EngineError> {
    run_session_observed(trace, ladder, segments, config, controller, &mut |_, _| {})
}

/// Like [`run_session_with`], reporting the buffer state after every event.
/// Between reports the buffer drains at rate 1 while playing.
pub fn run_session_observed(
    trace: &ThroughputTrace,
    ladder: &RepresentationLadder,
    segments: &SegmentSizeTable,
    config: &ClientConfig,
    controller: Controller,
    observer: &mut dyn FnMut(f64, BufferState),
) -> Result<SessionLog, EngineError> {
    config.validate(ladder)?;
    if segments.levels() != ladder.len() {
        return Err(EngineError::Config(format!(
            "segment table has {} levels, ladder has {}",
            segments.levels(),
            ladder.len()
        )));
    }
    let session_end = config.session_end.unwrap_or(trace.duration());
    if !(session_end > 0.0 && session_end <= trace.duration()) {
        return Err(EngineError::Config(format!(
            "session end {session_end} outside (0, {}]",
            trace.duration()
        )));
    }
    Session::new(trace, ladder, segments, config, controller, session_end).run(observer)
}

#[derive(Debug, Clone, Copy)]
struct InFlight {
    k: usize,
    level: usize,
    bits: u64,
    start: f64,
    buffer_at_decision: f64,
}

#[derive(Debug, Clone, Copy)]
struct Pending {
    token: u64,
    k: usize,
    level: usize,
    buffer_at_decision: f64,
}

struct Session<'a> {
    trace: &'a ThroughputTrace,
    ladder: &'a RepresentationLadder,
    segments: &'a SegmentSizeTable,
    avg_sizes: Vec<f64>,
    config: &'a ClientConfig,
    controller: Controller,
    session_end: f64,

    queue: BinaryHeap<Reverse<Event>>,
    seq: u64,
    now: f64,
    buffer: f64,
    phase: Phase,
    played: f64,
    startup: Option<f64>,
    open_stall: Option<(f64, usize)>,
    stall_time: f64,
    drain_epoch: u64,
    wake_token: u64,
    in_flight: Option<InFlight>,
    pending: Option<Pending>,
    truncated: bool,
    last: Option<LastSegment>,
    last_completion: f64,

    records: Vec<SegmentRecord>,
    stalls: Vec<StallEvent>,
    total_bits: u64,
}

impl<'a> Session<'a> {
    fn new(
        trace: &'a ThroughputTrace,
        ladder: &'a RepresentationLadder,
        segments: &'a SegmentSizeTable,
        config: &'a ClientConfig,
        controller: Controller,
        session_end: f64,
    ) -> Self {
        Self {
            trace,
            ladder,
            segments,
            avg_sizes: segments.avg_segment_sizes(),
            config,
            controller,
            session_end,
            queue: BinaryHeap::new(),
            seq: 0,
            now: 0.0,
            buffer: 0.0,
            phase: Phase::InitialBuffering,
            played: 0.0,
            startup: None,
            open_stall: None,
            stall_time: 0.0,
            drain_epoch: 0,
            wake_token: 0,
            in_flight: None,
            pending: None,
            truncated: false,
            last: None,
            last_completion: 0.0,
            records: Vec::new(),
            stalls: Vec::new(),
            total_bits: 0,
        }
    }

    fn tau(&self) -> f64 {
        self.config.segment_duration
    }

    fn resume_threshold(&self) -> f64 {
        self.config.omega as f64 * self.tau()
    }

    fn push(&mut self, time: f64, kind: EventKind) {
        self.seq += 1;
        self.queue.push(Reverse(Event {
            time,
            kind,
            seq: self.seq,
        }));
    }

    /// Moves the clock to `t`, draining the buffer if playing.
    fn advance(&mut self, t: f64) {
        assert!(t >= self.now, "event at {t} precedes clock {}", self.now);
        if self.phase == Phase::Playing {
            let dt = (t - self.now).min(self.buffer);
            debug_assert!(t - self.now <= self.buffer + EPS);
            self.buffer -= dt;
            self.played += dt;
        }
        self.now = t;
    }

    fn state(&self) -> BufferState {
        BufferState {
            level: self.buffer,
            phase: self.phase,
        }
    }

    fn schedule_drain(&mut self) {
        self.drain_epoch += 1;
        let epoch = self.drain_epoch;
        self.push(self.now + self.buffer, EventKind::BufferDrain { epoch });
    }

    /// Segment the player is waiting on.
    fn awaited_segment(&self) -> usize {
        if let Some(f) = self.in_flight {
            f.k
        } else if let Some(p) = self.pending {
            p.k
        } else if self.truncated {
            self.records.last().map_or(0, |r| r.k)
        } else {
            self.records.len()
        }
    }

    fn run(
        mut self,
        observer: &mut dyn FnMut(f64, BufferState),
    ) -> Result<SessionLog, EngineError> {
        self.decide_and_schedule();
        observer(self.now, self.state());
        while let Some(Reverse(event)) = self.queue.pop() {
            let horizon = self.session_end.max(self.last_completion);
            if self.in_flight.is_none() && event.time > horizon {
                break;
            }
            self.advance(event.time);
            match event.kind {
                EventKind::DownloadComplete => self.on_complete()?,
                EventKind::BufferDrain { epoch } => self.on_drain(epoch)?,
                EventKind::PlaybackStart | EventKind::PlaybackResume => self.on_playback(),
                EventKind::SchedulerWakeup { token } => self.on_wakeup(token)?,
            }
            debug_assert!(self.buffer >= 0.0 && self.buffer <= self.config.b_max + EPS);
            observer(self.now, self.state());
        }
        let log = self.finish();
        observer(log.summary.end_time, BufferState {
            level: log.summary.residual_buffer,
            phase: if log.stalls.last().is_some_and(|s| s.t_end == log.summary.end_time) {
                Phase::Stalled
            } else if log.summary.startup_time.is_some() {
                Phase::Playing
            } else {
                Phase::InitialBuffering
            },
        });
        Ok(log)
    }

    fn decide_and_schedule(&mut self) {
        let k = self.records.len();
        let ctx = DecisionContext {
            k,
            buffer: self.buffer,
            last: self.last,
            clock: self.now,
            ladder: self.ladder,
            avg_sizes: &self.avg_sizes,
            b_max: self.config.b_max,
        };
        let decision = self.controller.decide(&ctx);
        // a playback start due at this same instant counts as playing
        let draining =
            self.phase == Phase::Playing || self.buffer >= self.resume_threshold() - EPS;
        let at = if draining {
            let room = (self.buffer + self.tau() - self.config.b_max).max(0.0);
            self.now + decision.delay.max(room)
        } else {
            self.now
        };
        self.wake_token += 1;
        self.pending = Some(Pending {
            token: self.wake_token,
            k,
            level: decision.level,
            buffer_at_decision: self.buffer,
        });
        self.push(at, EventKind::SchedulerWakeup { token: self.wake_token });
    }

    fn on_wakeup(&mut self, token: u64) -> Result<(), EngineError> {
        match self.pending {
            Some(p) if p.token == token => {
                self.pending = None;
                self.issue(p)
            }
            _ => Ok(()),
        }
    }

    fn issue(&mut self, p: Pending) -> Result<(), EngineError> {
        if self.now >= self.session_end {
            return Ok(());
        }
        let bits = self.segments.size(p.level, p.k);
        match self.trace.download_time(self.now, bits as f64) {
            Ok(d) => {
                self.in_flight = Some(InFlight {
                    k: p.k,
                    level: p.level,
                    bits,
                    start: self.now,
                    buffer_at_decision: p.buffer_at_decision,
                });
                self.push(self.now + d, EventKind::DownloadComplete);
                Ok(())
            }
            Err(TraceError::Unbounded { .. }) => {
                self.records.push(SegmentRecord {
                    k: p.k,
                    level: p.level,
                    rate: self.ladder.rate(p.level),
                    request_time: self.now,
                    start: self.now,
                    end: self.session_end,
                    bits,
                    buffer_at_decision: p.buffer_at_decision,
                    avg_throughput: self.trace.mean_rate(self.now, self.session_end),
                    complete: false,
                });
                self.truncated = true;
                Ok(())
            }
            Err(e) => Err(e.into()),
        }
    }

    fn on_complete(&mut self) -> Result<(), EngineError> {
        let f = self.in_flight.take().expect("completion without a download");
        self.buffer += self.tau();
        self.records.push(SegmentRecord {
            k: f.k,
            level: f.level,
            rate: self.ladder.rate(f.level),
            request_time: f.start,
            start: f.start,
            end: self.now,
            bits: f.bits,
            buffer_at_decision: f.buffer_at_decision,
            avg_throughput: f.bits as f64 / (self.now - f.start),
            complete: true,
        });
        self.total_bits += f.bits;
        self.last = Some(LastSegment {
            level: f.level,
            bits: f.bits,
            start: f.start,
            end: self.now,
        });
        self.last_completion = self.now;

        match self.phase {
            Phase::Playing => self.schedule_drain(),
            Phase::InitialBuffering if self.buffer >= self.resume_threshold() - EPS => {
                self.push(self.now, EventKind::PlaybackStart)
            }
            Phase::Stalled if self.buffer >= self.resume_threshold() - EPS => {
                self.push(self.now, EventKind::PlaybackResume)
            }
            _ => {}
        }

        if self.now < self.session_end {
            self.decide_and_schedule();
        }
        Ok(())
    }

    fn on_drain(&mut self, epoch: u64) -> Result<(), EngineError> {
        if epoch != self.drain_epoch || self.phase != Phase::Playing {
            return Ok(());
        }
        self.buffer = 0.0;
        self.phase = Phase::Stalled;
        self.open_stall = Some((self.now, self.awaited_segment()));
        if let Some(p) = self.pending.take() {
            self.issue(p)?;
        }
        Ok(())
    }

    fn on_playback(&mut self) {
        if self.phase == Phase::Playing {
            return;
        }
        match self.open_stall.take() {
            Some((t_start, segment)) => self.close_stall(t_start, segment),
            None => self.startup = Some(self.now),
        }
        self.phase = Phase::Playing;
        self.schedule_drain();
    }

    fn close_stall(&mut self, t_start: f64, segment: usize) {
        self.stall_time += self.now - t_start;
        self.stalls.push(StallEvent {
            t_start,
            t_end: self.now,
            segment,
        });
    }

    fn finish(mut self) -> SessionLog {
        let end = if self.truncated {
            self.session_end
        } else {
            self.session_end.max(self.last_completion)
        };
        if end > self.now {
            self.advance(end);
        }
        if let Some((t_start, segment)) = self.open_stall.take() {
            self.close_stall(t_start, segment);
        }
        SessionLog {
            summary: SessionSummary {
                algorithm: self.config.algorithm.kind.id().to_string(),
                b_max: self.config.b_max,
                omega: self.config.omega,
                segment_duration: self.tau(),
                max_rate: self.ladder.max_rate(),
                played: self.played,
                initial_buffering: self.startup.unwrap_or(self.now),
                startup_time: self.startup,
                stall_time: self.stall_time,
                residual_buffer: self.buffer,
                end_time: self.now,
                total_bits: self.total_bits,
                truncated: self.truncated,
            },
            records: self.records,
            stalls: self.stalls,
        }
    }
}
